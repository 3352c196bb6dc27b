#include "pcbdet/voc.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <sstream>

#include "pcbdet/errors.hpp"

namespace pcbdet {
namespace {

namespace pt = boost::property_tree;

double parse_number(const std::string& raw, const char* field) {
  std::string s = raw;
  const auto first = s.find_first_not_of(" \t\r\n");
  const auto last = s.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError(fmt::format("empty numeric field <{}>", field), 0);
  s = s.substr(first, last - first + 1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(fmt::format("field <{}> is not a number: '{}'", field, raw), 0);
  }
  return v;
}

const pt::ptree& child(const pt::ptree& node, const char* path) {
  const auto opt = node.get_child_optional(path);
  if (!opt) throw ParseError(fmt::format("missing element <{}>", path), 0);
  return *opt;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ClassMap default_class_map() {
  ClassMap m;
  for (int i = 0; i < kNumClasses; ++i) m.emplace(std::string(kClassNames[static_cast<std::size_t>(i)]), class_from_id(i));
  return m;
}

VocAnnotation parse_voc_annotation(const std::string& xml_text, const ClassMap& class_map) {
  pt::ptree tree;
  std::istringstream in(xml_text);
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed VOC XML: " + e.message(), e.line());
  }
  const pt::ptree& root = child(tree, "annotation");

  VocAnnotation ann;
  ann.filename = root.get<std::string>("filename", "");
  const pt::ptree& size = child(root, "size");
  const double w = parse_number(child(size, "width").data(), "width");
  const double h = parse_number(child(size, "height").data(), "height");
  if (w < 1 || h < 1 || w != static_cast<int>(w) || h != static_cast<int>(h)) {
    throw ValidationError(fmt::format("image size must be positive integers, got {}x{}", w, h));
  }
  ann.width = static_cast<int>(w);
  ann.height = static_cast<int>(h);

  for (const auto& [tag, obj] : root) {
    if (tag != "object") continue;
    const std::string name = child(obj, "name").data();
    const auto it = class_map.find(name);
    if (it == class_map.end()) throw ClassError(name);
    const pt::ptree& bb = child(obj, "bndbox");
    Box b{parse_number(child(bb, "xmin").data(), "xmin"), parse_number(child(bb, "ymin").data(), "ymin"),
          parse_number(child(bb, "xmax").data(), "xmax"), parse_number(child(bb, "ymax").data(), "ymax")};
    if (!b.valid()) {
      throw ValidationError(fmt::format("inverted box ({}, {}, {}, {}) for '{}'", b.xmin, b.ymin, b.xmax, b.ymax, name));
    }
    if (!b.within(ann.width, ann.height)) {
      throw ValidationError(fmt::format("box ({}, {}, {}, {}) outside {}x{} image", b.xmin, b.ymin, b.xmax, b.ymax,
                                        ann.width, ann.height));
    }
    ann.boxes.push_back({b, it->second});
  }
  return ann;
}

std::string write_voc_annotation(const VocAnnotation& ann) {
  std::string out = "<annotation>\n";
  out += fmt::format("  <filename>{}</filename>\n", escape(ann.filename));
  out += fmt::format("  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>\n",
                     ann.width, ann.height);
  for (const auto& lb : ann.boxes) {
    out += "  <object>\n";
    out += fmt::format("    <name>{}</name>\n", class_name(lb.cls));
    out += fmt::format(
        "    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n"
        "    </bndbox>\n",
        lb.box.xmin, lb.box.ymin, lb.box.xmax, lb.box.ymax);
    out += "  </object>\n";
  }
  out += "</annotation>\n";
  return out;
}

}  // namespace pcbdet
