#include "pcbdet/report.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "pcbdet/errors.hpp"

namespace pcbdet {

using nlohmann::ordered_json;

std::string report_table(const EvalReport& r) {
  std::string out = std::string(kReportHeader) + "\n";
  out += fmt::format("all\t{}\t{}\t{:.2f}\t{:.2f}\t{:.2f}\t{:.2f}\n", r.images, r.instances, r.precision, r.recall,
                     r.map50, r.map50_95);
  for (const auto& c : r.classes) {
    if (c.no_gt) continue;
    out += fmt::format("{}\t{}\t{}\t{:.2f}\t{:.2f}\t{:.2f}\t{:.2f}\n", class_name(c.cls), c.images, c.instances,
                       c.precision, c.recall, c.map50, c.map50_95);
  }
  return out;
}

std::string report_to_json(const EvalReport& r, const std::string& extra) {
  ordered_json j = extra.empty() ? ordered_json::object() : ordered_json::parse(extra);
  j["images"] = r.images;
  j["instances"] = r.instances;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["map50"] = r.map50;
  j["map50_95"] = r.map50_95;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["false_negatives"] = r.false_negatives;
  ordered_json classes = ordered_json::array();
  for (const auto& c : r.classes) {
    ordered_json row;
    row["class"] = std::string(class_name(c.cls));
    row["images"] = c.images;
    row["instances"] = c.instances;
    row["precision"] = c.precision;
    row["recall"] = c.recall;
    row["confidence"] = c.confidence;
    row["ap"] = c.ap;
    row["map50"] = c.map50;
    row["map50_95"] = c.map50_95;
    row["no_gt"] = c.no_gt;
    classes.push_back(row);
  }
  j["classes"] = classes;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = ordered_json::parse(text);
    r.images = j.at("images").get<int>();
    r.instances = j.at("instances").get<int>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.map50 = j.at("map50").get<double>();
    r.map50_95 = j.at("map50_95").get<double>();
    r.true_positives = j.at("true_positives").get<int>();
    r.false_positives = j.at("false_positives").get<int>();
    r.false_negatives = j.at("false_negatives").get<int>();
    for (const auto& row : j.at("classes")) {
      ClassMetrics c;
      const auto name = row.at("class").get<std::string>();
      const auto cls = class_from_name(name);
      if (!cls) throw ClassError(name);
      c.cls = *cls;
      c.images = row.at("images").get<int>();
      c.instances = row.at("instances").get<int>();
      c.precision = row.at("precision").get<double>();
      c.recall = row.at("recall").get<double>();
      c.confidence = row.at("confidence").get<double>();
      c.ap = row.at("ap").get<std::array<double, kNumIouThresholds>>();
      c.map50 = row.at("map50").get<double>();
      c.map50_95 = row.at("map50_95").get<double>();
      c.no_gt = row.at("no_gt").get<bool>();
      r.classes.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad report JSON: ") + e.what(), 0);
  }
  return r;
}

std::string curves_csv(std::span<const EpochLosses> rows) {
  std::string out = std::string(kCurvesHeader) + "\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{},{}\n", r.epoch, r.split, r.box, r.cls, r.dfl);
  return out;
}

namespace {

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "' in curves CSV", line);
  return v;
}

}  // namespace

std::vector<EpochLosses> parse_curves_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCurvesHeader) throw ParseError("curves CSV header mismatch", 1);
  std::vector<EpochLosses> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParseError("curves CSV row needs 5 fields", n);
    EpochLosses r;
    r.epoch = static_cast<int>(parse_double(f[0], n));
    r.split = f[1];
    r.box = parse_double(f[2], n);
    r.cls = parse_double(f[3], n);
    r.dfl = parse_double(f[4], n);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pcbdet
