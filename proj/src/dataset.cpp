#include "pcbdet/dataset.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "pcbdet/errors.hpp"
#include "pcbdet/image_io.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

namespace fs = std::filesystem;
using nlohmann::json;

Split split_dataset(const std::vector<std::string>& items, double val_fraction, std::uint64_t seed) {
  if (items.empty()) throw ParameterError("split_dataset: no items");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParameterError("split_dataset: val_fraction must lie in (0,1)");
  const std::size_t n = items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  std::vector<bool> is_val(n, false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
  Split out;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.val : out.train).push_back(items[i]);
  return out;
}

std::vector<const ManifestEntry*> Manifest::with_split(const std::string& split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  json arr = json::array();
  for (const auto& e : manifest.entries) {
    arr.push_back({{"id", e.id},
                   {"image_path", e.image_path},
                   {"annotation_path", e.annotation_path},
                   {"split", e.split},
                   {"source", std::string(source_name(e.source))}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest " + path.string());
  f << json{{"entries", arr}}.dump(2) << '\n';
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 0);
  }
  Manifest m;
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.image_path = e.at("image_path").get<std::string>();
    entry.annotation_path = e.at("annotation_path").get<std::string>();
    entry.split = e.at("split").get<std::string>();
    entry.source = source_from_name(e.value("source", std::string("real")));
    m.entries.push_back(std::move(entry));
  }
  return m;
}

AnnotatedImage load_entry(const ManifestEntry& entry, const fs::path& root, const ClassMap& class_map) {
  std::ifstream f(root / entry.annotation_path);
  if (!f) throw IoError("cannot read annotation " + (root / entry.annotation_path).string());
  std::stringstream ss;
  ss << f.rdbuf();
  const VocAnnotation ann = parse_voc_annotation(ss.str(), class_map);
  AnnotatedImage img;
  img.image = read_png(root / entry.image_path);
  if (img.image.width != ann.width || img.image.height != ann.height) {
    throw ValidationError("annotation size disagrees with image for '" + entry.id + "'");
  }
  img.boxes = ann.boxes;
  img.source = entry.source;
  img.id = entry.id;
  return img;
}

ManifestEntry write_entry(const AnnotatedImage& img, const fs::path& root, const std::string& split) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "annotations");
  ManifestEntry e;
  e.id = img.id;
  e.image_path = "images/" + img.id + ".png";
  e.annotation_path = "annotations/" + img.id + ".xml";
  e.split = split;
  e.source = img.source;
  write_png(root / e.image_path, img.image);
  VocAnnotation ann{img.id + ".png", img.image.width, img.image.height, img.boxes};
  std::ofstream f(root / e.annotation_path);
  if (!f) throw IoError("cannot write annotation for '" + img.id + "'");
  f << write_voc_annotation(ann);
  return e;
}

}  // namespace pcbdet
