#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcbdet/types.hpp"
#include "pcbdet/voc.hpp"

namespace pcbdet {

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// Seeded shuffle; the first round(val_fraction * N) shuffled ids go to
/// validation. Both parts keep the input's relative order.
Split split_dataset(const std::vector<std::string>& items, double val_fraction, std::uint64_t seed);

/// Validation fraction implied by the reference split (66 of 1386 images).
inline constexpr double kDefaultValFraction = 66.0 / 1386.0;

struct ManifestEntry {
  std::string id;
  std::string image_path;       // relative to the manifest's directory
  std::string annotation_path;  // relative to the manifest's directory
  std::string split;            // "train" | "val"
  Source source = Source::Real;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> with_split(const std::string& split) const;
};

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);

/// Reads the PNG and VOC annotation behind an entry.
AnnotatedImage load_entry(const ManifestEntry& entry, const std::filesystem::path& root,
                          const ClassMap& class_map = default_class_map());

/// Writes `img` as images/<id>.png + annotations/<id>.xml under `root` and
/// returns the matching manifest entry.
ManifestEntry write_entry(const AnnotatedImage& img, const std::filesystem::path& root, const std::string& split);

}  // namespace pcbdet
