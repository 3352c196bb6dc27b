#pragma once

// Small random detector fixtures shared by unit and acceptance tests.

#include <vector>

#include "pcbdet/anchors.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet::testing {

/// 32x32 input, grids 4x4 and 2x2, 2 anchors, 4 bins, 3 classes.
inline DetectorConfig tiny_config() {
  DetectorConfig cfg;
  cfg.input_size = 32;
  cfg.num_classes = 3;
  cfg.anchors_per_scale = 2;
  cfg.dfl_bins = 4;
  cfg.stem_channels = 3;
  cfg.dw_channels = {4, 5};
  cfg.deep_channels = 6;
  cfg.head_width = 4;
  return cfg;
}

inline RawPrediction random_raw(const DetectorConfig& cfg, int batch, std::uint64_t seed, double spread = 2.0) {
  RawPrediction raw;
  for (int s = 0; s < cfg.num_scales(); ++s) {
    raw.push_back(Tensor::filled({batch, cfg.head_channels(), cfg.grid(s), cfg.grid(s)},
                                 UniformFill{-spread, spread, mix64(seed + static_cast<std::uint64_t>(s))}));
  }
  return raw;
}

inline std::vector<LabeledBox> random_gts(const DetectorConfig& cfg, int count, Rng& rng, double min_side = 4.0) {
  std::vector<LabeledBox> gts;
  const double lim = cfg.input_size;
  for (int i = 0; i < count; ++i) {
    const double w = rng.uniform(min_side, lim / 2);
    const double h = rng.uniform(min_side, lim / 2);
    const double x = rng.uniform(0, lim - w);
    const double y = rng.uniform(0, lim - h);
    gts.push_back({Box{x, y, x + w, y + h}, class_from_id(rng.uniform_int(0, cfg.num_classes - 1))});
  }
  return gts;
}

inline AnchorSet uniform_anchors(const DetectorConfig& cfg, double base = 6.0) {
  AnchorSet a;
  for (int s = 0; s < cfg.num_scales(); ++s) {
    std::vector<WH> scale;
    for (int k = 0; k < cfg.anchors_per_scale; ++k) {
      const double side = base * (s + 1) * (1.0 + 0.5 * k);
      scale.emplace_back(side, side);
    }
    a.per_scale.push_back(scale);
  }
  return a;
}

}  // namespace pcbdet::testing
