#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace pcbdet {

using WH = std::pair<double, double>;

/// Per scale (finest first): anchor (w, h) sorted by area.
struct AnchorSet {
  std::vector<std::vector<WH>> per_scale;

  void validate() const;
  friend bool operator==(const AnchorSet&, const AnchorSet&) = default;
};

/// IoU of two boxes sharing a centre.
double wh_iou(const WH& a, const WH& b);
/// Mean over boxes of the best IoU against any centroid.
double mean_best_iou(std::span<const WH> boxes, std::span<const WH> centroids);

struct KMeansResult {
  AnchorSet anchors;
  /// Mean best IoU after seeding and after every accepted update.
  std::vector<double> mean_iou_history;
};

/// Lloyd iterations with 1 - IoU distance, k-means++ seeding and median
/// centroids. An update that would lower the mean best IoU ends the run.
/// The k anchors are split across `num_scales` by area, smallest first.
KMeansResult kmeans_anchors(std::span<const WH> boxes, int k, int iters, std::uint64_t seed, int num_scales = 1);

}  // namespace pcbdet
