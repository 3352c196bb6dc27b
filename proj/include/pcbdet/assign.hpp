#pragma once

#include <span>
#include <vector>

#include "pcbdet/anchors.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

inline constexpr int kBackground = -1;
inline constexpr int kDynamicKTopN = 10;

/// Ground-truth index per flat position, kBackground elsewhere.
struct Assignment {
  std::vector<int> gt_of;

  int num_positive() const;
  /// Flat positions assigned to gt `g`, ascending.
  std::vector<int> positions_of(int g) const;
};

/// Dynamic-k assignment for one image of a batch.
///
/// Candidates for a gt are slots whose cell centre lies inside it (edges
/// included). They are ranked by softmax(class)[gt class] * IoU(decoded, gt),
/// and the gt takes the top k = clamp(round(sum of its 10 largest candidate
/// IoUs), 1, 10). A slot claimed twice goes to the higher alignment (then the
/// lower gt index). Any gt left with nothing takes the free slot whose anchor
/// prior, centred on the cell, best overlaps it.
Assignment assign_targets(std::span<const LabeledBox> gts, const AnchorSet& anchors, const RawPrediction& raw,
                          int image, const DetectorConfig& cfg);

}  // namespace pcbdet
