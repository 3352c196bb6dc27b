#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "pcbdet/detector.hpp"
#include "pcbdet/evaluate.hpp"

namespace pcbdet {

struct ThresholdSet {
  std::array<double, kNumClasses> confidence{};
  double nms_iou = 0.5;

  void validate() const;
  double of(DefectClass c) const { return confidence[static_cast<std::size_t>(class_id(c))]; }
  friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

/// Class-wise greedy NMS. Candidates are visited by descending score, then
/// ascending area, then input order; the returned indices are in keep order.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_thresh);
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh);

/// Per class, the observed score maximizing F1 against the gts at
/// `match_iou` (ties go to the higher score). Classes without gts, or with
/// no matching detection, get 1.0.
ThresholdSet calibrate_thresholds(std::span<const ImageDetections> val_dets, std::span<const ImageGts> val_gts,
                                  double match_iou = 0.5, double nms_iou = 0.5);

/// Keeps detections with score >= the threshold of their class, in order.
std::vector<Detection> filter_detections(std::span<const Detection> dets, const ThresholdSet& thresholds);

std::string thresholds_to_json(const ThresholdSet& t);
ThresholdSet thresholds_from_json(const std::string& text);

}  // namespace pcbdet
