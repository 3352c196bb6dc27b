#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "pcbdet/detector.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

using ImageDetections = std::vector<Detection>;
using ImageGts = std::vector<LabeledBox>;

struct MatchResult {
  /// Per image, per detection (input order): true positive?
  std::vector<std::vector<bool>> tp;
  /// Per image, per class: gts left unmatched.
  std::vector<std::array<int, kNumClasses>> fn;
};

/// Per image and class, detections are taken by descending score (input
/// order on ties). Each claims the unmatched gt of its class with the highest
/// IoU >= tau (lower gt index on ties); otherwise it is a false positive.
MatchResult match_detections(std::span<const ImageDetections> dets, std::span<const ImageGts> gts, double tau);

struct ApResult {
  double ap = 0.0;
  bool no_gt = false;
};

/// 101-point interpolated AP of flags already sorted by descending score.
ApResult average_precision(const std::vector<bool>& flags_sorted, int n_gt);

inline constexpr int kNumIouThresholds = 10;
/// 0.50, 0.55, ..., 0.95
double iou_threshold(int i);

struct ClassMetrics {
  DefectClass cls = DefectClass::MissingHole;
  int images = 0;
  int instances = 0;
  double precision = 0.0;
  double recall = 0.0;
  /// Confidence at which precision/recall were read (max F1 at IoU 0.5).
  double confidence = 1.0;
  std::array<double, kNumIouThresholds> ap{};
  double map50 = 0.0;
  double map50_95 = 0.0;
  bool no_gt = false;
};

/// Operating point of one class at IoU 0.5: the observed score maximizing F1
/// (ties go to the higher score).
struct OperatingPoint {
  double threshold = 1.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};
OperatingPoint best_f1_point(std::span<const double> scores_sorted, const std::vector<bool>& flags_sorted, int n_gt);

struct EvalReport {
  int images = 0;
  int instances = 0;
  /// Unweighted means over classes that have gts.
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  /// One entry per class id in [0, num_classes).
  std::vector<ClassMetrics> classes;
  /// Confusion counts at each class's operating point.
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

EvalReport evaluate(std::span<const ImageDetections> dets, std::span<const ImageGts> gts,
                    int num_classes = kNumClasses);

}  // namespace pcbdet
