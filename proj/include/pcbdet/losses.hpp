#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "pcbdet/assign.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

struct LossWeights {
  double w_box = 7.5;
  double w_cls = 0.5;
  double w_dfl = 1.5;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  /// Objectness target for positives is IoU(decoded, gt) instead of 1.
  bool iou_aware_objectness = true;

  void validate() const;
};

inline constexpr double kLossEps = 1e-9;
inline constexpr double kLogClamp = 1e-12;

/// 1 - CIoU. `alpha` overrides the aspect-ratio trade-off term; by default
/// it is computed from the boxes.
double ciou_loss(const Box& pred, const Box& gt, std::optional<double> alpha = std::nullopt);
double ciou_alpha(const Box& pred, const Box& gt);
/// Loss and gradient w.r.t. (xmin, ymin, xmax, ymax) of `pred`, alpha held
/// constant at `alpha` (default: its current value).
double ciou_loss_grad(const Box& pred, const Box& gt, std::array<double, 4>& grad,
                      std::optional<double> alpha = std::nullopt);

/// Sigmoid focal loss of one logit against a target in [0, 1]. A soft target
/// t mixes the positive and negative terms as t*pos + (1-t)*neg.
double focal_term(double logit, double target, double alpha, double gamma, double* dlogit = nullptr);
/// Sum of focal_term over classes.
double focal_loss(std::span<const double> logits, std::span<const double> targets, double alpha = 0.25,
                  double gamma = 2.0, std::span<double> grad = {});

/// Interpolated negative log-likelihood at `target` over softmax(logits).
/// Targets outside [0, bins-1] are clamped and reported through `clamped`.
double dfl_loss(std::span<const double> logits, double target, std::span<double> grad = {}, bool* clamped = nullptr);

struct PositiveTarget {
  int flat = 0;
  int gt = 0;
  Box gt_box;
  int cls = 0;
  /// Detached IoU between the decoded (unclipped) box and the gt.
  double iou = 0.0;
  /// CIoU aspect-ratio trade-off, frozen alongside the IoU.
  double ciou_alpha = 0.0;
  /// Side distances in stride units, before clamping.
  std::array<double, 4> sides{};
};

struct ImageTargets {
  std::vector<PositiveTarget> positives;
  /// Multiplier on every loss term of this image.
  double weight = 1.0;
};

/// Freezes the targets implied by `assignments` against the current `raw`.
std::vector<ImageTargets> compute_loss_targets(const RawPrediction& raw, std::span<const Assignment> assignments,
                                               std::span<const std::vector<LabeledBox>> gts, const DetectorConfig& cfg);

struct LossResult {
  double box = 0.0;
  double cls = 0.0;
  double dfl = 0.0;
  double total = 0.0;
  int num_positive = 0;
  bool dfl_clamped = false;
  /// d total / d raw, one tensor per scale (empty when not requested).
  std::vector<Tensor> grad;
  /// d box, d cls, d dfl / d raw (unweighted components).
  std::array<std::vector<Tensor>, 3> component_grad;
};

/// box and dfl average over positives; cls sums objectness focal loss over
/// every slot plus class focal loss over positives, divided by max(1, #pos).
LossResult total_loss(const RawPrediction& raw, std::span<const ImageTargets> targets, const DetectorConfig& cfg,
                      const LossWeights& weights, bool with_grad = true);

}  // namespace pcbdet
