#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pcbdet/anchors.hpp"
#include "pcbdet/augment.hpp"
#include "pcbdet/checkpoint.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/evaluate.hpp"
#include "pcbdet/losses.hpp"
#include "pcbdet/optim.hpp"
#include "pcbdet/report.hpp"

namespace pcbdet {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  /// lr is the schedule's starting value.
  NadamHyper nadam{};
  double eta_min = 1e-5;
  LossWeights weights{};
  bool augment = true;
  AugmentPolicy policy{};
  int kmeans_iters = 50;
  /// Loss multiplier for source=gan_composited images.
  double gan_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// k-means over the train boxes, anchors_per_scale * num_scales of them.
AnchorSet fit_anchors(std::span<const AnnotatedImage> images, const DetectorConfig& cfg, int iters, std::uint64_t seed);

/// [B, 3, S, S] in [0, 1]. ShapeError unless every raster is S x S.
Tensor stack_images(std::span<const AnnotatedImage> images, int size);

/// Loss of one batch with gradients w.r.t. the raw outputs.
LossResult batch_loss(const RawPrediction& raw, std::span<const AnnotatedImage> images, const AnchorSet& anchors,
                      const DetectorConfig& cfg, const LossWeights& weights, double gan_weight, bool with_grad);

/// Unweighted box/cls/dfl averaged over batches, no parameter updates.
EpochLosses measure_losses(const NamedTensors& params, const AnchorSet& anchors,
                           std::span<const AnnotatedImage> images, const DetectorConfig& cfg,
                           const TrainConfig& tcfg, int epoch, const std::string& split);

struct TrainResult {
  /// Parameters after the last epoch that finished with finite losses.
  NamedTensors params;
  AnchorSet anchors;
  std::vector<EpochLosses> curves;
  int epochs_completed = 0;
  bool diverged = false;
  std::string divergence;
};

using EpochCallback = std::function<void(const EpochLosses& train, const EpochLosses& val)>;

/// Nadam with per-step cosine annealing over epochs * batches steps. Train
/// curve rows average the batch losses seen during the epoch; val rows are
/// measured after it. A non-finite loss or gradient stops training and
/// marks the result diverged.
TrainResult train_detector(std::span<const AnnotatedImage> train, std::span<const AnnotatedImage> val,
                           const DetectorConfig& cfg, const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

/// Decoded, class-wise NMS'd detections per image, scores >= min_score.
std::vector<ImageDetections> detect_images(const NamedTensors& params, std::span<const AnnotatedImage> images,
                                           const DetectorConfig& cfg, double nms_iou, double min_score = 1e-3,
                                           int batch_size = 16);

std::vector<ImageGts> ground_truths(std::span<const AnnotatedImage> images);

}  // namespace pcbdet
