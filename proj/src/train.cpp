#include "pcbdet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pcbdet/assign.hpp"
#include "pcbdet/errors.hpp"
#include "pcbdet/image_io.hpp"
#include "pcbdet/ops.hpp"
#include "pcbdet/postprocess.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  nadam.validate();
  if (!(eta_min >= 0 && eta_min < nadam.lr)) throw ParameterError("eta_min must be in [0, lr)");
  weights.validate();
  if (kmeans_iters < 1) throw ParameterError("kmeans_iters must be >= 1");
  if (!(gan_weight >= 0)) throw ParameterError("gan_weight must be >= 0");
}

AnchorSet fit_anchors(std::span<const AnnotatedImage> images, const DetectorConfig& cfg, int iters, std::uint64_t seed) {
  std::vector<WH> boxes;
  for (const auto& img : images) {
    for (const auto& b : img.boxes) boxes.emplace_back(b.box.width(), b.box.height());
  }
  const int k = cfg.anchors_per_scale * cfg.num_scales();
  if (static_cast<int>(boxes.size()) < k) {
    throw ParameterError(fmt::format("need at least {} training boxes to fit anchors, got {}", k, boxes.size()));
  }
  return kmeans_anchors(boxes, k, iters, seed, cfg.num_scales()).anchors;
}

Tensor stack_images(std::span<const AnnotatedImage> images, int size) {
  std::vector<const Raster*> rasters;
  for (const auto& img : images) {
    if (img.image.width != size || img.image.height != size) {
      throw ShapeError(fmt::format("image '{}' is {}x{}, detector expects {}x{}", img.id, img.image.width,
                                   img.image.height, size, size));
    }
    rasters.push_back(&img.image);
  }
  return normalize_batch(rasters);
}

std::vector<ImageGts> ground_truths(std::span<const AnnotatedImage> images) {
  std::vector<ImageGts> out;
  for (const auto& img : images) out.push_back(img.boxes);
  return out;
}

LossResult batch_loss(const RawPrediction& raw, std::span<const AnnotatedImage> images, const AnchorSet& anchors,
                      const DetectorConfig& cfg, const LossWeights& weights, double gan_weight, bool with_grad) {
  std::vector<Assignment> assignments;
  std::vector<std::vector<LabeledBox>> gts;
  for (std::size_t n = 0; n < images.size(); ++n) {
    gts.push_back(images[n].boxes);
    assignments.push_back(assign_targets(gts.back(), anchors, raw, static_cast<int>(n), cfg));
  }
  auto targets = compute_loss_targets(raw, assignments, gts, cfg);
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].source == Source::GanComposited) targets[n].weight = gan_weight;
  }
  return total_loss(raw, targets, cfg, weights, with_grad);
}

namespace {

struct Running {
  double box = 0, cls = 0, dfl = 0;
  int batches = 0;

  void add(const LossResult& r) {
    box += r.box;
    cls += r.cls;
    dfl += r.dfl;
    ++batches;
  }
  EpochLosses row(int epoch, const std::string& split) const {
    const double n = std::max(1, batches);
    return EpochLosses{epoch, split, box / n, cls / n, dfl / n};
  }
};

bool finite(const LossResult& r) { return std::isfinite(r.total) && std::isfinite(r.box) && std::isfinite(r.cls) && std::isfinite(r.dfl); }

}  // namespace

EpochLosses measure_losses(const NamedTensors& params, const AnchorSet& anchors,
                           std::span<const AnnotatedImage> images, const DetectorConfig& cfg,
                           const TrainConfig& tcfg, int epoch, const std::string& split) {
  Running run;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
    const auto batch = images.subspan(start, std::min<std::size_t>(tcfg.batch_size, images.size() - start));
    const RawPrediction raw = detector_predict(stack_images(batch, cfg.input_size), params, cfg);
    run.add(batch_loss(raw, batch, anchors, cfg, tcfg.weights, tcfg.gan_weight, false));
  }
  return run.row(epoch, split);
}

TrainResult train_detector(std::span<const AnnotatedImage> train, std::span<const AnnotatedImage> val,
                           const DetectorConfig& cfg, const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  cfg.validate();
  tcfg.validate();
  if (train.empty()) throw ParameterError("training set is empty");
  TrainResult res;
  res.anchors = fit_anchors(train, cfg, tcfg.kmeans_iters, component_seed(tcfg.seed, "train.anchors"));
  NamedTensors params = init_detector(cfg, component_seed(tcfg.seed, "detector.init"));
  res.params = params;

  std::vector<Tensor> values;
  for (const auto& [n, t] : params) values.push_back(t);
  Nadam opt(values, tcfg.nadam);
  const auto batches_per_epoch = static_cast<std::int64_t>((train.size() + tcfg.batch_size - 1) / tcfg.batch_size);
  const CosineSchedule sched{tcfg.nadam.lr, tcfg.eta_min, std::max<std::int64_t>(1, batches_per_epoch * tcfg.epochs)};

  std::vector<std::size_t> order(train.size());
  std::int64_t step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(component_seed(tcfg.seed, "train.shuffle") ^ mix64(static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    Running run;
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
        std::vector<AnnotatedImage> batch;
        for (std::size_t j = start; j < std::min(order.size(), start + tcfg.batch_size); ++j) {
          const AnnotatedImage& src = train[order[j]];
          if (tcfg.augment) {
            const std::uint64_t s = component_seed(tcfg.seed, "train.augment") ^
                                    mix64(static_cast<std::uint64_t>(epoch) * train.size() + order[j]);
            batch.push_back(random_augment(src, tcfg.policy, s));
          } else {
            batch.push_back(src);
          }
        }
        Tape tape;
        const DetectorTape fwd = detector_forward(tape, tape.constant(stack_images(batch, cfg.input_size)), params, cfg);
        RawPrediction raw;
        for (const Var v : fwd.raw) raw.push_back(tape.value(v));
        LossResult loss = batch_loss(raw, batch, res.anchors, cfg, tcfg.weights, tcfg.gan_weight, true);
        if (!finite(loss)) throw NumericError(fmt::format("non-finite loss at epoch {} step {}", epoch, step));
        run.add(loss);
        const Var total = ops::external_scalar(tape, fwd.raw, loss.total, std::move(loss.grad));
        const Gradients grads = tape.backward(total);
        std::vector<Tensor> g;
        for (const Var v : fwd.params) g.push_back(grads.of(v));
        opt.step(values, g, cosine_lr(step, sched));
        for (std::size_t i = 0; i < params.size(); ++i) params[i].second = values[i];
        ++step;
      }
      const EpochLosses train_row = run.row(epoch, "train");
      const EpochLosses val_row =
          val.empty() ? EpochLosses{epoch, "val", 0, 0, 0} : measure_losses(params, res.anchors, val, cfg, tcfg, epoch, "val");
      if (!std::isfinite(val_row.box) || !std::isfinite(val_row.cls) || !std::isfinite(val_row.dfl)) {
        throw NumericError(fmt::format("non-finite validation loss at epoch {}", epoch));
      }
      res.curves.push_back(train_row);
      if (!val.empty()) res.curves.push_back(val_row);
      res.params = params;
      res.epochs_completed = epoch + 1;
      if (on_epoch) on_epoch(train_row, val_row);
    } catch (const NumericError& e) {
      res.diverged = true;
      res.divergence = e.what();
      return res;
    }
  }
  return res;
}

std::vector<ImageDetections> detect_images(const NamedTensors& params, std::span<const AnnotatedImage> images,
                                           const DetectorConfig& cfg, double nms_iou, double min_score,
                                           int batch_size) {
  std::vector<ImageDetections> out;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto batch = images.subspan(start, std::min<std::size_t>(batch_size, images.size() - start));
    const auto decoded = decode_predictions(detector_predict(stack_images(batch, cfg.input_size), params, cfg), cfg,
                                            min_score);
    for (const auto& d : decoded) out.push_back(nms(d, nms_iou));
  }
  return out;
}

}  // namespace pcbdet
