#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pcbdet/checkpoint.hpp"
#include "pcbdet/tape.hpp"
#include "pcbdet/tensor.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

/// Backbone: stem conv (stride 2), one depthwise-separable stride-2 block per
/// entry of `dw_channels`, a residual block at the first head stride, a
/// stride-2 conv plus residual block at the second. The stride-16 features are
/// upsampled and fused into the stride-8 head.
struct DetectorConfig {
  int input_size = 96;
  int num_classes = kNumClasses;
  std::vector<int> strides{8, 16};
  int anchors_per_scale = 3;
  int dfl_bins = 8;
  int stem_channels = 16;
  std::vector<int> dw_channels{24, 32};
  int deep_channels = 64;
  int head_width = 64;

  void validate() const;

  int num_scales() const { return static_cast<int>(strides.size()); }
  int grid(int scale) const { return input_size / strides.at(static_cast<std::size_t>(scale)); }
  int per_anchor() const { return 4 * dfl_bins + 1 + num_classes; }
  int head_channels() const { return anchors_per_scale * per_anchor(); }

  int dfl_channel(int anchor, int side, int bin) const { return anchor * per_anchor() + side * dfl_bins + bin; }
  int obj_channel(int anchor) const { return anchor * per_anchor() + 4 * dfl_bins; }
  int cls_channel(int anchor, int cls) const { return obj_channel(anchor) + 1 + cls; }

  /// Prediction slots per image over all scales.
  int num_positions() const;
};

/// One prediction slot. Flat order is scale-major, then anchor, row, column.
struct Position {
  int scale = 0;
  int anchor = 0;
  int y = 0;
  int x = 0;
};

int flat_position(const DetectorConfig& cfg, const Position& p);
Position unflatten_position(const DetectorConfig& cfg, int flat);
/// Centre of the position's grid cell in input pixels.
std::pair<double, double> cell_center(const DetectorConfig& cfg, const Position& p);

/// Per scale: [B, head_channels, grid, grid].
using RawPrediction = std::vector<Tensor>;

struct Detection {
  Box box;
  DefectClass cls = DefectClass::MissingHole;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

NamedTensors init_detector(const DetectorConfig& cfg, std::uint64_t seed);

/// Tape forward. Parameters are registered as trainable leaves in the same
/// order as `params`; their Vars are returned for gradient lookup.
struct DetectorTape {
  std::vector<Var> raw;
  std::vector<Var> params;
};
DetectorTape detector_forward(Tape& tape, Var x, const NamedTensors& params, const DetectorConfig& cfg);

/// Inference-only forward.
RawPrediction detector_predict(const Tensor& x, const NamedTensors& params, const DetectorConfig& cfg);

/// Softmax expectation Σ i·softmax(z)_i. Writes the softmax to `probs` if given.
double dfl_expectation(const double* logits, int bins, double* probs = nullptr);

/// Side distances (l, t, r, b) in pixels for one slot of one image.
std::array<double, 4> decode_sides(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg);
/// Box from side distances around the cell centre; optionally clipped to the input.
Box decode_box(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg, bool clip);
/// softmax over the class logits of one slot.
std::vector<double> class_probs(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg);
double sigmoid(double x);

/// Every slot becomes a Detection (class = argmax); those scoring below
/// `min_score` are dropped. Result is per image, in flat position order.
std::vector<std::vector<Detection>> decode_predictions(const RawPrediction& raw, const DetectorConfig& cfg,
                                                       double min_score = 0.0);

}  // namespace pcbdet
