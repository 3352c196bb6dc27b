#include "pcbdet/detector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pcbdet/errors.hpp"
#include "pcbdet/ops.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

void DetectorConfig::validate() const {
  if (num_classes < 1 || num_classes > kNumClasses) {
    throw ParameterError(fmt::format("num_classes must be in [1, {}], got {}", kNumClasses, num_classes));
  }
  if (anchors_per_scale < 1) throw ParameterError("anchors_per_scale must be >= 1");
  if (dfl_bins < 2) throw ParameterError("dfl_bins must be >= 2");
  if (stem_channels < 1 || deep_channels < 1 || head_width < 1 || dw_channels.empty()) {
    throw ParameterError("channel widths must be positive and at least one depthwise block is required");
  }
  for (const int c : dw_channels) {
    if (c < 1) throw ParameterError("channel widths must be positive");
  }
  const int first = 1 << (1 + static_cast<int>(dw_channels.size()));
  if (strides.size() != 2 || strides[0] != first || strides[1] != 2 * first) {
    throw ParameterError(fmt::format("strides must be {{{}, {}}} for {} depthwise blocks", first, 2 * first,
                                     dw_channels.size()));
  }
  if (input_size < strides[1] || input_size % strides[1] != 0) {
    throw ParameterError(fmt::format("input_size {} must be a positive multiple of the largest stride {}",
                                     input_size, strides[1]));
  }
}

int DetectorConfig::num_positions() const {
  int n = 0;
  for (int s = 0; s < num_scales(); ++s) n += anchors_per_scale * grid(s) * grid(s);
  return n;
}

int flat_position(const DetectorConfig& cfg, const Position& p) {
  int offset = 0;
  for (int s = 0; s < p.scale; ++s) offset += cfg.anchors_per_scale * cfg.grid(s) * cfg.grid(s);
  const int g = cfg.grid(p.scale);
  return offset + (p.anchor * g + p.y) * g + p.x;
}

Position unflatten_position(const DetectorConfig& cfg, int flat) {
  for (int s = 0; s < cfg.num_scales(); ++s) {
    const int g = cfg.grid(s);
    const int n = cfg.anchors_per_scale * g * g;
    if (flat < n) return Position{s, flat / (g * g), (flat / g) % g, flat % g};
    flat -= n;
  }
  throw ContractError("flat position out of range");
}

std::pair<double, double> cell_center(const DetectorConfig& cfg, const Position& p) {
  const double s = cfg.strides.at(static_cast<std::size_t>(p.scale));
  return {(p.x + 0.5) * s, (p.y + 0.5) * s};
}

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  double stddev;  // 0 for zero init
};

std::vector<ParamSpec> param_specs(const DetectorConfig& cfg) {
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& name, int out, int in, int k, double gain = 2.0) {
    specs.push_back({name + ".w", {out, in, k, k}, std::sqrt(gain / (in * k * k))});
    specs.push_back({name + ".b", {out}, 0.0});
  };
  conv("stem", cfg.stem_channels, 3, 3);
  int c = cfg.stem_channels;
  for (std::size_t i = 0; i < cfg.dw_channels.size(); ++i) {
    const std::string p = fmt::format("dw{}", i);
    conv(p + ".dw", c, 1, 3);
    conv(p + ".pw", cfg.dw_channels[i], c, 1);
    c = cfg.dw_channels[i];
  }
  const int c8 = c;
  // The second conv of each residual branch starts small so blocks begin near identity.
  conv("res8.c1", c8, c8, 3);
  conv("res8.c2", c8, c8, 3, 0.2);
  conv("down16", cfg.deep_channels, c8, 3);
  conv("res16.c1", cfg.deep_channels, cfg.deep_channels, 3);
  conv("res16.c2", cfg.deep_channels, cfg.deep_channels, 3, 0.2);
  const int fused[2] = {cfg.deep_channels + c8, cfg.deep_channels};
  for (int s = 0; s < 2; ++s) {
    const std::string p = fmt::format("head{}", s);
    conv(p + ".c", cfg.head_width, fused[s], 3);
    specs.push_back({p + ".out.w", {cfg.head_channels(), cfg.head_width, 1, 1}, 0.01});
    specs.push_back({p + ".out.b", {cfg.head_channels()}, 0.0});
  }
  return specs;
}

constexpr double kObjectnessPrior = -4.6;  // sigmoid ~ 0.01
constexpr double kClassPrior = -2.0;

}  // namespace

NamedTensors init_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NamedTensors out;
  for (const auto& spec : param_specs(cfg)) {
    Tensor t = spec.stddev > 0 ? Tensor::filled(spec.shape, NormalFill{0.0, spec.stddev, component_seed(seed, spec.name)})
                               : Tensor::zeros(spec.shape);
    if (spec.name.ends_with(".out.b")) {
      for (int a = 0; a < cfg.anchors_per_scale; ++a) {
        t[static_cast<std::size_t>(cfg.obj_channel(a))] = kObjectnessPrior;
        for (int k = 0; k < cfg.num_classes; ++k) t[static_cast<std::size_t>(cfg.cls_channel(a, k))] = kClassPrior;
      }
    }
    out.emplace_back(spec.name, std::move(t));
  }
  return out;
}

DetectorTape detector_forward(Tape& tape, Var x, const NamedTensors& params, const DetectorConfig& cfg) {
  cfg.validate();
  const Shape& xs = tape.shape(x);
  if (xs.size() != 4 || xs[1] != 3 || xs[2] != cfg.input_size || xs[3] != cfg.input_size) {
    throw ShapeError(fmt::format("detector expects [B,3,{0},{0}], got {1}", cfg.input_size, shape_str(xs)));
  }
  const auto specs = param_specs(cfg);
  if (params.size() != specs.size()) {
    throw ShapeError(fmt::format("detector expects {} parameter tensors, got {}", specs.size(), params.size()));
  }
  DetectorTape out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (params[i].first != specs[i].name || params[i].second.shape() != specs[i].shape) {
      throw ShapeError(fmt::format("parameter {} '{}' {} does not match expected '{}' {}", i, params[i].first,
                                   shape_str(params[i].second.shape()), specs[i].name, shape_str(specs[i].shape)));
    }
    out.params.push_back(tape.parameter(params[i].second));
  }
  std::size_t next = 0;
  auto conv = [&](Var in, ConvOptions opt) {
    const Var w = out.params[next++];
    const Var b = out.params[next++];
    return ops::add_bias(tape, ops::conv2d(tape, in, w, opt), b);
  };
  auto silu = [&](Var v) { return ops::activation(tape, v, Activation::Silu); };
  auto residual = [&](Var in) {
    const Var h = silu(conv(in, {1, 1, 1}));
    return silu(ops::add(tape, in, conv(h, {1, 1, 1})));
  };

  Var h = silu(conv(x, {2, 1, 1}));
  for (std::size_t i = 0; i < cfg.dw_channels.size(); ++i) {
    const int c = tape.shape(h)[1];
    h = silu(conv(h, {2, 1, c}));
    h = silu(conv(h, {1, 0, 1}));
  }
  const Var f8 = residual(h);
  const Var f16 = residual(silu(conv(f8, {2, 1, 1})));

  const Var parts[2] = {ops::upsample_nearest(tape, f16, 2), f8};
  const Var fused8 = ops::concat_channels(tape, parts);
  const Var heads_in[2] = {fused8, f16};
  for (const Var in : heads_in) {
    const Var hidden = silu(conv(in, {1, 1, 1}));
    out.raw.push_back(conv(hidden, {1, 0, 1}));
  }
  return out;
}

RawPrediction detector_predict(const Tensor& x, const NamedTensors& params, const DetectorConfig& cfg) {
  Tape tape;
  const DetectorTape fwd = detector_forward(tape, tape.constant(x), params, cfg);
  RawPrediction raw;
  for (const Var v : fwd.raw) raw.push_back(tape.value(v));
  return raw;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dfl_expectation(const double* logits, int bins, double* probs) {
  const double mx = *std::max_element(logits, logits + bins);
  double z = 0.0;
  for (int i = 0; i < bins; ++i) z += std::exp(logits[i] - mx);
  double e = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double p = std::exp(logits[i] - mx) / z;
    if (probs) probs[i] = p;
    e += p * i;
  }
  return e;
}

namespace {

// Channel values of one slot gathered into a contiguous buffer.
std::vector<double> slot_values(const Tensor& raw, int image, const Position& p, const DetectorConfig& cfg) {
  std::vector<double> v(static_cast<std::size_t>(cfg.per_anchor()));
  const int base = p.anchor * cfg.per_anchor();
  for (int c = 0; c < cfg.per_anchor(); ++c) v[static_cast<std::size_t>(c)] = raw.at(image, base + c, p.y, p.x);
  return v;
}

}  // namespace

std::array<double, 4> decode_sides(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg) {
  const auto v = slot_values(raw_scale, image, p, cfg);
  const double stride = cfg.strides.at(static_cast<std::size_t>(p.scale));
  std::array<double, 4> sides{};
  for (int s = 0; s < 4; ++s) sides[s] = stride * dfl_expectation(v.data() + s * cfg.dfl_bins, cfg.dfl_bins);
  return sides;
}

Box decode_box(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg, bool clip) {
  const auto d = decode_sides(raw_scale, image, p, cfg);
  const auto [cx, cy] = cell_center(cfg, p);
  Box b{cx - d[0], cy - d[1], cx + d[2], cy + d[3]};
  if (clip) {
    const double lim = cfg.input_size;
    b = Box{std::clamp(b.xmin, 0.0, lim), std::clamp(b.ymin, 0.0, lim), std::clamp(b.xmax, 0.0, lim),
            std::clamp(b.ymax, 0.0, lim)};
  }
  return b;
}

std::vector<double> class_probs(const Tensor& raw_scale, int image, const Position& p, const DetectorConfig& cfg) {
  std::vector<double> probs(static_cast<std::size_t>(cfg.num_classes));
  double mx = -INFINITY;
  for (int k = 0; k < cfg.num_classes; ++k) {
    probs[static_cast<std::size_t>(k)] = raw_scale.at(image, cfg.cls_channel(p.anchor, k), p.y, p.x);
    mx = std::max(mx, probs[static_cast<std::size_t>(k)]);
  }
  double z = 0.0;
  for (auto& v : probs) z += (v = std::exp(v - mx));
  for (auto& v : probs) v /= z;
  return probs;
}

std::vector<std::vector<Detection>> decode_predictions(const RawPrediction& raw, const DetectorConfig& cfg,
                                                       double min_score) {
  if (static_cast<int>(raw.size()) != cfg.num_scales()) throw ShapeError("raw prediction has wrong number of scales");
  for (int s = 0; s < cfg.num_scales(); ++s) {
    const Shape& sh = raw[static_cast<std::size_t>(s)].shape();
    if (sh.size() != 4 || sh[1] != cfg.head_channels() || sh[2] != cfg.grid(s) || sh[3] != cfg.grid(s) ||
        sh[0] != raw[0].dim(0)) {
      throw ShapeError(fmt::format("raw prediction scale {} has shape {}", s, shape_str(sh)));
    }
  }
  const int batch = raw[0].dim(0);
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    for (int flat = 0; flat < cfg.num_positions(); ++flat) {
      const Position p = unflatten_position(cfg, flat);
      const Tensor& r = raw[static_cast<std::size_t>(p.scale)];
      const auto probs = class_probs(r, b, p, cfg);
      const auto best = std::max_element(probs.begin(), probs.end());
      const double score = sigmoid(r.at(b, cfg.obj_channel(p.anchor), p.y, p.x)) * *best;
      if (score < min_score) continue;
      const Box box = decode_box(r, b, p, cfg, true);
      if (!box.valid()) continue;
      out[static_cast<std::size_t>(b)].push_back(
          Detection{box, class_from_id(static_cast<int>(best - probs.begin())), score});
    }
  }
  return out;
}

}  // namespace pcbdet
