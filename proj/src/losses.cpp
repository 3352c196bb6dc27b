#include "pcbdet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "pcbdet/errors.hpp"

namespace pcbdet {

void LossWeights::validate() const {
  if (!(w_box >= 0) || !(w_cls >= 0) || !(w_dfl >= 0) || w_box + w_cls + w_dfl <= 0) {
    throw ParameterError(fmt::format("loss weights must be >= 0 and not all zero, got ({}, {}, {})", w_box, w_cls, w_dfl));
  }
  if (!(focal_alpha >= 0 && focal_alpha <= 1)) throw ParameterError("focal alpha must be in [0, 1]");
  if (!(focal_gamma >= 0)) throw ParameterError("focal gamma must be >= 0");
}

namespace {

// Forward-mode dual number carrying d/d(xmin, ymin, xmax, ymax) of the prediction.
struct Dual {
  double v = 0.0;
  std::array<double, 4> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: constants promote implicitly

  friend Dual operator+(Dual a, const Dual& b) {
    a.v += b.v;
    for (int i = 0; i < 4; ++i) a.d[i] += b.d[i];
    return a;
  }
  friend Dual operator-(Dual a, const Dual& b) {
    a.v -= b.v;
    for (int i = 0; i < 4; ++i) a.d[i] -= b.d[i];
    return a;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
    return r;
  }
};

double value_of(double x) { return x; }
double value_of(const Dual& x) { return x.v; }

double atan_of(double x) { return std::atan(x); }
Dual atan_of(const Dual& x) {
  Dual r(std::atan(x.v));
  for (int i = 0; i < 4; ++i) r.d[i] = x.d[i] / (1.0 + x.v * x.v);
  return r;
}

template <class T>
T vmax(const T& a, const T& b) {
  return value_of(a) >= value_of(b) ? a : b;
}
template <class T>
T vmin(const T& a, const T& b) {
  return value_of(a) <= value_of(b) ? a : b;
}

constexpr double kAspectScale = 4.0 / (std::numbers::pi * std::numbers::pi);

struct CiouParts {
  double iou;
  double v;
};

template <class T>
T ciou_terms(const T& x0, const T& y0, const T& x1, const T& y1, const Box& gt, std::optional<double> alpha,
             CiouParts* parts = nullptr) {
  const T w = x1 - x0;
  const T h = y1 - y0;
  const T iw = vmax(T(0.0), vmin(x1, T(gt.xmax)) - vmax(x0, T(gt.xmin)));
  const T ih = vmax(T(0.0), vmin(y1, T(gt.ymax)) - vmax(y0, T(gt.ymin)));
  const T inter = iw * ih;
  const T uni = w * h + T(gt.area()) - inter + T(kLossEps);
  const T iou_v = inter / uni;

  const T dx = (x0 + x1 - T(gt.xmin + gt.xmax)) * T(0.5);
  const T dy = (y0 + y1 - T(gt.ymin + gt.ymax)) * T(0.5);
  const T rho2 = dx * dx + dy * dy;
  const T cw = vmax(x1, T(gt.xmax)) - vmin(x0, T(gt.xmin));
  const T ch = vmax(y1, T(gt.ymax)) - vmin(y0, T(gt.ymin));
  const T c2 = cw * cw + ch * ch + T(kLossEps);

  const T dang = T(std::atan(gt.width() / (gt.height() + kLossEps))) - atan_of(w / (h + T(kLossEps)));
  const T v = T(kAspectScale) * dang * dang;
  const double a = alpha ? *alpha : value_of(v) / ((1.0 - value_of(iou_v)) + value_of(v) + kLossEps);
  if (parts) *parts = {value_of(iou_v), value_of(v)};
  return T(1.0) - iou_v + rho2 / c2 + T(a) * v;
}

}  // namespace

double ciou_loss(const Box& pred, const Box& gt, std::optional<double> alpha) {
  return ciou_terms<double>(pred.xmin, pred.ymin, pred.xmax, pred.ymax, gt, alpha);
}

double ciou_alpha(const Box& pred, const Box& gt) {
  CiouParts parts{};
  ciou_terms<double>(pred.xmin, pred.ymin, pred.xmax, pred.ymax, gt, 0.0, &parts);
  return parts.v / ((1.0 - parts.iou) + parts.v + kLossEps);
}

double ciou_loss_grad(const Box& pred, const Box& gt, std::array<double, 4>& grad, std::optional<double> alpha) {
  std::array<Dual, 4> c{Dual(pred.xmin), Dual(pred.ymin), Dual(pred.xmax), Dual(pred.ymax)};
  for (int i = 0; i < 4; ++i) c[i].d[i] = 1.0;
  const Dual loss = ciou_terms<Dual>(c[0], c[1], c[2], c[3], gt, alpha ? *alpha : ciou_alpha(pred, gt));
  grad = loss.d;
  return loss.v;
}

double focal_term(double logit, double target, double alpha, double gamma, double* dlogit) {
  const double p = sigmoid(logit);
  const double q = sigmoid(-logit);
  const bool p_clamped = p < kLogClamp;
  const bool q_clamped = q < kLogClamp;
  const double lp = std::log(std::max(p, kLogClamp));
  const double lq = std::log(std::max(q, kLogClamp));
  const double qg = std::pow(q, gamma);
  const double pg = std::pow(p, gamma);
  const double pos = -alpha * qg * lp;
  const double neg = -(1.0 - alpha) * pg * lq;
  if (dlogit) {
    const double dpos = alpha * qg * (gamma * p * lp - (p_clamped ? 0.0 : q));
    const double dneg = -(1.0 - alpha) * pg * (gamma * q * lq - (q_clamped ? 0.0 : p));
    *dlogit = target * dpos + (1.0 - target) * dneg;
  }
  return target * pos + (1.0 - target) * neg;
}

double focal_loss(std::span<const double> logits, std::span<const double> targets, double alpha, double gamma,
                  std::span<double> grad) {
  if (logits.size() != targets.size() || (!grad.empty() && grad.size() != logits.size())) {
    throw ShapeError("focal_loss: logits, targets and grad must have equal length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double g = 0.0;
    total += focal_term(logits[i], targets[i], alpha, gamma, grad.empty() ? nullptr : &g);
    if (!grad.empty()) grad[i] = g;
  }
  return total;
}

double dfl_loss(std::span<const double> logits, double target, std::span<double> grad, bool* clamped) {
  const int bins = static_cast<int>(logits.size());
  if (bins < 2) throw ShapeError("dfl_loss needs at least 2 bins");
  if (!grad.empty() && grad.size() != logits.size()) throw ShapeError("dfl_loss: grad length mismatch");
  const double y = std::clamp(target, 0.0, static_cast<double>(bins - 1));
  if (clamped && y != target) *clamped = true;
  const int i = std::min(static_cast<int>(std::floor(y)), bins - 2);
  const double wl = i + 1 - y;
  const double wr = y - i;

  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (const double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  const double loss = -(wl * (logits[static_cast<std::size_t>(i)] - lse) + wr * (logits[static_cast<std::size_t>(i + 1)] - lse));
  if (!grad.empty()) {
    for (int k = 0; k < bins; ++k) grad[static_cast<std::size_t>(k)] = std::exp(logits[static_cast<std::size_t>(k)] - lse);
    grad[static_cast<std::size_t>(i)] -= wl;
    grad[static_cast<std::size_t>(i + 1)] -= wr;
  }
  return loss;
}

std::vector<ImageTargets> compute_loss_targets(const RawPrediction& raw, std::span<const Assignment> assignments,
                                               std::span<const std::vector<LabeledBox>> gts, const DetectorConfig& cfg) {
  if (raw.empty() || assignments.size() != static_cast<std::size_t>(raw[0].dim(0)) || gts.size() != assignments.size()) {
    throw ShapeError("compute_loss_targets: batch size mismatch between raw, assignments and gts");
  }
  std::vector<ImageTargets> out(assignments.size());
  for (std::size_t b = 0; b < assignments.size(); ++b) {
    const auto& gt_of = assignments[b].gt_of;
    if (static_cast<int>(gt_of.size()) != cfg.num_positions()) throw ShapeError("assignment size mismatch");
    for (int flat = 0; flat < cfg.num_positions(); ++flat) {
      const int g = gt_of[static_cast<std::size_t>(flat)];
      if (g == kBackground) continue;
      if (g < 0 || static_cast<std::size_t>(g) >= gts[b].size()) throw ContractError("assignment refers to a missing gt");
      const Position p = unflatten_position(cfg, flat);
      const LabeledBox& gt = gts[b][static_cast<std::size_t>(g)];
      const auto [cx, cy] = cell_center(cfg, p);
      const double s = cfg.strides[static_cast<std::size_t>(p.scale)];
      PositiveTarget t;
      t.flat = flat;
      t.gt = g;
      t.gt_box = gt.box;
      t.cls = class_id(gt.cls);
      const Box pred = decode_box(raw[static_cast<std::size_t>(p.scale)], static_cast<int>(b), p, cfg, false);
      t.iou = iou(pred, gt.box);
      t.ciou_alpha = ciou_alpha(pred, gt.box);
      t.sides = {(cx - gt.box.xmin) / s, (cy - gt.box.ymin) / s, (gt.box.xmax - cx) / s, (gt.box.ymax - cy) / s};
      out[b].positives.push_back(t);
    }
  }
  return out;
}

LossResult total_loss(const RawPrediction& raw, std::span<const ImageTargets> targets, const DetectorConfig& cfg,
                      const LossWeights& weights, bool with_grad) {
  weights.validate();
  if (static_cast<int>(raw.size()) != cfg.num_scales()) throw ShapeError("raw prediction has wrong number of scales");
  const int batch = raw[0].dim(0);
  if (targets.size() != static_cast<std::size_t>(batch)) throw ShapeError("one ImageTargets per batch image required");

  LossResult res;
  for (const auto& t : targets) res.num_positive += static_cast<int>(t.positives.size());
  const double n_pos = res.num_positive;
  const double cls_den = std::max(1.0, n_pos);
  if (with_grad) {
    for (auto& comp : res.component_grad) {
      for (const auto& r : raw) comp.push_back(Tensor::zeros(r.shape()));
    }
  }
  auto& g_box = res.component_grad[0];
  auto& g_cls = res.component_grad[1];
  auto& g_dfl = res.component_grad[2];
  const int bins = cfg.dfl_bins;
  const double alpha = weights.focal_alpha;
  const double gamma = weights.focal_gamma;

  for (int b = 0; b < batch; ++b) {
    const ImageTargets& it = targets[static_cast<std::size_t>(b)];
    const double w = it.weight;
    std::vector<double> obj_target(static_cast<std::size_t>(cfg.num_positions()), 0.0);
    for (const auto& pt : it.positives) {
      obj_target[static_cast<std::size_t>(pt.flat)] = weights.iou_aware_objectness ? pt.iou : 1.0;
    }

    for (int flat = 0; flat < cfg.num_positions(); ++flat) {
      const Position p = unflatten_position(cfg, flat);
      const Tensor& r = raw[static_cast<std::size_t>(p.scale)];
      double d = 0.0;
      const int ch = cfg.obj_channel(p.anchor);
      res.cls += w * focal_term(r.at(b, ch, p.y, p.x), obj_target[static_cast<std::size_t>(flat)], alpha, gamma,
                                with_grad ? &d : nullptr) /
                 cls_den;
      if (with_grad) g_cls[static_cast<std::size_t>(p.scale)].at(b, ch, p.y, p.x) += w * d / cls_den;
    }

    std::vector<double> logits(static_cast<std::size_t>(std::max(cfg.num_classes, bins)));
    std::vector<double> onehot(static_cast<std::size_t>(cfg.num_classes));
    std::vector<double> grad(logits.size());
    for (const auto& pt : it.positives) {
      const Position p = unflatten_position(cfg, pt.flat);
      const Tensor& r = raw[static_cast<std::size_t>(p.scale)];
      const std::size_t si = static_cast<std::size_t>(p.scale);

      // Class focal loss against a one-hot target.
      const std::span<double> cl(logits.data(), static_cast<std::size_t>(cfg.num_classes));
      const std::span<double> cg(grad.data(), cl.size());
      for (int k = 0; k < cfg.num_classes; ++k) {
        cl[static_cast<std::size_t>(k)] = r.at(b, cfg.cls_channel(p.anchor, k), p.y, p.x);
        onehot[static_cast<std::size_t>(k)] = k == pt.cls ? 1.0 : 0.0;
      }
      res.cls += w * focal_loss(cl, onehot, alpha, gamma, with_grad ? cg : std::span<double>{}) / cls_den;
      if (with_grad) {
        for (int k = 0; k < cfg.num_classes; ++k) {
          g_cls[si].at(b, cfg.cls_channel(p.anchor, k), p.y, p.x) += w * cg[static_cast<std::size_t>(k)] / cls_den;
        }
      }

      // Decode sides, keeping softmax for the chain rule.
      const double stride = cfg.strides[si];
      std::array<std::vector<double>, 4> probs;
      std::array<double, 4> expect{};
      for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < bins; ++k) logits[static_cast<std::size_t>(k)] = r.at(b, cfg.dfl_channel(p.anchor, s, k), p.y, p.x);
        probs[s].resize(static_cast<std::size_t>(bins));
        expect[s] = dfl_expectation(logits.data(), bins, probs[s].data());

        const std::span<const double> sl(logits.data(), static_cast<std::size_t>(bins));
        const std::span<double> sg(grad.data(), static_cast<std::size_t>(bins));
        res.dfl += w * dfl_loss(sl, pt.sides[s], with_grad ? sg : std::span<double>{}, &res.dfl_clamped) / (4.0 * n_pos);
        if (with_grad) {
          for (int k = 0; k < bins; ++k) {
            g_dfl[si].at(b, cfg.dfl_channel(p.anchor, s, k), p.y, p.x) += w * sg[static_cast<std::size_t>(k)] / (4.0 * n_pos);
          }
        }
      }

      const auto [cx, cy] = cell_center(cfg, p);
      const Box pred{cx - stride * expect[0], cy - stride * expect[1], cx + stride * expect[2], cy + stride * expect[3]};
      std::array<double, 4> dcoord{};
      res.box += w * ciou_loss_grad(pred, pt.gt_box, dcoord, pt.ciou_alpha) / n_pos;
      if (with_grad) {
        // xmin and ymin move against their side distance, xmax and ymax with it.
        const double sign[4] = {-1.0, -1.0, 1.0, 1.0};
        for (int s = 0; s < 4; ++s) {
          const double dexp = w * dcoord[s] * sign[s] * stride / n_pos;
          for (int k = 0; k < bins; ++k) {
            const double pk = probs[s][static_cast<std::size_t>(k)];
            g_box[si].at(b, cfg.dfl_channel(p.anchor, s, k), p.y, p.x) += dexp * pk * (k - expect[s]);
          }
        }
      }
    }
  }

  res.total = weights.w_box * res.box + weights.w_cls * res.cls + weights.w_dfl * res.dfl;
  if (with_grad) {
    for (std::size_t s = 0; s < raw.size(); ++s) {
      Tensor g = Tensor::zeros(raw[s].shape());
      axpy(weights.w_box, g_box[s], g);
      axpy(weights.w_cls, g_cls[s], g);
      axpy(weights.w_dfl, g_dfl[s], g);
      res.grad.push_back(std::move(g));
    }
  }
  return res;
}

}  // namespace pcbdet
