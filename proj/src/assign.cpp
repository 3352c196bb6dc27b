#include "pcbdet/assign.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pcbdet/errors.hpp"

namespace pcbdet {

int Assignment::num_positive() const {
  return static_cast<int>(std::count_if(gt_of.begin(), gt_of.end(), [](int g) { return g != kBackground; }));
}

std::vector<int> Assignment::positions_of(int g) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < gt_of.size(); ++i) {
    if (gt_of[i] == g) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

struct Candidate {
  int flat;
  double iou;
  double align;
};

bool center_inside(const std::pair<double, double>& c, const Box& b) {
  return c.first >= b.xmin && c.first <= b.xmax && c.second >= b.ymin && c.second <= b.ymax;
}

}  // namespace

Assignment assign_targets(std::span<const LabeledBox> gts, const AnchorSet& anchors, const RawPrediction& raw,
                          int image, const DetectorConfig& cfg) {
  const int n_pos = cfg.num_positions();
  Assignment out{std::vector<int>(static_cast<std::size_t>(n_pos), kBackground)};
  if (gts.empty()) return out;
  if (static_cast<int>(anchors.per_scale.size()) != cfg.num_scales()) {
    throw ParameterError("anchor set scale count does not match the detector");
  }
  for (const auto& scale : anchors.per_scale) {
    if (static_cast<int>(scale.size()) != cfg.anchors_per_scale) {
      throw ParameterError(fmt::format("expected {} anchors per scale", cfg.anchors_per_scale));
    }
  }
  for (const auto& g : gts) {
    if (class_id(g.cls) >= cfg.num_classes) throw ParameterError("gt class outside the detector's class range");
  }

  // Per gt: top-k candidates by alignment.
  std::vector<std::vector<std::pair<int, double>>> claims(static_cast<std::size_t>(n_pos));  // (gt, align)
  for (std::size_t g = 0; g < gts.size(); ++g) {
    std::vector<Candidate> cand;
    for (int flat = 0; flat < n_pos; ++flat) {
      const Position p = unflatten_position(cfg, flat);
      if (!center_inside(cell_center(cfg, p), gts[g].box)) continue;
      const Tensor& r = raw[static_cast<std::size_t>(p.scale)];
      const double v = iou(decode_box(r, image, p, cfg, true), gts[g].box);
      const double prob = class_probs(r, image, p, cfg)[static_cast<std::size_t>(class_id(gts[g].cls))];
      cand.push_back({flat, v, prob * v});
    }
    if (cand.empty()) continue;
    std::vector<double> ious;
    for (const auto& c : cand) ious.push_back(c.iou);
    std::sort(ious.begin(), ious.end(), std::greater<>());
    const std::size_t top = std::min<std::size_t>(ious.size(), kDynamicKTopN);
    const double total = std::accumulate(ious.begin(), ious.begin() + static_cast<std::ptrdiff_t>(top), 0.0);
    const int k = std::min(static_cast<int>(cand.size()), std::clamp(static_cast<int>(std::round(total)), 1, kDynamicKTopN));
    std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.align > b.align; });
    for (int i = 0; i < k; ++i) {
      claims[static_cast<std::size_t>(cand[static_cast<std::size_t>(i)].flat)].emplace_back(static_cast<int>(g),
                                                                                         cand[static_cast<std::size_t>(i)].align);
    }
  }

  std::vector<bool> has_any(gts.size(), false);
  for (int flat = 0; flat < n_pos; ++flat) {
    const auto& c = claims[static_cast<std::size_t>(flat)];
    if (c.empty()) continue;
    // Claims arrive in gt order, so a strict comparison keeps the lower index on ties.
    auto best = c.begin();
    for (auto it = c.begin(); it != c.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    out.gt_of[static_cast<std::size_t>(flat)] = best->first;
    has_any[static_cast<std::size_t>(best->first)] = true;
  }

  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (has_any[g]) continue;
    const Box& gb = gts[g].box;
    int best = -1;
    double best_iou = -1.0;
    for (int flat = 0; flat < n_pos; ++flat) {
      if (out.gt_of[static_cast<std::size_t>(flat)] != kBackground) continue;
      const Position p = unflatten_position(cfg, flat);
      const auto [cx, cy] = cell_center(cfg, p);
      const auto& a = anchors.per_scale[static_cast<std::size_t>(p.scale)][static_cast<std::size_t>(p.anchor)];
      const Box prior{cx - a.first / 2, cy - a.second / 2, cx + a.first / 2, cy + a.second / 2};
      const double v = iou(prior, gb);
      if (v > best_iou) {
        best_iou = v;
        best = flat;
      }
    }
    if (best >= 0) out.gt_of[static_cast<std::size_t>(best)] = static_cast<int>(g);
  }
  return out;
}

}  // namespace pcbdet
