#include "pcbdet/evaluate.hpp"

#include <algorithm>
#include <numeric>

#include "pcbdet/errors.hpp"

namespace pcbdet {

MatchResult match_detections(std::span<const ImageDetections> dets, std::span<const ImageGts> gts, double tau) {
  if (dets.size() != gts.size()) throw ShapeError("match_detections: detections and gts cover different image counts");
  MatchResult out;
  out.tp.resize(dets.size());
  out.fn.resize(dets.size());
  for (std::size_t im = 0; im < dets.size(); ++im) {
    const auto& d = dets[im];
    const auto& g = gts[im];
    out.tp[im].assign(d.size(), false);
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a].score > d[b].score; });
    std::vector<bool> used(g.size(), false);
    for (const std::size_t i : order) {
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (used[j] || g[j].cls != d[i].cls) continue;
        const double v = iou(d[i].box, g[j].box);
        if (v >= tau && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = true;
        out.tp[im][i] = true;
      }
    }
    out.fn[im].fill(0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!used[j]) ++out.fn[im][static_cast<std::size_t>(class_id(g[j].cls))];
    }
  }
  return out;
}

ApResult average_precision(const std::vector<bool>& flags, int n_gt) {
  if (n_gt < 0) throw ParameterError("n_gt must be >= 0");
  if (n_gt == 0) return {0.0, true};
  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  // Envelope from the right so p_interp(r) = max precision at recall >= r.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  std::size_t j = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (j < recall.size() && recall[j] < r) ++j;
    if (j == recall.size()) break;
    sum += precision[j];
  }
  return {sum / 101.0, false};
}

double iou_threshold(int i) { return (50 + 5 * i) / 100.0; }

OperatingPoint best_f1_point(std::span<const double> scores, const std::vector<bool>& flags, int n_gt) {
  OperatingPoint best;
  if (n_gt <= 0) return best;
  int tp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    tp += flags[i] ? 1 : 0;
    // Cut only after the last detection sharing this score.
    if (i + 1 < scores.size() && scores[i + 1] == scores[i]) continue;
    const double n = static_cast<double>(i + 1);
    const double f1 = 2.0 * tp / (n + n_gt);
    // Strict improvement only: earlier cuts carry higher thresholds.
    if (f1 > best.f1) best = {scores[i], f1, tp / n, static_cast<double>(tp) / n_gt};
  }
  return best;
}

EvalReport evaluate(std::span<const ImageDetections> dets, std::span<const ImageGts> gts, int num_classes) {
  if (dets.size() != gts.size()) throw ShapeError("evaluate: detections and gts cover different image counts");
  if (num_classes < 1 || num_classes > kNumClasses) throw ParameterError("evaluate: bad class count");
  EvalReport rep;
  rep.images = static_cast<int>(gts.size());
  for (const auto& g : gts) rep.instances += static_cast<int>(g.size());

  std::array<MatchResult, kNumIouThresholds> matches;
  for (int t = 0; t < kNumIouThresholds; ++t) matches[static_cast<std::size_t>(t)] = match_detections(dets, gts, iou_threshold(t));

  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const DefectClass cls = class_from_id(c);
    ClassMetrics m;
    m.cls = cls;
    for (const auto& g : gts) {
      const auto n = std::count_if(g.begin(), g.end(), [&](const LabeledBox& b) { return b.cls == cls; });
      m.instances += static_cast<int>(n);
      m.images += n > 0 ? 1 : 0;
    }
    // All detections of this class across images, by descending score.
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t im = 0; im < dets.size(); ++im) {
      for (std::size_t i = 0; i < dets[im].size(); ++i) {
        if (dets[im][i].cls == cls) order.emplace_back(im, i);
      }
    }
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      return dets[a.first][a.second].score > dets[b.first][b.second].score;
    });
    std::vector<double> scores;
    for (const auto& [im, i] : order) scores.push_back(dets[im][i].score);

    for (int t = 0; t < kNumIouThresholds; ++t) {
      std::vector<bool> flags;
      for (const auto& [im, i] : order) flags.push_back(matches[static_cast<std::size_t>(t)].tp[im][i]);
      const ApResult ap = average_precision(flags, m.instances);
      m.ap[static_cast<std::size_t>(t)] = ap.ap;
      m.no_gt = ap.no_gt;
      if (t == 0) {
        const OperatingPoint op = best_f1_point(scores, flags, m.instances);
        m.precision = op.precision;
        m.recall = op.recall;
        m.confidence = op.threshold;
        if (!m.no_gt) {
          int tp = 0, fp = 0;
          for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] < op.threshold || op.f1 == 0.0) break;
            (flags[i] ? tp : fp) += 1;
          }
          rep.true_positives += tp;
          rep.false_positives += fp;
          rep.false_negatives += m.instances - tp;
        }
      }
    }
    m.map50 = m.ap[0];
    m.map50_95 = std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / kNumIouThresholds;
    if (!m.no_gt) {
      ++present;
      rep.precision += m.precision;
      rep.recall += m.recall;
      rep.map50 += m.map50;
      rep.map50_95 += m.map50_95;
    }
    rep.classes.push_back(m);
  }
  if (present > 0) {
    rep.precision /= present;
    rep.recall /= present;
    rep.map50 /= present;
    rep.map50_95 /= present;
  }
  return rep;
}

}  // namespace pcbdet
