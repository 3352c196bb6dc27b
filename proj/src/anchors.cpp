#include "pcbdet/anchors.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pcbdet/errors.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

void AnchorSet::validate() const {
  if (per_scale.empty()) throw ValidationError("anchor set has no scales");
  for (const auto& scale : per_scale) {
    if (scale.empty()) throw ValidationError("anchor set has an empty scale");
    for (std::size_t i = 0; i < scale.size(); ++i) {
      if (!(scale[i].first > 0) || !(scale[i].second > 0)) throw ValidationError("anchor sizes must be positive");
      if (i > 0 && scale[i].first * scale[i].second < scale[i - 1].first * scale[i - 1].second) {
        throw ValidationError("anchors must be sorted by area within a scale");
      }
    }
  }
}

double wh_iou(const WH& a, const WH& b) {
  const double inter = std::min(a.first, b.first) * std::min(a.second, b.second);
  return inter / (a.first * a.second + b.first * b.second - inter);
}

namespace {

int best_centroid(const WH& box, std::span<const WH> centroids) {
  int best = 0;
  double best_iou = -1.0;
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const double v = wh_iou(box, centroids[j]);
    if (v > best_iou) {
      best_iou = v;
      best = static_cast<int>(j);
    }
  }
  return best;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double mean_best_iou(std::span<const WH> boxes, std::span<const WH> centroids) {
  double total = 0.0;
  for (const auto& b : boxes) total += wh_iou(b, centroids[static_cast<std::size_t>(best_centroid(b, centroids))]);
  return total / static_cast<double>(boxes.size());
}

KMeansResult kmeans_anchors(std::span<const WH> boxes, int k, int iters, std::uint64_t seed, int num_scales) {
  if (k < 1) throw ParameterError("kmeans needs k >= 1");
  if (static_cast<int>(boxes.size()) < k) {
    throw ParameterError(fmt::format("kmeans needs at least k={} boxes, got {}", k, boxes.size()));
  }
  if (num_scales < 1 || k % num_scales != 0) {
    throw ParameterError(fmt::format("k={} cannot be split evenly over {} scales", k, num_scales));
  }
  if (iters < 0) throw ParameterError("kmeans iterations must be >= 0");
  for (const auto& b : boxes) {
    if (!(b.first > 0) || !(b.second > 0)) throw ParameterError("kmeans box sizes must be positive");
  }

  // k-means++ seeding with d = 1 - IoU.
  Rng rng(seed);
  std::vector<WH> centroids;
  centroids.push_back(boxes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(boxes.size()) - 1))]);
  std::vector<double> d2(boxes.size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const double d = 1.0 - wh_iou(boxes[i], centroids[static_cast<std::size_t>(best_centroid(boxes[i], centroids))]);
      d2[i] = d * d;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // Fewer distinct sizes than k: duplicate an existing box.
      pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(boxes.size()) - 1));
    } else {
      double r = rng.uniform() * total;
      pick = boxes.size() - 1;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(boxes[pick]);
  }

  KMeansResult result;
  double current = mean_best_iou(boxes, centroids);
  result.mean_iou_history.push_back(current);
  std::vector<int> assign(boxes.size(), -1);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const int a = best_centroid(boxes[i], centroids);
      changed = changed || a != assign[i];
      assign[i] = a;
    }
    if (!changed && it > 0) break;
    std::vector<WH> next = centroids;
    for (int j = 0; j < k; ++j) {
      std::vector<double> ws, hs;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (assign[i] != j) continue;
        ws.push_back(boxes[i].first);
        hs.push_back(boxes[i].second);
      }
      if (!ws.empty()) next[static_cast<std::size_t>(j)] = {median(ws), median(hs)};
    }
    const double score = mean_best_iou(boxes, next);
    if (score < current) break;
    centroids = std::move(next);
    current = score;
    result.mean_iou_history.push_back(current);
  }

  std::stable_sort(centroids.begin(), centroids.end(),
                   [](const WH& a, const WH& b) { return a.first * a.second < b.first * b.second; });
  const int per = k / num_scales;
  for (int s = 0; s < num_scales; ++s) {
    result.anchors.per_scale.emplace_back(centroids.begin() + s * per, centroids.begin() + (s + 1) * per);
  }
  return result;
}

}  // namespace pcbdet
