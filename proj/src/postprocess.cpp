#include "pcbdet/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "pcbdet/errors.hpp"

namespace pcbdet {

void ThresholdSet::validate() const {
  for (const double c : confidence) {
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("confidence thresholds must lie in [0, 1]");
  }
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) throw ValidationError("nms_iou must lie in [0, 1]");
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].box.area() < dets[b].box.area();
  });
  std::vector<std::size_t> kept;
  std::array<std::vector<std::size_t>, kNumClasses> kept_by_class;
  for (const std::size_t i : order) {
    auto& same = kept_by_class[static_cast<std::size_t>(class_id(dets[i].cls))];
    const bool suppressed = std::any_of(same.begin(), same.end(),
                                        [&](std::size_t k) { return iou(dets[i].box, dets[k].box) > iou_thresh; });
    if (suppressed) continue;
    same.push_back(i);
    kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh) {
  std::vector<Detection> out;
  for (const std::size_t i : nms_indices(dets, iou_thresh)) out.push_back(dets[i]);
  return out;
}

ThresholdSet calibrate_thresholds(std::span<const ImageDetections> val_dets, std::span<const ImageGts> val_gts,
                                  double match_iou, double nms_iou) {
  if (val_gts.empty()) throw ParameterError("calibration needs a non-empty validation set");
  const MatchResult match = match_detections(val_dets, val_gts, match_iou);
  ThresholdSet out;
  out.nms_iou = nms_iou;
  for (int c = 0; c < kNumClasses; ++c) {
    const DefectClass cls = class_from_id(c);
    int n_gt = 0;
    for (const auto& g : val_gts) {
      n_gt += static_cast<int>(std::count_if(g.begin(), g.end(), [&](const LabeledBox& b) { return b.cls == cls; }));
    }
    std::vector<std::pair<double, bool>> scored;
    for (std::size_t im = 0; im < val_dets.size(); ++im) {
      for (std::size_t i = 0; i < val_dets[im].size(); ++i) {
        if (val_dets[im][i].cls == cls) scored.emplace_back(val_dets[im][i].score, match.tp[im][i]);
      }
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> scores;
    std::vector<bool> flags;
    for (const auto& [s, f] : scored) {
      scores.push_back(s);
      flags.push_back(f);
    }
    out.confidence[static_cast<std::size_t>(c)] = best_f1_point(scores, flags, n_gt).threshold;
  }
  return out;
}

std::vector<Detection> filter_detections(std::span<const Detection> dets, const ThresholdSet& thresholds) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.score >= thresholds.of(d.cls)) out.push_back(d);
  }
  return out;
}

std::string thresholds_to_json(const ThresholdSet& t) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json conf;
  for (int c = 0; c < kNumClasses; ++c) conf[std::string(class_name(class_from_id(c)))] = t.confidence[static_cast<std::size_t>(c)];
  j["confidence"] = conf;
  j["nms_iou"] = t.nms_iou;
  return j.dump(2) + "\n";
}

ThresholdSet thresholds_from_json(const std::string& text) {
  ThresholdSet t;
  try {
    const auto j = nlohmann::json::parse(text);
    for (int c = 0; c < kNumClasses; ++c) {
      t.confidence[static_cast<std::size_t>(c)] = j.at("confidence").at(std::string(class_name(class_from_id(c)))).get<double>();
    }
    t.nms_iou = j.at("nms_iou").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad thresholds JSON: ") + e.what(), 0);
  }
  t.validate();
  return t;
}

}  // namespace pcbdet
