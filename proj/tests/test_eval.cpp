#include <gtest/gtest.h>

#include <cmath>

#include "eval_oracle.hpp"
#include "pcbdet/errors.hpp"
#include "pcbdet/evaluate.hpp"
#include "pcbdet/postprocess.hpp"
#include "pcbdet/report.hpp"

namespace pcbdet {
namespace {

Detection det(Box b, DefectClass c, double s) { return Detection{b, c, s}; }

std::vector<Detection> random_dets(Rng& rng, int n, int classes = 3) {
  std::vector<Detection> d;
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(0, 80), y = rng.uniform(0, 80);
    d.push_back(det(Box{x, y, x + rng.uniform(2, 30), y + rng.uniform(2, 30)}, class_from_id(rng.uniform_int(0, classes - 1)),
                    rng.uniform_int(0, 50) / 50.0));
  }
  return d;
}

TEST(Nms, Examples) {
  const Box b{0, 0, 10, 10};
  const std::vector<Detection> same = {det(b, DefectClass::Short, 0.8), det(b, DefectClass::Short, 0.9)};
  EXPECT_EQ(nms_indices(same, 0.5), (std::vector<std::size_t>{1}));
  const std::vector<Detection> diff = {det(b, DefectClass::Short, 0.9), det(b, DefectClass::Spur, 0.8)};
  EXPECT_EQ(nms_indices(diff, 0.5), (std::vector<std::size_t>{0, 1}));
}

TEST(Nms, TieBreaksBySmallerAreaThenInputOrder) {
  const std::vector<Detection> d = {det(Box{0, 0, 10, 10}, DefectClass::Short, 0.5),
                                    det(Box{0, 0, 10, 9}, DefectClass::Short, 0.5),
                                    det(Box{0, 0, 10, 9}, DefectClass::Short, 0.5)};
  EXPECT_EQ(nms_indices(d, 0.5), (std::vector<std::size_t>{1}));
  EXPECT_EQ(nms_indices(d, 0.95), (std::vector<std::size_t>{1, 0}));
}

TEST(Nms, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto d = random_dets(rng, rng.uniform_int(0, 200));
    const double t = rng.uniform(0.1, 0.9);
    EXPECT_EQ(nms_indices(d, t), testing::brute_nms(d, t));
  }
}

TEST(Nms, IdempotentAndKeepsGroupMaxima) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_dets(rng, 60);
    const auto once = nms(d, 0.5);
    EXPECT_EQ(nms(once, 0.5), once);
    // Every suppressed detection overlaps a kept one of its class with at least its score.
    for (const auto& x : d) {
      bool covered = false;
      for (const auto& k : once) covered = covered || (k.cls == x.cls && (k == x || (iou(k.box, x.box) > 0.5 && k.score >= x.score)));
      EXPECT_TRUE(covered);
    }
  }
}

TEST(Match, Examples) {
  const std::vector<ImageGts> gts = {{{Box{0, 0, 10, 10}, DefectClass::Short}}};
  std::vector<ImageDetections> d = {{det(Box{0, 0, 10, 10}, DefectClass::Short, 0.7)}};
  EXPECT_EQ(match_detections(d, gts, 0.5).tp[0], (std::vector<bool>{true}));
  d = {{det(Box{0, 0, 10, 10}, DefectClass::Short, 0.8), det(Box{0, 0, 10, 9}, DefectClass::Short, 0.9)}};
  const auto m = match_detections(d, gts, 0.5);
  EXPECT_EQ(m.tp[0], (std::vector<bool>{false, true}));
  EXPECT_EQ(m.fn[0][static_cast<std::size_t>(class_id(DefectClass::Short))], 0);
}

TEST(Match, MatchesBruteForceAndBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ImageDetections> d;
    std::vector<ImageGts> g;
    testing::random_eval_instance(rng, 3, 5, 2, d, g);
    const double tau = rng.uniform(0.3, 0.9);
    const auto m = match_detections(d, g, tau);
    EXPECT_EQ(m.tp, testing::brute_match(d, g, tau));
    for (std::size_t im = 0; im < d.size(); ++im) {
      for (int c = 0; c < 2; ++c) {
        int tp = 0, nd = 0, ng = 0;
        for (std::size_t i = 0; i < d[im].size(); ++i) {
          if (class_id(d[im][i].cls) != c) continue;
          ++nd;
          tp += m.tp[im][i];
        }
        for (const auto& b : g[im]) ng += class_id(b.cls) == c;
        EXPECT_LE(tp, std::min(nd, ng));
        EXPECT_EQ(m.fn[im][static_cast<std::size_t>(c)], ng - tp);
      }
    }
  }
}

TEST(AveragePrecision, Examples) {
  EXPECT_EQ(average_precision({true}, 1).ap, 1.0);
  EXPECT_EQ(average_precision({}, 3).ap, 0.0);
  const auto none = average_precision({false}, 0);
  EXPECT_TRUE(none.no_gt);
  EXPECT_EQ(none.ap, 0.0);
  const double expect = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101;
  EXPECT_NEAR(average_precision({true, false, true}, 2).ap, expect, 1e-12);
  EXPECT_NEAR(testing::brute_ap({true, false, true}, 2), expect, 1e-12);
  EXPECT_NEAR(expect, 0.834983498349835, 1e-12);
}

TEST(AveragePrecision, MatchesDefinitionOnRandomFlags) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<bool> flags;
    const int n = rng.uniform_int(0, 30);
    int tp = 0;
    for (int i = 0; i < n; ++i) {
      flags.push_back(rng.bernoulli(0.5));
      tp += flags.back();
    }
    const int n_gt = tp + rng.uniform_int(0, 5);
    EXPECT_NEAR(average_precision(flags, n_gt).ap, testing::brute_ap(flags, n_gt), 1e-12);
  }
}

TEST(MapRange, PerfectAndShiftedDetections) {
  std::vector<ImageGts> gts = {{{Box{0, 0, 10, 10}, DefectClass::Short}, {Box{20, 20, 30, 40}, DefectClass::Spur}}};
  std::vector<ImageDetections> dets = {{det(Box{0, 0, 10, 10}, DefectClass::Short, 0.9),
                                        det(Box{20, 20, 30, 40}, DefectClass::Spur, 0.8)}};
  auto r = evaluate(dets, gts);
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_EQ(r.map50_95, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);

  // IoU exactly 0.6 for both: AP is 1 at 0.50, 0.55, 0.60 and 0 above.
  dets = {{det(Box{0, 0, 10, 6}, DefectClass::Short, 0.9), det(Box{20, 20, 30, 32}, DefectClass::Spur, 0.8)}};
  r = evaluate(dets, gts);
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_NEAR(r.map50_95, 0.3, 1e-15);

  dets = {{}};
  r = evaluate(dets, gts);
  EXPECT_EQ(r.map50, 0.0);
  EXPECT_EQ(r.map50_95, 0.0);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
}

TEST(MapRange, MatchesBruteForceEvaluator) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ImageDetections> d;
    std::vector<ImageGts> g;
    testing::random_eval_instance(rng, 3, 5, 2, d, g);
    const auto r = evaluate(d, g, 2);
    const auto b = testing::brute_evaluate(d, g, 2);
    EXPECT_NEAR(r.map50, b.map50, 1e-12);
    EXPECT_NEAR(r.map50_95, b.map50_95, 1e-12);
  }
}

TEST(MapRange, RankOnlyAndMonotoneInThreshold) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ImageDetections> d;
    std::vector<ImageGts> g;
    testing::random_eval_instance(rng, 3, 5, 2, d, g);
    const auto r = evaluate(d, g, 2);
    auto warped = d;
    for (auto& im : warped) {
      for (auto& x : im) x.score = std::pow(x.score, 3.0) * 0.5;
    }
    const auto w = evaluate(warped, g, 2);
    EXPECT_EQ(r.map50, w.map50);
    EXPECT_EQ(r.map50_95, w.map50_95);
    for (const auto& c : r.classes) {
      for (int t = 1; t < kNumIouThresholds; ++t) EXPECT_LE(c.ap[static_cast<std::size_t>(t)], c.ap[static_cast<std::size_t>(t - 1)]);
    }
  }
}

TEST(Calibrate, Examples) {
  // Perfect detector at 0.9 picks 0.9; absent classes get 1.0.
  const std::vector<ImageGts> gts = {{{Box{0, 0, 10, 10}, DefectClass::Short}}, {{Box{5, 5, 15, 15}, DefectClass::Short}}};
  std::vector<ImageDetections> d = {{det(Box{0, 0, 10, 10}, DefectClass::Short, 0.9)},
                                    {det(Box{5, 5, 15, 15}, DefectClass::Short, 0.9)}};
  auto t = calibrate_thresholds(d, gts);
  EXPECT_EQ(t.of(DefectClass::Short), 0.9);
  EXPECT_EQ(t.of(DefectClass::Spur), 1.0);

  // Scores {0.9 TP, 0.6 FP, 0.5 TP}: F1 = 2/3, 1/2, 4/5 -> 0.5.
  d = {{det(Box{0, 0, 10, 10}, DefectClass::Short, 0.9), det(Box{50, 50, 60, 60}, DefectClass::Short, 0.6)},
       {det(Box{5, 5, 15, 15}, DefectClass::Short, 0.5)}};
  t = calibrate_thresholds(d, gts);
  EXPECT_EQ(t.of(DefectClass::Short), 0.5);
  EXPECT_THROW(calibrate_thresholds({}, {}), ParameterError);
}

TEST(Calibrate, NoBetterCutExists) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ImageDetections> d;
    std::vector<ImageGts> g;
    testing::random_eval_instance(rng, 3, 5, 2, d, g);
    const auto t = calibrate_thresholds(d, g);
    const auto tp = testing::brute_match(d, g, 0.5);
    for (int c = 0; c < 2; ++c) {
      const DefectClass cls = class_from_id(c);
      int n_gt = 0;
      for (const auto& im : g) n_gt += static_cast<int>(std::count_if(im.begin(), im.end(), [&](const auto& b) { return b.cls == cls; }));
      auto f1_at = [&](double thr) {
        int kept = 0, hits = 0;
        for (std::size_t im = 0; im < d.size(); ++im) {
          for (std::size_t i = 0; i < d[im].size(); ++i) {
            if (d[im][i].cls != cls || d[im][i].score < thr) continue;
            ++kept;
            hits += tp[im][i];
          }
        }
        return kept + n_gt == 0 ? 0.0 : 2.0 * hits / (kept + n_gt);
      };
      const double chosen = f1_at(t.of(cls));
      for (const auto& im : d) {
        for (const auto& x : im) {
          if (x.cls == cls) EXPECT_LE(f1_at(x.score), chosen + 1e-15);
        }
      }
    }
  }
}

TEST(Filter, Examples) {
  const std::vector<Detection> d = {det(Box{0, 0, 1, 1}, DefectClass::Short, 0.3), det(Box{0, 0, 1, 1}, DefectClass::Spur, 0.7),
                                    det(Box{0, 0, 1, 1}, DefectClass::Short, 0.6)};
  ThresholdSet t;
  EXPECT_EQ(filter_detections(d, t), d);
  t.confidence.fill(1.0);
  EXPECT_TRUE(filter_detections(d, t).empty());
  t.confidence[static_cast<std::size_t>(class_id(DefectClass::Short))] = 0.5;
  t.confidence[static_cast<std::size_t>(class_id(DefectClass::Spur))] = 0.8;
  EXPECT_EQ(filter_detections(d, t), (std::vector<Detection>{d[2]}));
}

TEST(Thresholds, JsonRoundTrip) {
  ThresholdSet t;
  for (int c = 0; c < kNumClasses; ++c) t.confidence[static_cast<std::size_t>(c)] = 0.1 * c + 1.0 / 3;
  t.nms_iou = 0.45;
  EXPECT_EQ(thresholds_from_json(thresholds_to_json(t)), t);
  EXPECT_THROW(thresholds_from_json("{}"), ParseError);
}

EvalReport perfect_report(int images, const std::vector<int>& per_class) {
  std::vector<ImageGts> gts(static_cast<std::size_t>(images));
  int k = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (int i = 0; i < per_class[c]; ++i, ++k) {
      const double x = (k % 7) * 12.0, y = (k / 7 % 7) * 12.0;
      gts[static_cast<std::size_t>(k % images)].push_back({Box{x, y, x + 10, y + 10}, class_from_id(static_cast<int>(c))});
    }
  }
  std::vector<ImageDetections> dets(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (const auto& g : gts[i]) dets[i].push_back(det(g.box, g.cls, 0.9));
  }
  return evaluate(dets, gts);
}

TEST(Report, HeaderAndCounts) {
  const auto r = perfect_report(66, {46, 48, 55, 45, 37, 47});
  const std::string table = report_table(r);
  EXPECT_EQ(table.substr(0, table.find('\n')), "Class\tImages\tInstances\tP\tR\tmAP50\tmAP50-95");
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "all\t66\t278\t1.00\t1.00\t1.00\t1.00");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 6);
    EXPECT_NE(line.find("\t1.00\t1.00\t1.00\t1.00"), std::string::npos);
  }
  EXPECT_EQ(rows, 6);
}

TEST(Report, AbsentClassesAreOmittedFromTable) {
  const auto r = perfect_report(4, {3, 0, 2});
  const std::string table = report_table(r);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
  EXPECT_EQ(table.find("mouse_bite"), std::string::npos);
  EXPECT_TRUE(r.classes[1].no_gt);
}

TEST(Report, JsonRoundTripRendersIdentically) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ImageDetections> d;
    std::vector<ImageGts> g;
    testing::random_eval_instance(rng, 4, 5, 3, d, g);
    const auto r = evaluate(d, g);
    const std::string json = report_to_json(r, R"({"seed": 4})");
    EXPECT_EQ(report_table(report_from_json(json)), report_table(r));
    EXPECT_EQ(report_to_json(report_from_json(json), R"({"seed": 4})"), json);
  }
}

TEST(Curves, RowsAndRoundTrip) {
  std::vector<EpochLosses> rows;
  for (int e = 0; e < 3; ++e) {
    rows.push_back({e, "train", 1.0 / (e + 3), 0.1 * std::exp(-e), std::sqrt(2.0) + e});
    rows.push_back({e, "val", 2.0 / (e + 7), 1e-17 * e, 0.3});
  }
  const std::string csv = curves_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(parse_curves_csv(csv), rows);
  EXPECT_THROW(parse_curves_csv("epoch,split\n"), ParseError);
}

}  // namespace
}  // namespace pcbdet
