// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all ten
//   acceptance --only 7   run one (ctest registers each separately)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eval_oracle.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "pcbdet/anchors.hpp"
#include "pcbdet/assign.hpp"
#include "pcbdet/evaluate.hpp"
#include "pcbdet/gan.hpp"
#include "pcbdet/losses.hpp"
#include "pcbdet/optim.hpp"
#include "pcbdet/pipeline.hpp"
#include "pcbdet/postprocess.hpp"
#include "pcbdet/report.hpp"

namespace pcbdet {
namespace {

namespace fs = std::filesystem;
using testing::check_op_gradient;
using testing::rel_error;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(fmt::format("{}{}", ok ? "" : "FAILED ", what));
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pcbdet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1. Finite-difference gradient suite.
Outcome gradients() {
  Outcome out;
  const auto t0 = Clock::now();
  constexpr int kFixtures = 20;
  constexpr double kTol = 1e-5;

  struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    testing::TapeFn op;
  };
  const std::vector<OpCase> op_cases = {
      {"conv2d", {{2, 3, 5, 5}, {4, 3, 3, 3}}, [](Tape& t, std::span<const Var> v) { return ops::conv2d(t, v[0], v[1], {1, 1, 1}); }},
      {"conv2d_stride2", {{1, 2, 6, 6}, {3, 2, 3, 3}}, [](Tape& t, std::span<const Var> v) { return ops::conv2d(t, v[0], v[1], {2, 1, 1}); }},
      {"conv2d_depthwise", {{1, 3, 5, 5}, {3, 1, 3, 3}}, [](Tape& t, std::span<const Var> v) { return ops::conv2d(t, v[0], v[1], {1, 1, 3}); }},
      {"add_bias", {{2, 3, 4, 4}, {3}}, [](Tape& t, std::span<const Var> v) { return ops::add_bias(t, v[0], v[1]); }},
      {"add_bias_2d", {{3, 4}, {4}}, [](Tape& t, std::span<const Var> v) { return ops::add_bias(t, v[0], v[1]); }},
      {"add", {{2, 3}, {2, 3}}, [](Tape& t, std::span<const Var> v) { return ops::add(t, v[0], v[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape& t, std::span<const Var> v) { return ops::mul(t, v[0], v[1]); }},
      {"scale", {{2, 3}}, [](Tape& t, std::span<const Var> v) { return ops::scale(t, v[0], -1.7); }},
      {"leaky_relu", {{2, 7}}, [](Tape& t, std::span<const Var> v) { return ops::activation(t, v[0], Activation::LeakyRelu); }},
      {"sigmoid", {{2, 7}}, [](Tape& t, std::span<const Var> v) { return ops::activation(t, v[0], Activation::Sigmoid); }},
      {"silu", {{2, 7}}, [](Tape& t, std::span<const Var> v) { return ops::activation(t, v[0], Activation::Silu); }},
      {"upsample_nearest", {{1, 2, 3, 3}}, [](Tape& t, std::span<const Var> v) { return ops::upsample_nearest(t, v[0], 2); }},
      {"concat_channels", {{2, 2, 3, 3}, {2, 3, 3, 3}}, [](Tape& t, std::span<const Var> v) { return ops::concat_channels(t, v); }},
      {"sum", {{3, 4}}, [](Tape& t, std::span<const Var> v) { return ops::sum(t, v[0]); }},
      {"mean", {{3, 4}}, [](Tape& t, std::span<const Var> v) { return ops::mean(t, v[0]); }},
      {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, std::span<const Var> v) { return ops::matmul(t, v[0], v[1]); }},
      {"reshape", {{2, 6}}, [](Tape& t, std::span<const Var> v) { return ops::reshape(t, v[0], {3, 4}); }},
      {"bce_with_logits", {{4, 1}}, [](Tape& t, std::span<const Var> v) { return ops::bce_with_logits(t, v[0], 0.3); }},
  };
  double op_worst = 0;
  std::string op_worst_name;
  for (const auto& c : op_cases) {
    for (int f = 0; f < kFixtures; ++f) {
      std::vector<Tensor> inputs;
      for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        inputs.push_back(Tensor::filled(c.shapes[i], UniformFill{-2.0, 2.0, mix64(f * 131 + i + 7)}));
      }
      const double e = check_op_gradient(c.op, inputs, mix64(f + 999));
      if (e > op_worst) {
        op_worst = e;
        op_worst_name = c.name;
      }
    }
  }
  out.require(op_worst <= kTol, fmt::format("{} ops x {} fixtures, worst rel err {:.2e} ({})", op_cases.size(),
                                            kFixtures, op_worst, op_worst_name));

  Rng rng(2024);
  const double h = 1e-6;
  double focal_worst = 0, ciou_worst = 0, dfl_worst = 0, total_worst = 0;
  for (int f = 0; f < kFixtures; ++f) {
    std::vector<double> logits(6), targets(6), grad(6);
    for (auto& x : logits) x = rng.uniform(-4, 4);
    for (auto& t : targets) t = rng.bernoulli(0.3) ? rng.uniform(0, 1) : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    focal_loss(logits, targets, 0.25, 2.0, grad);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto l = logits;
      l[i] += h;
      const double fp = focal_loss(l, targets);
      l[i] -= 2 * h;
      const double fm = focal_loss(l, targets);
      focal_worst = std::max(focal_worst, rel_error(grad[i], (fp - fm) / (2 * h)));
    }

    const double px = rng.uniform(0, 30), py = rng.uniform(0, 30);
    const Box pred{px, py, px + rng.uniform(2, 20), py + rng.uniform(2, 20)};
    const double gx = px + rng.uniform(-8, 8), gy = py + rng.uniform(-8, 8);
    const Box gt{gx, gy, gx + rng.uniform(2, 20), gy + rng.uniform(2, 20)};
    std::array<double, 4> cg{};
    const double alpha = ciou_alpha(pred, gt);
    ciou_loss_grad(pred, gt, cg, alpha);
    for (int k = 0; k < 4; ++k) {
      Box p = pred, m = pred;
      double* pc[4] = {&p.xmin, &p.ymin, &p.xmax, &p.ymax};
      double* mc[4] = {&m.xmin, &m.ymin, &m.xmax, &m.ymax};
      *pc[k] += h;
      *mc[k] -= h;
      ciou_worst = std::max(ciou_worst, rel_error(cg[static_cast<std::size_t>(k)],
                                                  (ciou_loss(p, gt, alpha) - ciou_loss(m, gt, alpha)) / (2 * h)));
    }

    std::vector<double> dl(8), dg(8);
    for (auto& x : dl) x = rng.uniform(-3, 3);
    const double y = rng.uniform(0, 7);
    dfl_loss(dl, y, dg);
    for (std::size_t i = 0; i < dl.size(); ++i) {
      auto l = dl;
      l[i] += h;
      const double fp = dfl_loss(l, y);
      l[i] -= 2 * h;
      const double fm = dfl_loss(l, y);
      dfl_worst = std::max(dfl_worst, rel_error(dg[i], (fp - fm) / (2 * h)));
    }

    const DetectorConfig cfg = testing::tiny_config();
    RawPrediction raw = testing::random_raw(cfg, 2, mix64(f + 31));
    std::vector<std::vector<LabeledBox>> gts = {testing::random_gts(cfg, 2, rng), testing::random_gts(cfg, 3, rng)};
    const AnchorSet anchors = testing::uniform_anchors(cfg);
    std::vector<Assignment> asg;
    for (int im = 0; im < 2; ++im) asg.push_back(assign_targets(gts[static_cast<std::size_t>(im)], anchors, raw, im, cfg));
    const auto frozen = compute_loss_targets(raw, asg, gts, cfg);
    const LossResult res = total_loss(raw, frozen, cfg, LossWeights{});
    for (std::size_t s = 0; s < raw.size(); ++s) {
      for (std::size_t i = 0; i < raw[s].size(); ++i) {
        const double orig = raw[s][i];
        raw[s][i] = orig + h;
        const double fp = total_loss(raw, frozen, cfg, LossWeights{}, false).total;
        raw[s][i] = orig - h;
        const double fm = total_loss(raw, frozen, cfg, LossWeights{}, false).total;
        raw[s][i] = orig;
        total_worst = std::max(total_worst, rel_error(res.grad[s][i], (fp - fm) / (2 * h)));
      }
    }
  }
  out.require(focal_worst <= kTol, fmt::format("focal worst {:.2e}", focal_worst));
  out.require(ciou_worst <= kTol, fmt::format("ciou worst {:.2e}", ciou_worst));
  out.require(dfl_worst <= kTol, fmt::format("dfl worst {:.2e}", dfl_worst));
  out.require(total_worst <= kTol, fmt::format("total worst {:.2e}", total_worst));
  const double secs = seconds_since(t0);
  out.require(secs < 60, fmt::format("{:.1f} s", secs));
  return out;
}

// 2. NMS and IoU against brute force.
Outcome nms_oracle() {
  Outcome out;
  Rng rng(77);
  int mismatches = 0;
  double iou_worst = 0;
  for (int set = 0; set < 1000; ++set) {
    const int n = rng.uniform_int(0, 200);
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(0, 80), y = rng.uniform(0, 80);
      dets.push_back({Box{x, y, x + rng.uniform(2, 30), y + rng.uniform(2, 30)}, class_from_id(rng.uniform_int(0, 2)),
                      rng.uniform_int(0, 40) / 40.0});
    }
    if (nms_indices(dets, 0.5) != testing::brute_nms(dets, 0.5)) ++mismatches;
    for (int k = 0; k + 1 < std::min(n, 20); ++k) {
      const Box& a = dets[static_cast<std::size_t>(k)].box;
      const Box& b = dets[static_cast<std::size_t>(k + 1)].box;
      const double iw = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
      const double ih = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
      const double inter = iw * ih;
      const double direct = inter / ((a.xmax - a.xmin) * (a.ymax - a.ymin) + (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter);
      iou_worst = std::max(iou_worst, std::abs(iou(a, b) - direct));
    }
  }
  out.require(mismatches == 0, fmt::format("{} of 1000 kept-index mismatches", mismatches));
  out.require(iou_worst <= 1e-12, fmt::format("IoU max abs diff {:.1e}", iou_worst));
  return out;
}

// 3. Evaluator against exhaustive brute force, plus the worked AP example.
Outcome ap_oracle() {
  Outcome out;
  Rng rng(5150);
  int mismatches = 0;
  for (int inst = 0; inst < 500; ++inst) {
    std::vector<ImageDetections> dets;
    std::vector<ImageGts> gts;
    testing::random_eval_instance(rng, 3, 5, 2, dets, gts);
    const EvalReport r = evaluate(dets, gts, 2);
    const testing::BruteMap b = testing::brute_evaluate(dets, gts, 2);
    if (r.map50 != b.map50 || r.map50_95 != b.map50_95) ++mismatches;
  }
  out.require(mismatches == 0, fmt::format("{} of 500 instances differ from brute force", mismatches));
  // Independent 101-point sum: precision 1 up to recall 0.5, then 2/3.
  double hand = 0;
  for (int i = 0; i <= 100; ++i) hand += (i <= 50 ? 1.0 : 2.0 / 3.0);
  hand /= 101;
  const double ap = average_precision({true, false, true}, 2).ap;
  out.require(std::abs(ap - hand) <= 1e-9 && std::abs(ap - 0.834983498349835) <= 1e-9,
              fmt::format("worked example AP {:.12f} (hand {:.12f})", ap, hand));
  return out;
}

// 4. Nadam against an independent scalar recurrence.
Outcome nadam_oracle() {
  Outcome out;
  struct Scalar {
    double m = 0, v = 0;
    int t = 0;
    double step(double theta, double g, double lr) {
      ++t;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double c1 = 1 - std::pow(0.9, t);
      return theta - lr * (0.9 * (m / c1) + 0.1 * g / c1) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
  };
  std::vector<Tensor> p = {Tensor({1}, 1.0)};
  OptState st = OptState::for_params(p);
  Scalar ref;
  double theta = 1.0, worst = 0;
  for (int i = 0; i < 100; ++i) {
    nadam_step(p, std::vector<Tensor>{Tensor({1}, 2.0 * p[0][0])}, st, {}, 1e-3);
    theta = ref.step(theta, 2.0 * theta, 1e-3);
    worst = std::max(worst, std::abs(p[0][0] - theta));
  }
  out.require(worst <= 1e-12, fmt::format("100-step trajectory max diff {:.1e}", worst));

  std::vector<Tensor> q = {Tensor({1}, 0.0)};
  OptState qs = OptState::for_params(q);
  nadam_step(q, std::vector<Tensor>{Tensor({1}, 1.0)}, qs, {}, 1e-3);
  const double expected = -0.001 * 1.9 / (1 + 1e-8);
  out.require(std::abs(q[0][0] - expected) <= 1e-15, fmt::format("first step {:.15g}", q[0][0]));

  std::vector<Tensor> c = {Tensor({1}, 1.0)};
  OptState cs = OptState::for_params(c);
  int reached = -1;
  for (int i = 1; i <= 2000 && reached < 0; ++i) {
    nadam_step(c, std::vector<Tensor>{Tensor({1}, 2.0 * c[0][0])}, cs, {}, 1e-3);
    if (std::abs(c[0][0]) < 1e-3) reached = i;
  }
  out.require(reached > 0, reached > 0 ? fmt::format("|theta| < 1e-3 at step {}", reached)
                                       : fmt::format("|theta| = {:.4f} after 2000 steps", std::abs(c[0][0])));
  return out;
}

// 5. Cosine schedule endpoints and monotonicity.
Outcome schedule() {
  Outcome out;
  const CosineSchedule s{1e-3, 1e-5, 1000};
  out.require(cosine_lr(0, s) == 0.001, fmt::format("eta(0) = {}", cosine_lr(0, s)));
  out.require(cosine_lr(1000, s) == 1e-5, fmt::format("eta(T) = {}", cosine_lr(1000, s)));
  bool monotone = true;
  for (std::int64_t t = 1; t <= 1000; ++t) monotone = monotone && cosine_lr(t, s) <= cosine_lr(t - 1, s);
  const CosineSchedule dense{1e-3, 0.0, 100000};
  for (std::int64_t t = 1; t <= 100000; ++t) monotone = monotone && cosine_lr(t, dense) <= cosine_lr(t - 1, dense);
  out.require(monotone, "nonincreasing over T=1000 and T=100000 grids");
  return out;
}

// 6. k-means anchors.
Outcome anchors() {
  Outcome out;
  Rng rng(606);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<WH> boxes;
    const int n = rng.uniform_int(12, 120);
    for (int i = 0; i < n; ++i) boxes.emplace_back(rng.uniform(3, 48), rng.uniform(3, 48));
    const auto r = kmeans_anchors(boxes, 6, 40, rng.next_u64(), 2);
    for (std::size_t i = 1; i < r.mean_iou_history.size(); ++i) violations += r.mean_iou_history[i] < r.mean_iou_history[i - 1];
  }
  out.require(violations == 0, fmt::format("{} decreasing iterations over 100 random sets", violations));
  std::vector<WH> two(50, WH{10, 10});
  two.insert(two.end(), 50, WH{40, 40});
  bool exact = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    exact = exact && kmeans_anchors(two, 2, 20, seed).anchors.per_scale[0] == std::vector<WH>{{10, 10}, {40, 40}};
  }
  out.require(exact, "two-size fixture recovers (10,10) and (40,40)");
  return out;
}

// 7. End-to-end desk-scale run.
Outcome end_to_end() {
  Outcome out;
  const RunConfig cfg = RunConfig::defaults();
  const RunPaths paths{scratch("e2e")};
  run_synth_data(cfg, paths);
  const auto val = load_split(paths.manifest(), "val");
  const auto train = load_split(paths.manifest(), "train");
  int classes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const bool present = std::any_of(train.begin(), train.end(), [&](const AnnotatedImage& img) {
      return std::any_of(img.boxes.begin(), img.boxes.end(), [&](const LabeledBox& b) { return class_id(b.cls) == c; });
    });
    classes += present;
  }
  out.require(train.size() == 200 && val.size() == 50 && classes == 3 && cfg.detector.input_size == 96,
              fmt::format("{} train / {} val boards, {} classes, {}px", train.size(), val.size(), classes,
                          cfg.detector.input_size));

  const NamedTensors untrained = init_detector(cfg.detector, component_seed(cfg.train.seed, "detector.init"));
  const double untrained_map = evaluate(detect_images(untrained, val, cfg.detector, cfg.nms_iou), ground_truths(val)).map50;

  const auto t0 = Clock::now();
  const TrainStageResult tr = run_train(cfg, paths);
  const double secs = seconds_since(t0);
  out.require(!tr.train.diverged && secs < 15 * 60, fmt::format("training {:.0f} s", secs));
  const EvalReport rep = run_eval(cfg, paths);
  out.require(rep.map50 >= 0.5, fmt::format("mAP50 {:.4f} (mAP50-95 {:.4f})", rep.map50, rep.map50_95));
  out.require(rep.map50 >= 10 * untrained_map, fmt::format("untrained mAP50 {:.4f}", untrained_map));
  double box0 = std::numeric_limits<double>::quiet_NaN(), box25 = box0;
  for (const auto& row : tr.train.curves) {
    if (row.split != "train") continue;
    if (row.epoch == 0) box0 = row.box;
    if (row.epoch == 25) box25 = row.box;
  }
  out.require(box25 < box0, fmt::format("train box loss epoch 0 {:.4f} -> epoch 25 {:.4f}", box0, box25));
  return out;
}

// 8. GAN toy fidelity and the frozen-batch discriminator property.
Outcome gan_toy() {
  Outcome out;
  const RunConfig run = RunConfig::defaults();
  for (const DefectClass cls : {DefectClass::MissingHole, DefectClass::Short, DefectClass::Spur}) {
    GanConfig cfg = run.gan;
    cfg.seed = component_seed(91, class_name(cls));
    const Tensor pool = defect_patch_pool(cls, 512, cfg.patch_size, component_seed(92, class_name(cls)));
    GanPair pair = init_gan(cfg, cfg.seed);
    const GanTrainResult r = train_gan(pair, pool, cfg);
    const Tensor real = sample_pool(pool, 64, 1234);
    const Tensor fake = gan_generator_forward(sample_latent(64, cfg.latent_dim, 4321), pair.generator, cfg);
    const FidelityStats st = gan_fidelity_stats(real, fake);
    const double mean_gap = *std::max_element(st.mean_gap.begin(), st.mean_gap.end());
    const double std_gap = *std::max_element(st.std_gap.begin(), st.std_gap.end());
    out.require(static_cast<int>(r.history.size()) <= 2000 && mean_gap <= 0.1 && std_gap <= 0.15,
                fmt::format("{}: {} steps, max |dmean| {:.3f}, max |dstd| {:.3f}", class_name(cls), r.history.size(),
                            mean_gap, std_gap));
  }
  GanConfig cfg = run.gan;
  cfg.batch = 16;
  GanPair pair = init_gan(cfg, 17);
  GanOptimizers opt(pair, cfg);
  const Tensor real = defect_patch_pool(DefectClass::Short, cfg.batch, cfg.patch_size, 18);
  const Tensor z = sample_latent(cfg.batch, cfg.latent_dim, 19);
  std::vector<double> losses;
  for (int s = 0; s <= 50; ++s) losses.push_back(gan_train_step(pair, real, z, opt, cfg, false).loss_d);
  int rises = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] >= losses[i - 1];
  out.require(rises <= 5, fmt::format("frozen batch: {} non-decreasing of 50 D steps ({:.3f} -> {:.3f})", rises,
                                      losses.front(), losses.back()));
  return out;
}

// 9. Augmentation non-inferiority.
Outcome augmentation_helps() {
  Outcome out;
  int ok = 0;
  for (const std::uint64_t seed : {1, 2, 3}) {
    RunConfig cfg = RunConfig::defaults();
    cfg.apply_seed(seed);
    cfg.synth.train = 50;
    cfg.synth.val = 50;
    cfg.augment.boards = 150;
    const RunPaths paths{scratch(fmt::format("aug{}", seed))};
    run_synth_data(cfg, paths);
    run_train(cfg, paths);
    const double base = run_eval(cfg, paths).map50;
    const GanStageResult gans = run_train_gan(cfg, paths);
    int passed = 0;
    for (const auto& c : gans.classes) passed += c.gate_passed;
    const int added = run_augment(cfg, paths);
    run_train(cfg, paths);
    const double aug = run_eval(cfg, paths).map50;
    const bool good = aug >= base - 0.02;
    ok += good;
    out.notes.push_back(fmt::format("seed {}: base {:.4f} augmented {:.4f} ({} boards, {}/{} GAN gates){}", seed, base,
                                    aug, added, passed, gans.classes.size(), good ? "" : " worse"));
  }
  out.require(ok >= 2, fmt::format("{} of 3 seeds non-inferior", ok));
  return out;
}

// 10. Report schema and JSON round trip.
Outcome report_schema() {
  Outcome out;
  Rng rng(10);
  std::vector<ImageDetections> dets;
  std::vector<ImageGts> gts;
  testing::random_eval_instance(rng, 12, 5, kNumClasses, dets, gts);
  const EvalReport rep = evaluate(dets, gts);
  const std::string table = report_table(rep);
  const std::string header = table.substr(0, table.find('\n'));
  std::vector<std::string> cols;
  for (std::size_t start = 0;;) {
    const std::size_t tab = header.find('\t', start);
    cols.push_back(header.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  const std::vector<std::string> expected = {"Class", "Images", "Instances", "P", "R", "mAP50", "mAP50-95"};
  out.require(header == "Class\tImages\tInstances\tP\tR\tmAP50\tmAP50-95" && cols == expected, "header columns");
  bool rows_ok = true;
  int rows = 0;
  std::size_t pos = table.find('\n') + 1;
  while (pos < table.size()) {
    const std::size_t end = table.find('\n', pos);
    const std::string row = table.substr(pos, end - pos);
    rows_ok = rows_ok && std::count(row.begin(), row.end(), '\t') == 6;
    if (rows == 0) rows_ok = rows_ok && row.rfind("all\t", 0) == 0;
    ++rows;
    pos = end + 1;
  }
  out.require(rows_ok && rows >= 2, fmt::format("{} rows, 7 fields each, 'all' first", rows));
  out.require(report_table(report_from_json(report_to_json(rep))) == table, "report.json -> report renders identically");

  // Same through the CLI pipeline files.
  RunConfig cfg = RunConfig::defaults();
  cfg.synth.train = 4;
  cfg.synth.val = 8;
  const RunPaths paths{scratch("report")};
  run_synth_data(cfg, paths);
  const auto val = load_split(paths.manifest(), "val");
  std::vector<std::string> ids;
  std::vector<ImageDetections> fixture;
  for (const auto& img : val) {
    ids.push_back(img.id);
    ImageDetections d;
    for (const auto& b : img.boxes) d.push_back({Box{b.box.xmin + 1, b.box.ymin, b.box.xmax + 1, b.box.ymax}, b.cls, 0.7});
    fixture.push_back(d);
  }
  write_text(paths.root / "dets.json", detections_to_json(ids, fixture));
  run_eval(cfg, paths, paths.root / "dets.json");
  const std::string written = read_text(paths.eval() / "report.txt");
  run_report(paths);
  out.require(read_text(paths.eval() / "report.txt") == written, "eval/report.txt re-rendered byte-identical");
  return out;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace pcbdet

int main(int argc, char** argv) {
  using namespace pcbdet;
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradients},         {2, "geometry/NMS oracle", nms_oracle},
      {3, "AP oracle", ap_oracle},              {4, "Nadam oracle", nadam_oracle},
      {5, "cosine schedule", schedule},         {6, "k-means anchors", anchors},
      {7, "end-to-end desk scale", end_to_end}, {8, "GAN toy", gan_toy},
      {9, "augmentation non-inferiority", augmentation_helps}, {10, "report schema", report_schema},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    fmt::print("criterion {:>2} {}: {} [{:.1f} s] {}\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs, detail);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
