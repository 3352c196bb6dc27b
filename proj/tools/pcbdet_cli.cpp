// pcbdet: synthetic data, GAN augmentation, detector training and
// evaluation from one config file.
//
// Exit codes: 0 ok, 2 usage or input error, 3 training diverged.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pcbdet/errors.hpp"
#include "pcbdet/pipeline.hpp"
#include "pcbdet/report.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> nms_iou;
  std::string out = "run";
  bool deterministic = false;
  std::string detections;
};

pcbdet::RunConfig resolve_config(const Options& o) {
  pcbdet::RunConfig cfg = o.config.empty() ? pcbdet::RunConfig::defaults()
                                           : pcbdet::run_config_from_json(pcbdet::read_text(o.config));
  if (o.seed) cfg.apply_seed(*o.seed);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.nms_iou) cfg.nms_iou = *o.nms_iou;
  // Every stage is single-threaded; the flag is recorded for the artifact trail.
  if (o.deterministic) cfg.deterministic = true;
  cfg.validate();
  return cfg;
}

int run_command(const std::string& cmd, const Options& o) {
  const pcbdet::RunConfig cfg = resolve_config(o);
  const pcbdet::RunPaths paths{o.out};
  if (cmd == "synth-data") {
    pcbdet::run_synth_data(cfg, paths);
    fmt::print("wrote {}\n", paths.manifest().string());
  } else if (cmd == "train-gan") {
    const auto res = pcbdet::run_train_gan(cfg, paths);
    for (const auto& c : res.classes) {
      fmt::print("{}: moment_distance {:.4f} gate {}\n", pcbdet::class_name(c.cls), c.fidelity.moment_distance,
                 c.gate_passed ? "passed" : "failed");
    }
  } else if (cmd == "augment") {
    const int added = pcbdet::run_augment(cfg, paths);
    fmt::print("added {} composited boards\n", added);
  } else if (cmd == "train") {
    const auto res = pcbdet::run_train(cfg, paths, [](const pcbdet::EpochLosses& t, const pcbdet::EpochLosses& v) {
      fmt::print(stderr, "epoch {} train box {:.4f} cls {:.4f} dfl {:.4f} | val box {:.4f} cls {:.4f} dfl {:.4f}\n",
                 t.epoch, t.box, t.cls, t.dfl, v.box, v.cls, v.dfl);
    });
    if (res.train.diverged) {
      fmt::print(stderr, "training diverged: {}; kept checkpoint from epoch {}\n", res.train.divergence,
                 res.train.epochs_completed);
      return kExitDiverged;
    }
    fmt::print("wrote {}\n", (paths.train() / "detector.pcbd").string());
  } else if (cmd == "eval") {
    std::optional<std::filesystem::path> dets;
    if (!o.detections.empty()) dets = o.detections;
    const auto report = pcbdet::run_eval(cfg, paths, dets);
    fmt::print("{}", pcbdet::report_table(report));
  } else if (cmd == "detect") {
    pcbdet::run_detect(cfg, paths);
    fmt::print("wrote {}\n", (paths.detect() / "detections.json").string());
  } else if (cmd == "report") {
    pcbdet::run_report(paths);
    fmt::print("{}", pcbdet::read_text(paths.eval() / "report.txt"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCB defect detection pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Master seed; re-derives every component seed");
  app.add_option("--epochs", o.epochs, "Training epochs")->check(CLI::PositiveNumber);
  app.add_option("--nms-iou", o.nms_iou, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0));
  app.add_option("--out", o.out, "Run directory")->capture_default_str();
  app.add_flag("--deterministic", o.deterministic, "Single logical thread");

  const char* commands[] = {"synth-data", "train-gan", "augment", "train", "eval", "detect", "report"};
  const char* help[] = {"Generate the procedural dataset",
                        "Train one GAN per defect class",
                        "Composite GAN patches onto training boards",
                        "Train the detector and calibrate thresholds",
                        "Evaluate on the validation split",
                        "Write thresholded detections",
                        "Re-render report.txt from report.json"};
  for (int i = 0; i < 7; ++i) {
    CLI::App* sub = app.add_subcommand(commands[i], help[i]);
    if (std::string(commands[i]) == "eval") {
      sub->add_option("--detections", o.detections, "Score this detections JSON instead of the detector")
          ->check(CLI::ExistingFile);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run_command(cmd, o);
  } catch (const pcbdet::TrainingError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
}
