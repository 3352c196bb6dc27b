#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcbdet/augment.hpp"
#include "pcbdet/dataset.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/gan.hpp"
#include "pcbdet/postprocess.hpp"
#include "pcbdet/synth.hpp"
#include "pcbdet/train.hpp"

namespace pcbdet {

/// Procedural dataset used when no manifest is given.
struct SynthDataConfig {
  int train = 200;
  int val = 50;
  SynthSpec spec{};
};

struct AugmentStageConfig {
  /// Composited boards appended to the train split.
  int boards = 150;
  /// GAN patches pasted per composited board.
  int patches_per_board = 1;
  /// Real crops per class used to train its GAN.
  int pool_size = 512;
};

/// Everything a run depends on. Serialized verbatim into every output
/// directory; a run is reproducible from this file alone.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Existing manifest to use instead of synthesizing (empty: synthesize).
  std::string manifest;
  SynthDataConfig synth{};
  /// Used only for manifest entries that carry no split.
  double val_fraction = kDefaultValFraction;
  GanConfig gan{};
  AugmentStageConfig augment{};
  DetectorConfig detector{};
  TrainConfig train{};
  double nms_iou = 0.5;
  bool deterministic = true;

  /// Desk-scale defaults: three defect classes, 16-pixel GAN patches.
  static RunConfig defaults();
  void validate() const;
  /// Pushes the master seed into every component seed.
  void apply_seed(std::uint64_t master);
};

std::string run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ParseError.
RunConfig run_config_from_json(const std::string& text);
/// FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Output layout under the run root.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path manifest() const { return data() / "manifest.json"; }
  std::filesystem::path gan() const { return root / "gan"; }
  std::filesystem::path train() const { return root / "train"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path detect() const { return root / "detect"; }
};

/// Writes run_config.json and stamp.json (config hash, seed, artifact list).
void stamp_directory(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<std::string>& artifacts);

/// synth-data: images, annotations and manifest under data/.
void run_synth_data(const RunConfig& cfg, const RunPaths& paths);

struct GanStageResult {
  struct PerClass {
    DefectClass cls;
    FidelityStats fidelity;
    bool gate_passed = false;
  };
  std::vector<PerClass> classes;
};

/// train-gan: one GAN per defect class present in the train split, trained
/// on crops of its ground-truth boxes. Writes gan/<class>.pcbd and
/// gan/fidelity.json.
GanStageResult run_train_gan(const RunConfig& cfg, const RunPaths& paths);

/// augment: composited boards for classes whose GAN passed the fidelity
/// gate, appended to the manifest as train entries. Returns how many boards
/// were added (0 when no class passed).
int run_augment(const RunConfig& cfg, const RunPaths& paths);

struct TrainStageResult {
  TrainResult train;
  ThresholdSet thresholds;
};

/// train: detector.pcbd, detector.json, thresholds.json, curves.csv under
/// train/. On divergence the last good checkpoint is still written.
TrainStageResult run_train(const RunConfig& cfg, const RunPaths& paths, const EpochCallback& on_epoch = {});

/// eval: report.txt and report.json under eval/. With `detections`, that
/// JSON file is scored instead of running the detector.
EvalReport run_eval(const RunConfig& cfg, const RunPaths& paths,
                    const std::optional<std::filesystem::path>& detections = std::nullopt);

/// detect: detect/detections.json, thresholded per class.
void run_detect(const RunConfig& cfg, const RunPaths& paths);

/// report: re-renders eval/report.txt from eval/report.json.
void run_report(const RunPaths& paths);

/// Split of a manifest loaded into memory.
std::vector<AnnotatedImage> load_split(const std::filesystem::path& manifest_path, const std::string& split);

std::string detections_to_json(const std::vector<std::string>& ids, const std::vector<ImageDetections>& dets);
/// Returns detections in the order of `ids`; images missing from the file
/// get none.
std::vector<ImageDetections> detections_from_json(const std::string& text, const std::vector<std::string>& ids);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pcbdet
