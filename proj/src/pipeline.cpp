#include "pcbdet/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "pcbdet/checkpoint.hpp"
#include "pcbdet/dataset.hpp"
#include "pcbdet/errors.hpp"
#include "pcbdet/evaluate.hpp"
#include "pcbdet/postprocess.hpp"
#include "pcbdet/report.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.synth.spec.class_weights = {1, 0, 0, 1, 1, 0};
  cfg.gan.patch_size = 16;
  cfg.train.epochs = 60;
  cfg.train.batch_size = 4;
  cfg.apply_seed(0);
  return cfg;
}

void RunConfig::apply_seed(std::uint64_t master) {
  seed = master;
  gan.seed = component_seed(master, "gan");
  train.seed = component_seed(master, "train");
}

void RunConfig::validate() const {
  if (manifest.empty() && (synth.train < 1 || synth.val < 1)) throw ParameterError("synth train and val counts must be >= 1");
  if (synth.spec.width < 64 || synth.spec.height < 64) throw ParameterError("synthetic boards must be at least 64x64");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ParameterError("val_fraction must be in (0, 1)");
  gan.validate();
  if (augment.boards < 0 || augment.patches_per_board < 1 || augment.pool_size < 1) {
    throw ParameterError("augment needs boards >= 0, patches_per_board >= 1, pool_size >= 1");
  }
  detector.validate();
  train.validate();
  if (!(nms_iou > 0 && nms_iou <= 1)) throw ParameterError("nms_iou must be in (0, 1]");
}

namespace {

ojson weights_json(const std::array<double, kNumClasses>& w) {
  ojson j;
  for (int c = 0; c < kNumClasses; ++c) j[std::string(class_name(class_from_id(c)))] = w[static_cast<std::size_t>(c)];
  return j;
}

ojson detector_json(const DetectorConfig& d) {
  return ojson{{"input_size", d.input_size},       {"num_classes", d.num_classes},
               {"strides", d.strides},             {"anchors_per_scale", d.anchors_per_scale},
               {"dfl_bins", d.dfl_bins},           {"stem_channels", d.stem_channels},
               {"dw_channels", d.dw_channels},     {"deep_channels", d.deep_channels},
               {"head_width", d.head_width}};
}

DetectorConfig detector_from(const ojson& j) {
  DetectorConfig d;
  d.input_size = j.at("input_size").get<int>();
  d.num_classes = j.at("num_classes").get<int>();
  d.strides = j.at("strides").get<std::vector<int>>();
  d.anchors_per_scale = j.at("anchors_per_scale").get<int>();
  d.dfl_bins = j.at("dfl_bins").get<int>();
  d.stem_channels = j.at("stem_channels").get<int>();
  d.dw_channels = j.at("dw_channels").get<std::vector<int>>();
  d.deep_channels = j.at("deep_channels").get<int>();
  d.head_width = j.at("head_width").get<int>();
  return d;
}

ojson to_ojson(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["manifest"] = c.manifest;
  j["synth"] = {{"train", c.synth.train},
                {"val", c.synth.val},
                {"width", c.synth.spec.width},
                {"height", c.synth.spec.height},
                {"defects_min", c.synth.spec.defects_min},
                {"defects_max", c.synth.spec.defects_max},
                {"class_weights", weights_json(c.synth.spec.class_weights)}};
  j["val_fraction"] = c.val_fraction;
  j["gan"] = {{"latent_dim", c.gan.latent_dim}, {"patch_size", c.gan.patch_size}, {"lr", c.gan.lr},
              {"beta1", c.gan.beta1},           {"batch", c.gan.batch},           {"steps", c.gan.steps},
              {"base_channels", c.gan.base_channels}, {"seed", c.gan.seed},     {"fidelity_gate", c.gan.fidelity_gate}};
  j["augment"] = {{"boards", c.augment.boards},
                  {"patches_per_board", c.augment.patches_per_board},
                  {"pool_size", c.augment.pool_size}};
  j["detector"] = detector_json(c.detector);
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.nadam.lr},
                {"beta1", t.nadam.beta1},
                {"beta2", t.nadam.beta2},
                {"eps", t.nadam.eps},
                {"eta_min", t.eta_min},
                {"loss", {{"w_box", t.weights.w_box},
                          {"w_cls", t.weights.w_cls},
                          {"w_dfl", t.weights.w_dfl},
                          {"focal_alpha", t.weights.focal_alpha},
                          {"focal_gamma", t.weights.focal_gamma},
                          {"iou_aware_objectness", t.weights.iou_aware_objectness}}},
                {"augment", t.augment},
                {"policy", {{"rotate_prob", t.policy.rotate_prob},
                            {"scale_prob", t.policy.scale_prob},
                            {"scale_min", t.policy.scale_min},
                            {"scale_max", t.policy.scale_max},
                            {"contrast_prob", t.policy.contrast_prob},
                            {"contrast_min", t.policy.contrast_min},
                            {"contrast_max", t.policy.contrast_max}}},
                {"kmeans_iters", t.kmeans_iters},
                {"gan_weight", t.gan_weight},
                {"seed", t.seed}};
  j["nms_iou"] = c.nms_iou;
  j["deterministic"] = c.deterministic;
  return j;
}

RunConfig from_ojson(const ojson& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.manifest = j.at("manifest").get<std::string>();
  const auto& s = j.at("synth");
  c.synth.train = s.at("train").get<int>();
  c.synth.val = s.at("val").get<int>();
  c.synth.spec.width = s.at("width").get<int>();
  c.synth.spec.height = s.at("height").get<int>();
  c.synth.spec.defects_min = s.at("defects_min").get<int>();
  c.synth.spec.defects_max = s.at("defects_max").get<int>();
  for (int k = 0; k < kNumClasses; ++k) {
    c.synth.spec.class_weights[static_cast<std::size_t>(k)] =
        s.at("class_weights").at(std::string(class_name(class_from_id(k)))).get<double>();
  }
  c.val_fraction = j.at("val_fraction").get<double>();
  const auto& g = j.at("gan");
  c.gan.latent_dim = g.at("latent_dim").get<int>();
  c.gan.patch_size = g.at("patch_size").get<int>();
  c.gan.lr = g.at("lr").get<double>();
  c.gan.beta1 = g.at("beta1").get<double>();
  c.gan.batch = g.at("batch").get<int>();
  c.gan.steps = g.at("steps").get<int>();
  c.gan.base_channels = g.at("base_channels").get<int>();
  c.gan.seed = g.at("seed").get<std::uint64_t>();
  c.gan.fidelity_gate = g.at("fidelity_gate").get<double>();
  const auto& a = j.at("augment");
  c.augment.boards = a.at("boards").get<int>();
  c.augment.patches_per_board = a.at("patches_per_board").get<int>();
  c.augment.pool_size = a.at("pool_size").get<int>();
  c.detector = detector_from(j.at("detector"));
  const auto& t = j.at("train");
  c.train.epochs = t.at("epochs").get<int>();
  c.train.batch_size = t.at("batch_size").get<int>();
  c.train.nadam = NadamHyper{t.at("lr").get<double>(), t.at("beta1").get<double>(), t.at("beta2").get<double>(),
                             t.at("eps").get<double>()};
  c.train.eta_min = t.at("eta_min").get<double>();
  const auto& l = t.at("loss");
  c.train.weights.w_box = l.at("w_box").get<double>();
  c.train.weights.w_cls = l.at("w_cls").get<double>();
  c.train.weights.w_dfl = l.at("w_dfl").get<double>();
  c.train.weights.focal_alpha = l.at("focal_alpha").get<double>();
  c.train.weights.focal_gamma = l.at("focal_gamma").get<double>();
  c.train.weights.iou_aware_objectness = l.at("iou_aware_objectness").get<bool>();
  c.train.augment = t.at("augment").get<bool>();
  const auto& p = t.at("policy");
  c.train.policy.rotate_prob = p.at("rotate_prob").get<double>();
  c.train.policy.scale_prob = p.at("scale_prob").get<double>();
  c.train.policy.scale_min = p.at("scale_min").get<double>();
  c.train.policy.scale_max = p.at("scale_max").get<double>();
  c.train.policy.contrast_prob = p.at("contrast_prob").get<double>();
  c.train.policy.contrast_min = p.at("contrast_min").get<double>();
  c.train.policy.contrast_max = p.at("contrast_max").get<double>();
  c.train.kmeans_iters = t.at("kmeans_iters").get<int>();
  c.train.gan_weight = t.at("gan_weight").get<double>();
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.nms_iou = j.at("nms_iou").get<double>();
  c.deterministic = j.at("deterministic").get<bool>();
  return c;
}

// Every key of `given` must exist (with the same kind) in `schema`.
void check_keys(const ojson& given, const ojson& schema, const std::string& where) {
  if (!given.is_object()) throw ParseError(fmt::format("config: '{}' must be an object", where), 0);
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!schema.contains(it.key())) throw ParseError(fmt::format("config: unknown key '{}'", path), 0);
    const ojson& s = schema.at(it.key());
    if (s.is_object()) check_keys(it.value(), s, path);
  }
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) { return to_ojson(cfg).dump(2) + "\n"; }

RunConfig run_config_from_json(const std::string& text) {
  RunConfig cfg = RunConfig::defaults();
  try {
    const ojson given = ojson::parse(text);
    ojson merged = to_ojson(cfg);
    check_keys(given, merged, "");
    merged.merge_patch(given);
    cfg = from_ojson(merged);
    if (given.contains("seed")) {
      // A master seed re-derives component seeds unless they were given too.
      cfg.apply_seed(cfg.seed);
      if (given.contains("gan") && given["gan"].contains("seed")) cfg.gan.seed = given["gan"]["seed"].get<std::uint64_t>();
      if (given.contains("train") && given["train"].contains("seed")) {
        cfg.train.seed = given["train"]["seed"].get<std::uint64_t>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad run config: ") + e.what(), 0);
  }
  cfg.validate();
  return cfg;
}

std::string config_hash(const RunConfig& cfg) { return fmt::format("{:016x}", fnv1a64(to_ojson(cfg).dump())); }

void stamp_directory(const fs::path& dir, const RunConfig& cfg, const std::vector<std::string>& artifacts) {
  write_text(dir / "run_config.json", run_config_to_json(cfg));
  const ojson stamp = {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}, {"artifacts", artifacts}};
  write_text(dir / "stamp.json", stamp.dump(2) + "\n");
}

namespace {

ojson stamp_of(const RunConfig& cfg) { return {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}}; }

fs::path active_manifest(const RunConfig& cfg, const RunPaths& paths) {
  if (fs::exists(paths.manifest())) return paths.manifest();
  if (!cfg.manifest.empty()) {
    if (!fs::exists(cfg.manifest)) throw IoError("manifest not found: " + cfg.manifest);
    return cfg.manifest;
  }
  throw IoError("no dataset: run synth-data first or set 'manifest' (looked for " + paths.manifest().string() + ")");
}

// Entries without a split are divided with split_dataset.
Manifest load_split_manifest(const fs::path& path, double val_fraction, std::uint64_t seed) {
  Manifest m = load_manifest(path);
  std::vector<std::string> unsplit;
  for (const auto& e : m.entries) {
    if (e.split.empty()) unsplit.push_back(e.id);
  }
  if (!unsplit.empty()) {
    const Split s = split_dataset(unsplit, val_fraction, component_seed(seed, "split"));
    for (auto& e : m.entries) {
      if (!e.split.empty()) continue;
      e.split = std::find(s.val.begin(), s.val.end(), e.id) != s.val.end() ? "val" : "train";
    }
  }
  return m;
}

std::vector<AnnotatedImage> load_entries(const Manifest& m, const fs::path& root, const std::string& split) {
  std::vector<AnnotatedImage> out;
  for (const ManifestEntry* e : m.with_split(split)) out.push_back(load_entry(*e, root));
  return out;
}

std::vector<std::string> ids_of(const std::vector<AnnotatedImage>& images) {
  std::vector<std::string> ids;
  for (const auto& img : images) ids.push_back(img.id);
  return ids;
}

std::string anchors_json(const DetectorConfig& d, const AnchorSet& anchors) {
  ojson a = ojson::array();
  for (const auto& scale : anchors.per_scale) {
    ojson s = ojson::array();
    for (const auto& [w, h] : scale) s.push_back({w, h});
    a.push_back(s);
  }
  return ojson{{"detector", detector_json(d)}, {"anchors", a}}.dump(2) + "\n";
}

DetectorConfig detector_sidecar(const fs::path& path) {
  try {
    const DetectorConfig d = detector_from(ojson::parse(read_text(path)).at("detector"));
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad detector sidecar " + path.string() + ": " + e.what(), 0);
  }
}

}  // namespace

std::vector<AnnotatedImage> load_split(const fs::path& manifest_path, const std::string& split) {
  return load_entries(load_manifest(manifest_path), manifest_path.parent_path(), split);
}

void run_synth_data(const RunConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const int total = cfg.synth.train + cfg.synth.val;
  std::vector<AnnotatedImage> boards;
  std::vector<std::string> ids;
  const std::uint64_t base = component_seed(cfg.seed, "synth");
  for (int i = 0; i < total; ++i) {
    AnnotatedImage img = synth_board(base ^ mix64(static_cast<std::uint64_t>(i)), cfg.synth.spec);
    img.id = fmt::format("synth_{:05d}", i);
    ids.push_back(img.id);
    boards.push_back(std::move(img));
  }
  const Split split =
      split_dataset(ids, static_cast<double>(cfg.synth.val) / total, component_seed(cfg.seed, "split"));
  Manifest m;
  for (const auto& img : boards) {
    const bool is_val = std::find(split.val.begin(), split.val.end(), img.id) != split.val.end();
    m.entries.push_back(write_entry(img, paths.data(), is_val ? "val" : "train"));
  }
  save_manifest(paths.manifest(), m);
  stamp_directory(paths.data(), cfg, {"manifest.json", "images/", "annotations/"});
}

namespace {

std::string gan_file(DefectClass c) { return std::string(class_name(c)) + ".pcbd"; }

Tensor crop_pool(const std::vector<AnnotatedImage>& images, DefectClass cls, int size, int limit) {
  std::vector<Tensor> crops;
  for (const auto& img : images) {
    for (const auto& b : img.boxes) {
      if (b.cls != cls || static_cast<int>(crops.size()) >= limit) continue;
      crops.push_back(raster_to_chw(crop_resize(img.image, b.box, size)));
    }
  }
  if (crops.empty()) return Tensor{};
  Tensor pool({static_cast<int>(crops.size()), 3, size, size});
  const std::size_t stride = 3 * static_cast<std::size_t>(size) * size;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    std::copy(crops[i].data().begin(), crops[i].data().end(), pool.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return pool;
}

ojson fidelity_json(const FidelityStats& f) {
  return {{"mean_gap", f.mean_gap}, {"std_gap", f.std_gap}, {"moment_distance", f.moment_distance}};
}

}  // namespace

GanStageResult run_train_gan(const RunConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const fs::path mpath = active_manifest(cfg, paths);
  const Manifest m = load_split_manifest(mpath, cfg.val_fraction, cfg.seed);
  std::vector<AnnotatedImage> train;
  for (const ManifestEntry* e : m.with_split("train")) {
    if (e->source != Source::GanComposited) train.push_back(load_entry(*e, mpath.parent_path()));
  }
  fs::create_directories(paths.gan());
  GanStageResult res;
  ojson fid = ojson::object();
  std::vector<std::string> artifacts{"fidelity.json"};
  for (int c = 0; c < kNumClasses; ++c) {
    const DefectClass cls = class_from_id(c);
    const Tensor pool = crop_pool(train, cls, cfg.gan.patch_size, cfg.augment.pool_size);
    if (pool.empty()) continue;
    GanConfig gcfg = cfg.gan;
    gcfg.seed = component_seed(cfg.gan.seed, class_name(cls));
    GanPair pair = init_gan(gcfg, gcfg.seed);
    const GanTrainResult tr = train_gan(pair, pool, gcfg);
    NamedTensors all = pair.generator;
    all.insert(all.end(), pair.discriminator.begin(), pair.discriminator.end());
    save_checkpoint(paths.gan() / gan_file(cls), all);
    artifacts.push_back(gan_file(cls));
    res.classes.push_back({cls, tr.fidelity, tr.gate_passed});
    ojson entry = fidelity_json(tr.fidelity);
    entry["gate_passed"] = tr.gate_passed;
    entry["pool"] = pool.dim(0);
    fid[std::string(class_name(cls))] = entry;
  }
  ojson out = {{"classes", fid}, {"fidelity_gate", cfg.gan.fidelity_gate}, {"stamp", stamp_of(cfg)}};
  write_text(paths.gan() / "fidelity.json", out.dump(2) + "\n");
  stamp_directory(paths.gan(), cfg, artifacts);
  return res;
}

int run_augment(const RunConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const fs::path fid_path = paths.gan() / "fidelity.json";
  if (!fs::exists(fid_path)) throw IoError("no GAN results: run train-gan first (missing " + fid_path.string() + ")");
  const ojson fid = ojson::parse(read_text(fid_path));
  std::vector<DefectClass> passed;
  for (auto it = fid.at("classes").begin(); it != fid.at("classes").end(); ++it) {
    if (it.value().at("gate_passed").get<bool>()) passed.push_back(*class_from_name(it.key()));
  }
  const fs::path mpath = active_manifest(cfg, paths);
  Manifest m = load_split_manifest(mpath, cfg.val_fraction, cfg.seed);
  const fs::path root = mpath.parent_path();
  if (fs::absolute(mpath) != fs::absolute(paths.manifest())) {
    for (auto& e : m.entries) {
      e.image_path = fs::absolute(root / e.image_path).string();
      e.annotation_path = fs::absolute(root / e.annotation_path).string();
    }
  }
  std::vector<AnnotatedImage> bases;
  for (const ManifestEntry* e : m.with_split("train")) {
    if (e->source != Source::GanComposited) bases.push_back(load_entry(*e, root));
  }
  int added = 0;
  if (!passed.empty() && !bases.empty()) {
    std::vector<GanPair> gans;
    for (const DefectClass c : passed) {
      const NamedTensors all = load_checkpoint(paths.gan() / gan_file(c));
      GanPair pair = init_gan(cfg.gan, 0);
      for (auto& [name, t] : pair.generator) t = find_tensor(all, name);
      gans.push_back(std::move(pair));
    }
    Rng rng(component_seed(cfg.seed, "augment"));
    const int s = cfg.gan.patch_size;
    for (int b = 0; b < cfg.augment.boards; ++b) {
      AnnotatedImage img = bases[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(bases.size()) - 1))];
      for (int p = 0; p < cfg.augment.patches_per_board; ++p) {
        const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(passed.size()) - 1));
        const Tensor patch =
            gan_generator_forward(sample_latent(1, cfg.gan.latent_dim, rng.next_u64()), gans[k].generator, cfg.gan)
                .reshaped({3, s, s});
        // Keep existing labels intact: only paste where nothing is annotated.
        for (int attempt = 0; attempt < 50; ++attempt) {
          const int x = rng.uniform_int(0, img.image.width - s);
          const int y = rng.uniform_int(0, img.image.height - s);
          const Box spot{static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + s), static_cast<double>(y + s)};
          const bool clear = std::none_of(img.boxes.begin(), img.boxes.end(),
                                          [&](const LabeledBox& lb) { return intersection_area(lb.box, spot) > 0; });
          if (clear) {
            img = composite_defect(img, patch, x, y, passed[k]);
            break;
          }
        }
      }
      img.source = Source::GanComposited;
      img.id = fmt::format("gan_{:05d}", b);
      m.entries.push_back(write_entry(img, paths.data(), "train"));
      ++added;
    }
  }
  save_manifest(paths.manifest(), m);
  stamp_directory(paths.data(), cfg, {"manifest.json", "images/", "annotations/"});
  return added;
}

TrainStageResult run_train(const RunConfig& cfg, const RunPaths& paths, const EpochCallback& on_epoch) {
  cfg.validate();
  const fs::path mpath = active_manifest(cfg, paths);
  const Manifest m = load_split_manifest(mpath, cfg.val_fraction, cfg.seed);
  const auto train = load_entries(m, mpath.parent_path(), "train");
  const auto val = load_entries(m, mpath.parent_path(), "val");
  if (val.empty()) throw ParameterError("validation split is empty");
  TrainStageResult res;
  res.train = train_detector(train, val, cfg.detector, cfg.train, on_epoch);
  const auto dets = detect_images(res.train.params, val, cfg.detector, cfg.nms_iou);
  res.thresholds = calibrate_thresholds(dets, ground_truths(val), 0.5, cfg.nms_iou);
  const fs::path dir = paths.train();
  fs::create_directories(dir);
  save_checkpoint(dir / "detector.pcbd", res.train.params);
  write_text(dir / "detector.json", anchors_json(cfg.detector, res.train.anchors));
  write_text(dir / "thresholds.json", thresholds_to_json(res.thresholds));
  write_text(dir / "curves.csv", curves_csv(res.train.curves));
  stamp_directory(dir, cfg, {"detector.pcbd", "detector.json", "thresholds.json", "curves.csv"});
  return res;
}

std::string detections_to_json(const std::vector<std::string>& ids, const std::vector<ImageDetections>& dets) {
  ojson images = ojson::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ojson list = ojson::array();
    for (const auto& d : dets[i]) {
      list.push_back({{"class", std::string(class_name(d.cls))},
                      {"score", d.score},
                      {"box", {d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax}}});
    }
    images.push_back({{"id", ids[i]}, {"detections", list}});
  }
  return ojson{{"images", images}}.dump(2) + "\n";
}

std::vector<ImageDetections> detections_from_json(const std::string& text, const std::vector<std::string>& ids) {
  std::vector<ImageDetections> out(ids.size());
  try {
    const ojson j = ojson::parse(text);
    for (const auto& img : j.at("images")) {
      const auto id = img.at("id").get<std::string>();
      const auto it = std::find(ids.begin(), ids.end(), id);
      if (it == ids.end()) continue;
      auto& dst = out[static_cast<std::size_t>(it - ids.begin())];
      for (const auto& d : img.at("detections")) {
        const auto name = d.at("class").get<std::string>();
        const auto cls = class_from_name(name);
        if (!cls) throw ClassError(name);
        const auto b = d.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw ParseError("detection box must have 4 numbers", 0);
        dst.push_back(Detection{Box{b[0], b[1], b[2], b[3]}, *cls, d.at("score").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad detections JSON: ") + e.what(), 0);
  }
  return out;
}

namespace {

struct LoadedDetector {
  DetectorConfig cfg;
  NamedTensors params;
  ThresholdSet thresholds;
};

LoadedDetector load_detector(const RunPaths& paths) {
  const fs::path dir = paths.train();
  for (const char* f : {"detector.pcbd", "detector.json", "thresholds.json"}) {
    if (!fs::exists(dir / f)) throw IoError(fmt::format("missing {}: run train first", (dir / f).string()));
  }
  return {detector_sidecar(dir / "detector.json"), load_checkpoint(dir / "detector.pcbd"),
          thresholds_from_json(read_text(dir / "thresholds.json"))};
}

}  // namespace

EvalReport run_eval(const RunConfig& cfg, const RunPaths& paths, const std::optional<fs::path>& detections) {
  cfg.validate();
  const fs::path mpath = active_manifest(cfg, paths);
  const auto val = load_entries(load_split_manifest(mpath, cfg.val_fraction, cfg.seed), mpath.parent_path(), "val");
  std::vector<ImageDetections> dets;
  if (detections) {
    if (!fs::exists(*detections)) throw IoError("detections file not found: " + detections->string());
    dets = detections_from_json(read_text(*detections), ids_of(val));
  } else {
    const LoadedDetector det = load_detector(paths);
    dets = detect_images(det.params, val, det.cfg, cfg.nms_iou);
  }
  const EvalReport report = evaluate(dets, ground_truths(val), cfg.detector.num_classes);
  write_text(paths.eval() / "report.txt", report_table(report));
  write_text(paths.eval() / "report.json", report_to_json(report, ojson{{"stamp", stamp_of(cfg)}}.dump()));
  stamp_directory(paths.eval(), cfg, {"report.txt", "report.json"});
  return report;
}

void run_detect(const RunConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const fs::path mpath = active_manifest(cfg, paths);
  const auto val = load_entries(load_split_manifest(mpath, cfg.val_fraction, cfg.seed), mpath.parent_path(), "val");
  const LoadedDetector det = load_detector(paths);
  auto dets = detect_images(det.params, val, det.cfg, cfg.nms_iou);
  for (auto& d : dets) d = filter_detections(d, det.thresholds);
  ojson j = ojson::parse(detections_to_json(ids_of(val), dets));
  j["stamp"] = stamp_of(cfg);
  write_text(paths.detect() / "detections.json", j.dump(2) + "\n");
  stamp_directory(paths.detect(), cfg, {"detections.json"});
}

void run_report(const RunPaths& paths) {
  const fs::path src = paths.eval() / "report.json";
  if (!fs::exists(src)) throw IoError("missing " + src.string() + ": run eval first");
  write_text(paths.eval() / "report.txt", report_table(report_from_json(read_text(src))));
}

}  // namespace pcbdet
