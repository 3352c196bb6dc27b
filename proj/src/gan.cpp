#include "pcbdet/gan.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pcbdet/errors.hpp"
#include "pcbdet/ops.hpp"
#include "pcbdet/rng.hpp"
#include "pcbdet/synth.hpp"

namespace pcbdet {

namespace {

constexpr int kSeedSide = 4;
constexpr int kFidelityBatch = 64;

int gen_channels(const GanConfig& cfg, int stage) { return std::max(4, cfg.base_channels >> stage); }
int disc_channels(int stage) { return std::min(64, 8 << stage); }

Tensor he_normal(const Shape& shape, int fan_in, std::uint64_t seed, const std::string& name) {
  return Tensor::filled(shape, NormalFill{0.0, std::sqrt(2.0 / fan_in), component_seed(seed, name)});
}

void add_conv(NamedTensors& out, const std::string& name, int f, int c, std::uint64_t seed) {
  out.emplace_back(name + ".w", he_normal({f, c, 3, 3}, c * 9, seed, name));
  out.emplace_back(name + ".b", Tensor::zeros({f}));
}

// Hands out registered parameters one at a time.
class ParamFeed {
 public:
  explicit ParamFeed(std::span<const Var> vars) : vars_(vars) {}
  Var next() {
    if (i_ >= vars_.size()) throw ShapeError("GAN parameter list is too short for the configuration");
    return vars_[i_++];
  }
  void finish() const {
    if (i_ != vars_.size()) throw ShapeError("GAN parameter list is too long for the configuration");
  }

 private:
  std::span<const Var> vars_;
  std::size_t i_ = 0;
};

std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

void store(NamedTensors& named, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < named.size(); ++i) named[i].second = values[i];
}

}  // namespace

void GanConfig::validate() const {
  if (patch_size < 16 || (patch_size & (patch_size - 1)) != 0) {
    throw ParameterError(fmt::format("patch_size must be a power of two >= 16, got {}", patch_size));
  }
  if (latent_dim < 1) throw ParameterError("latent_dim must be >= 1");
  if (batch < 2) throw ParameterError("GAN batch must be >= 2");
  if (!(lr > 0)) throw ParameterError("GAN lr must be > 0");
  if (!(beta1 > 0 && beta1 < 1)) throw ParameterError("GAN beta1 must be in (0, 1)");
  if (steps < 0) throw ParameterError("GAN steps must be >= 0");
  if (base_channels < 4) throw ParameterError("GAN base_channels must be >= 4");
}

int GanConfig::stages() const {
  int n = 0;
  for (int s = kSeedSide; s < patch_size; s *= 2) ++n;
  return n;
}

GanPair init_gan(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GanPair pair;
  auto& g = pair.generator;
  const int c0 = gen_channels(cfg, 0);
  g.emplace_back("g.fc.w", he_normal({cfg.latent_dim, c0 * kSeedSide * kSeedSide}, cfg.latent_dim, seed, "g.fc"));
  g.emplace_back("g.fc.b", Tensor::zeros({c0 * kSeedSide * kSeedSide}));
  for (int i = 0; i < cfg.stages(); ++i) add_conv(g, fmt::format("g.up{}", i), gen_channels(cfg, i + 1), gen_channels(cfg, i), seed);
  add_conv(g, "g.out", 3, gen_channels(cfg, cfg.stages()), seed);

  auto& d = pair.discriminator;
  int c = 3;
  for (int i = 0; i < cfg.stages(); ++i) {
    add_conv(d, fmt::format("d.c{}", i), disc_channels(i), c, seed);
    c = disc_channels(i);
  }
  const int flat = c * kSeedSide * kSeedSide;
  d.emplace_back("d.fc.w", Tensor::filled({flat, 1}, NormalFill{0.0, std::sqrt(1.0 / flat), component_seed(seed, "d.fc")}));
  d.emplace_back("d.fc.b", Tensor::zeros({1}));
  return pair;
}

std::vector<Var> register_params(Tape& tape, const NamedTensors& params, bool trainable) {
  std::vector<Var> out;
  for (const auto& [name, t] : params) out.push_back(trainable ? tape.parameter(t) : tape.constant(t));
  return out;
}

Var generator_tape(Tape& tape, Var z, std::span<const Var> params, const GanConfig& cfg) {
  const Shape& zs = tape.shape(z);
  if (zs.size() != 2 || zs[1] != cfg.latent_dim) {
    throw ShapeError(fmt::format("generator expects [B,{}] latents, got {}", cfg.latent_dim, shape_str(zs)));
  }
  ParamFeed feed(params);
  const int batch = zs[0];
  auto leaky = [&](Var v) { return ops::activation(tape, v, Activation::LeakyRelu); };
  const Var fw = feed.next();
  const Var fb = feed.next();
  Var h = ops::add_bias(tape, ops::matmul(tape, z, fw), fb);
  h = leaky(ops::reshape(tape, h, {batch, gen_channels(cfg, 0), kSeedSide, kSeedSide}));
  for (int i = 0; i < cfg.stages(); ++i) {
    h = ops::upsample_nearest(tape, h, 2);
    const Var w = feed.next();
    const Var b = feed.next();
    h = leaky(ops::add_bias(tape, ops::conv2d(tape, h, w, {1, 1, 1}), b));
  }
  const Var w = feed.next();
  const Var b = feed.next();
  feed.finish();
  return ops::activation(tape, ops::add_bias(tape, ops::conv2d(tape, h, w, {1, 1, 1}), b), Activation::Sigmoid);
}

Var discriminator_tape(Tape& tape, Var x, std::span<const Var> params, const GanConfig& cfg) {
  const Shape& xs = tape.shape(x);
  if (xs.size() != 4 || xs[1] != 3 || xs[2] != cfg.patch_size || xs[3] != cfg.patch_size) {
    throw ShapeError(fmt::format("discriminator expects [B,3,{0},{0}], got {1}", cfg.patch_size, shape_str(xs)));
  }
  ParamFeed feed(params);
  Var h = x;
  for (int i = 0; i < cfg.stages(); ++i) {
    const Var w = feed.next();
    const Var b = feed.next();
    h = ops::activation(tape, ops::add_bias(tape, ops::conv2d(tape, h, w, {2, 1, 1}), b), Activation::LeakyRelu);
  }
  const Shape& hs = tape.shape(h);
  h = ops::reshape(tape, h, {hs[0], hs[1] * hs[2] * hs[3]});
  const Var w = feed.next();
  const Var b = feed.next();
  feed.finish();
  return ops::add_bias(tape, ops::matmul(tape, h, w), b);
}

Tensor gan_generator_forward(const Tensor& z, const NamedTensors& generator, const GanConfig& cfg) {
  Tape tape;
  const auto params = register_params(tape, generator, false);
  return tape.value(generator_tape(tape, tape.constant(z), params, cfg));
}

Tensor gan_discriminator_forward(const Tensor& x, const NamedTensors& discriminator, const GanConfig& cfg) {
  Tape tape;
  const auto params = register_params(tape, discriminator, false);
  return tape.value(discriminator_tape(tape, tape.constant(x), params, cfg));
}

Tensor sample_latent(int batch, int latent_dim, std::uint64_t seed) {
  return Tensor::filled({batch, latent_dim}, NormalFill{0.0, 1.0, seed});
}

GanOptimizers::GanOptimizers(const GanPair& pair, const GanConfig& cfg)
    : generator(tensors_of(pair.generator), NadamHyper{cfg.lr, cfg.beta1, 0.999, 1e-8}),
      discriminator(tensors_of(pair.discriminator), NadamHyper{cfg.lr, cfg.beta1, 0.999, 1e-8}) {}

namespace {

std::vector<Tensor> grads_of(const Gradients& g, const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  for (const Var v : vars) out.push_back(g.of(v));
  return out;
}

}  // namespace

GanLosses gan_train_step(GanPair& pair, const Tensor& real, const Tensor& z, GanOptimizers& opt, const GanConfig& cfg,
                         bool update_generator) {
  if (real.rank() != 4 || real.dim(0) < 2) throw ShapeError("gan_train_step needs a real batch of at least 2");
  if (z.rank() != 2 || z.dim(0) < 2) throw ShapeError("gan_train_step needs at least 2 latents");
  GanLosses out;
  try {
    {
      Tape tape;
      const auto g = register_params(tape, pair.generator, false);
      const auto d = register_params(tape, pair.discriminator, true);
      const Var fake = generator_tape(tape, tape.constant(z), g, cfg);
      const Var real_logit = discriminator_tape(tape, tape.constant(real), d, cfg);
      const Var fake_logit = discriminator_tape(tape, fake, d, cfg);
      const Var loss = ops::add(tape, ops::bce_with_logits(tape, real_logit, 1.0), ops::bce_with_logits(tape, fake_logit, 0.0));
      out.loss_d = tape.value(loss).item();
      const Gradients grads = tape.backward(loss);
      auto params = tensors_of(pair.discriminator);
      opt.discriminator.step(params, grads_of(grads, d));
      store(pair.discriminator, params);
    }
    if (update_generator) {
      Tape tape;
      const auto g = register_params(tape, pair.generator, true);
      const auto d = register_params(tape, pair.discriminator, false);
      const Var fake_logit = discriminator_tape(tape, generator_tape(tape, tape.constant(z), g, cfg), d, cfg);
      const Var loss = ops::bce_with_logits(tape, fake_logit, 1.0);
      out.loss_g = tape.value(loss).item();
      const Gradients grads = tape.backward(loss);
      auto params = tensors_of(pair.generator);
      opt.generator.step(params, grads_of(grads, g));
      store(pair.generator, params);
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("GAN training produced a non-finite value: ") + e.what());
  }
  return out;
}

FidelityStats gan_fidelity_stats(const Tensor& real, const Tensor& fake) {
  if (real.shape() != fake.shape() || real.rank() != 4 || real.dim(1) != 3) {
    throw ShapeError("fidelity stats need two [B,3,S,S] batches of equal shape, got " + shape_str(real.shape()) +
                     " and " + shape_str(fake.shape()));
  }
  const int b = real.dim(0);
  const std::size_t plane = static_cast<std::size_t>(real.dim(2)) * real.dim(3);
  FidelityStats st;
  for (int c = 0; c < 3; ++c) {
    double m[2] = {0, 0}, v[2] = {0, 0};
    const Tensor* batches[2] = {&real, &fake};
    for (int k = 0; k < 2; ++k) {
      double sum = 0, sq = 0;
      for (int n = 0; n < b; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * 3 + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += (*batches[k])[base + i];
      }
      const double count = static_cast<double>(b) * plane;
      m[k] = sum / count;
      for (int n = 0; n < b; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * 3 + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += std::pow((*batches[k])[base + i] - m[k], 2);
      }
      v[k] = std::sqrt(sq / count);
    }
    st.mean_gap[static_cast<std::size_t>(c)] = std::abs(m[0] - m[1]);
    st.std_gap[static_cast<std::size_t>(c)] = std::abs(v[0] - v[1]);
    st.moment_distance += st.mean_gap[static_cast<std::size_t>(c)] + st.std_gap[static_cast<std::size_t>(c)];
  }
  return st;
}

Tensor defect_patch_pool(DefectClass cls, int count, int size, std::uint64_t seed) {
  if (count < 1) throw ParameterError("patch pool needs at least one patch");
  Tensor pool({count, 3, size, size});
  const std::size_t stride = 3 * static_cast<std::size_t>(size) * size;
  for (int i = 0; i < count; ++i) {
    const Tensor chw = raster_to_chw(synth_defect_patch(mix64(seed + static_cast<std::uint64_t>(i)), cls, size));
    std::copy(chw.storage().begin(), chw.storage().end(), pool.storage().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return pool;
}

Tensor sample_pool(const Tensor& pool, int batch, std::uint64_t seed) {
  Shape shape = pool.shape();
  const std::size_t stride = pool.size() / static_cast<std::size_t>(shape[0]);
  Rng rng(seed);
  const int n = shape[0];
  shape[0] = batch;
  Tensor out(shape);
  for (int i = 0; i < batch; ++i) {
    const auto src = static_cast<std::size_t>(rng.uniform_int(0, n - 1)) * stride;
    std::copy_n(pool.storage().begin() + static_cast<std::ptrdiff_t>(src), stride,
                out.storage().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * stride));
  }
  return out;
}

GanTrainResult train_gan(GanPair& pair, const Tensor& pool, const GanConfig& cfg) {
  cfg.validate();
  GanOptimizers opt(pair, cfg);
  Rng rng(component_seed(cfg.seed, "gan.train"));
  GanTrainResult res;
  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor real = sample_pool(pool, cfg.batch, rng.next_u64());
    const Tensor z = sample_latent(cfg.batch, cfg.latent_dim, rng.next_u64());
    res.history.push_back(gan_train_step(pair, real, z, opt, cfg));
  }
  const Tensor real = sample_pool(pool, kFidelityBatch, component_seed(cfg.seed, "gan.fidelity.real"));
  const Tensor fake = gan_generator_forward(
      sample_latent(kFidelityBatch, cfg.latent_dim, component_seed(cfg.seed, "gan.fidelity.z")), pair.generator, cfg);
  res.fidelity = gan_fidelity_stats(real, fake);
  res.gate_passed = res.fidelity.moment_distance <= cfg.fidelity_gate;
  return res;
}

AnnotatedImage composite_defect(const AnnotatedImage& board, const Tensor& patch, int x, int y, DefectClass cls) {
  if (patch.rank() != 3 || patch.dim(0) != 3 || patch.dim(1) != patch.dim(2)) {
    throw ShapeError("composite_defect expects a [3,S,S] patch, got " + shape_str(patch.shape()));
  }
  const int s = patch.dim(1);
  if (x < 0 || y < 0 || x + s > board.image.width || y + s > board.image.height) {
    throw PlacementError(fmt::format("patch of size {} at ({}, {}) does not fit a {}x{} board", s, x, y,
                                     board.image.width, board.image.height));
  }
  AnnotatedImage out = board;
  for (int c = 0; c < 3; ++c) {
    for (int py = 0; py < s; ++py) {
      for (int px = 0; px < s; ++px) {
        const double v = patch[(static_cast<std::size_t>(c) * s + py) * s + px];
        out.image.at(x + px, y + py, c) = static_cast<std::uint8_t>(std::clamp(std::round(v * 255.0), 0.0, 255.0));
      }
    }
  }
  out.boxes.push_back({Box{static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + s),
                           static_cast<double>(y + s)},
                       cls});
  out.source = Source::GanComposited;
  return out;
}

}  // namespace pcbdet
