#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pcbdet/checkpoint.hpp"
#include "pcbdet/optim.hpp"
#include "pcbdet/tape.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

/// Generator: latent -> linear -> 4x4 map, then (nearest upsample x2, 3x3
/// conv, leaky ReLU) stages up to the patch size, a final 3x3 conv to RGB and
/// a sigmoid. Discriminator: stride-2 3x3 convs down to 4x4, then a linear
/// logit.
struct GanConfig {
  int latent_dim = 16;
  int patch_size = 32;
  double lr = 2e-4;
  double beta1 = 0.5;
  int batch = 32;
  int steps = 2000;
  /// Channels of the 4x4 generator map; halved at each upsampling stage.
  int base_channels = 32;
  std::uint64_t seed = 0;
  /// Patches are rejected when moment_distance exceeds this.
  double fidelity_gate = 0.6;

  void validate() const;
  int stages() const;
};

struct GanPair {
  NamedTensors generator;
  NamedTensors discriminator;
};

GanPair init_gan(const GanConfig& cfg, std::uint64_t seed);

/// [B, latent] -> [B, 3, S, S] in [0, 1].
Tensor gan_generator_forward(const Tensor& z, const NamedTensors& generator, const GanConfig& cfg);
/// [B, 3, S, S] -> [B, 1] logits.
Tensor gan_discriminator_forward(const Tensor& x, const NamedTensors& discriminator, const GanConfig& cfg);

/// Puts a parameter list on the tape, as trainable leaves or constants.
std::vector<Var> register_params(Tape& tape, const NamedTensors& params, bool trainable);
/// Tape versions over registered parameters (one network may be applied
/// several times with the same Vars).
Var generator_tape(Tape& tape, Var z, std::span<const Var> params, const GanConfig& cfg);
Var discriminator_tape(Tape& tape, Var x, std::span<const Var> params, const GanConfig& cfg);

/// Standard normal latent batch.
Tensor sample_latent(int batch, int latent_dim, std::uint64_t seed);

struct GanOptimizers {
  Nadam generator;
  Nadam discriminator;

  GanOptimizers(const GanPair& pair, const GanConfig& cfg);
};

struct GanLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
};

/// One discriminator update on -mean[log D(x) + log(1 - D(G(z)))], then (if
/// `update_generator`) one generator update on -mean[log D(G(z))]. Reported
/// losses are measured before their respective updates. Throws TrainingError
/// on a non-finite loss.
GanLosses gan_train_step(GanPair& pair, const Tensor& real, const Tensor& z, GanOptimizers& opt, const GanConfig& cfg,
                         bool update_generator = true);

struct FidelityStats {
  std::array<double, 3> mean_gap{};
  std::array<double, 3> std_gap{};
  double moment_distance = 0.0;
};

/// Per-channel |mean difference| and |std difference| over all pixels of
/// two [B, 3, S, S] batches.
FidelityStats gan_fidelity_stats(const Tensor& real, const Tensor& fake);

/// Real training data for one class: `count` defect crops as [count, 3, S, S].
Tensor defect_patch_pool(DefectClass cls, int count, int size, std::uint64_t seed);

/// Random batch drawn (with replacement) from a pool.
Tensor sample_pool(const Tensor& pool, int batch, std::uint64_t seed);

struct GanTrainResult {
  std::vector<GanLosses> history;
  FidelityStats fidelity;
  bool gate_passed = false;
};

/// cfg.steps training steps on batches from `pool`, then fidelity against
/// a fresh pool batch.
GanTrainResult train_gan(GanPair& pair, const Tensor& pool, const GanConfig& cfg);

/// Pastes `patch` ([3, S, S] in [0,1], rounded to 8 bits) at (x, y) and adds
/// the box (x, y, x+S, y+S). PlacementError if it does not fit.
AnnotatedImage composite_defect(const AnnotatedImage& board, const Tensor& patch, int x, int y, DefectClass cls);

}  // namespace pcbdet
