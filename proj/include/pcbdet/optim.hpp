#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

struct NadamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// ParameterError unless 0 < beta < 1 and eps > 0.
  void validate() const;
};

/// First/second moments per parameter plus the step counter.
struct OptState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  static OptState for_params(std::span<const Tensor> params);
};

/// One Nadam update, in place:
///
///   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
///   mh = m / (1-b1^t)             vh = v / (1-b2^t)
///   theta <- theta - lr / (sqrt(vh) + eps) * (b1 mh + (1-b1) g / (1-b1^t))
///
/// with t the incremented counter. A non-finite gradient leaves both the
/// parameters and the state untouched and throws NumericError.
void nadam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptState& state, const NadamHyper& hyper,
                double lr);

struct CosineSchedule {
  double eta_max = 1e-3;
  double eta_min = 1e-5;
  std::int64_t total_steps = 1;

  void validate() const;
};

/// eta_min + (eta_max - eta_min) (1 + cos(pi t / T)) / 2; t > T gives eta_min.
double cosine_lr(std::int64_t step, const CosineSchedule& sched);

/// Owns the state for a fixed parameter list.
class Nadam {
 public:
  Nadam(std::span<const Tensor> params, NadamHyper hyper);

  void step(std::span<Tensor> params, std::span<const Tensor> grads, double lr) {
    nadam_step(params, grads, state_, hyper_, lr);
  }
  void step(std::span<Tensor> params, std::span<const Tensor> grads) { step(params, grads, hyper_.lr); }

  const OptState& state() const noexcept { return state_; }
  const NadamHyper& hyper() const noexcept { return hyper_; }

 private:
  NadamHyper hyper_;
  OptState state_;
};

}  // namespace pcbdet
