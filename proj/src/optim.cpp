#include "pcbdet/optim.hpp"

#include <cmath>
#include <numbers>

#include "pcbdet/errors.hpp"

namespace pcbdet {

void NadamHyper::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ParameterError("nadam beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ParameterError("nadam beta2 must lie in (0,1)");
  if (!(eps > 0.0)) throw ParameterError("nadam eps must be > 0");
  if (!(lr > 0.0)) throw ParameterError("nadam lr must be > 0");
}

OptState OptState::for_params(std::span<const Tensor> params) {
  OptState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void nadam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptState& state, const NadamHyper& hyper,
                double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("nadam_step: params, grads and state disagree in length");
  }
  if (!(lr > 0.0)) throw ParameterError("nadam_step: lr must be > 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw ShapeError("nadam_step: shape mismatch at parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("nadam_step: non-finite gradient at parameter " + std::to_string(i));
    }
  }

  const double t = static_cast<double>(state.t + 1);
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= lr / (std::sqrt(v_hat) + hyper.eps) * (b1 * m_hat + (1.0 - b1) * g[j] / bc1);
    }
  }
  state.t += 1;
}

void CosineSchedule::validate() const {
  if (!(eta_min < eta_max)) throw ParameterError("cosine schedule needs eta_min < eta_max");
  if (total_steps < 1) throw ParameterError("cosine schedule needs T >= 1");
}

double cosine_lr(std::int64_t step, const CosineSchedule& sched) {
  sched.validate();
  if (step < 0) throw ParameterError("cosine_lr: negative step");
  if (step == 0) return sched.eta_max;
  if (step >= sched.total_steps) return sched.eta_min;
  const double frac = static_cast<double>(step) / static_cast<double>(sched.total_steps);
  return sched.eta_min + 0.5 * (sched.eta_max - sched.eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

Nadam::Nadam(std::span<const Tensor> params, NadamHyper hyper)
    : hyper_(hyper), state_(OptState::for_params(params)) {
  hyper_.validate();
}

}  // namespace pcbdet
