#pragma once

// Central finite-difference gradient checking shared by unit and
// acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pcbdet/ops.hpp"
#include "pcbdet/rng.hpp"
#include "pcbdet/tape.hpp"

namespace pcbdet::testing {

/// Relative error with a floor on the denominator so gradients that are
/// essentially zero are compared absolutely.
inline double rel_error(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

/// Central differences of `f` w.r.t. every element of every input.
inline std::vector<Tensor> numeric_gradients(const ScalarFn& f, std::vector<Tensor> inputs, double eps = 1e-6) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      const double fp = f(inputs);
      inputs[k][i] = orig - eps;
      const double fm = f(inputs);
      inputs[k][i] = orig;
      g[i] = (fp - fm) / (2 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

using TapeFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Checks d/dx sum(op(x) * R) for a fixed random R; returns the max
/// relative error over all input elements.
inline double check_op_gradient(const TapeFn& op, const std::vector<Tensor>& inputs, std::uint64_t seed,
                                double eps = 1e-6) {
  Tensor weights;
  auto build = [&](Tape& tape, const std::vector<Tensor>& xs, std::vector<Var>& leaves) {
    leaves.clear();
    for (const auto& x : xs) leaves.push_back(tape.parameter(x));
    const Var y = op(tape, leaves);
    if (weights.empty()) weights = Tensor::filled(tape.shape(y), UniformFill{-1.0, 1.0, seed});
    const Var w = tape.constant(weights);
    return ops::sum(tape, ops::mul(tape, y, w));
  };
  Tape tape;
  std::vector<Var> leaves;
  const Var loss = build(tape, inputs, leaves);
  const Gradients grads = tape.backward(loss);
  const auto numeric = numeric_gradients(
      [&](const std::vector<Tensor>& xs) {
        Tape t;
        std::vector<Var> l;
        return t.value(build(t, xs, l)).item();
      },
      inputs, eps);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& a = grads.of(leaves[k]);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_error(a[i], numeric[k][i]));
  }
  return worst;
}

}  // namespace pcbdet::testing
