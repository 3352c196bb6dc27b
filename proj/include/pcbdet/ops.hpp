#pragma once

#include <span>
#include <vector>

#include "pcbdet/tape.hpp"
#include "pcbdet/tensor.hpp"

namespace pcbdet {

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  /// groups == C gives a depthwise convolution.
  int groups = 1;
};

enum class Activation { LeakyRelu, Sigmoid, Silu };

inline constexpr double kLeakySlope = 0.1;

/// Output spatial size of a convolution along one axis.
int conv_out_size(int in, int kernel, int stride, int padding);

/// Reference convolution: plain nested loops, zero padding. Kernel is
/// [F, C/groups, kh, kw]. This is the oracle for the fast path.
Tensor conv2d_naive(const Tensor& input, const Tensor& kernel, const ConvOptions& opt);
/// im2col + GEMM forward, used by the tape op.
Tensor conv2d_fast(const Tensor& input, const Tensor& kernel, const ConvOptions& opt);

double activate(double x, Activation kind);
double activate_grad(double x, Activation kind);

namespace ops {

Var conv2d(Tape& tape, Var input, Var kernel, const ConvOptions& opt = {});
/// Adds b[C] along axis 1 of x (works for [N,C,H,W] and [N,C]).
Var add_bias(Tape& tape, Var x, Var bias);
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var activation(Tape& tape, Var x, Activation kind);
Var upsample_nearest(Tape& tape, Var x, int factor);
Var concat_channels(Tape& tape, std::span<const Var> parts);
Var sum(Tape& tape, Var x);
Var mean(Tape& tape, Var x);
/// [M,K] x [K,N] -> [M,N]
Var matmul(Tape& tape, Var a, Var b);
Var reshape(Tape& tape, Var x, Shape shape);
/// Mean binary cross-entropy of sigmoid(logits) against a constant target.
Var bce_with_logits(Tape& tape, Var logits, double target);
/// Scalar node whose value and input gradients were computed outside the
/// tape (fused loss kernels). `grads[i]` must match `inputs[i]`'s shape.
Var external_scalar(Tape& tape, std::span<const Var> inputs, double value, std::vector<Tensor> grads);

}  // namespace ops
}  // namespace pcbdet
