#include "pcbdet/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "pcbdet/errors.hpp"

namespace pcbdet {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeom {
  int n, c, h, w;
  int f, kh, kw;
  int ho, wo;
  int cg, fg;
  int stride, pad, groups;
  int k() const { return cg * kh * kw; }
  int p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

ConvGeom conv_geometry(const Shape& in, const Shape& ker, const ConvOptions& opt) {
  if (in.size() != 4 || ker.size() != 4) {
    throw ShapeError("conv2d expects rank-4 input and kernel, got " + shape_str(in) + " and " + shape_str(ker));
  }
  if (opt.stride < 1) throw ParameterError("conv2d stride must be >= 1");
  if (opt.padding < 0) throw ParameterError("conv2d padding must be >= 0");
  if (opt.groups < 1 || in[1] % opt.groups != 0 || ker[0] % opt.groups != 0) {
    throw ShapeError("conv2d groups must divide both input channels and filter count");
  }
  ConvGeom g{};
  g.n = in[0];
  g.c = in[1];
  g.h = in[2];
  g.w = in[3];
  g.f = ker[0];
  g.kh = ker[2];
  g.kw = ker[3];
  g.groups = opt.groups;
  g.cg = g.c / g.groups;
  g.fg = g.f / g.groups;
  if (ker[1] != g.cg) {
    throw ShapeError("conv2d kernel channel count " + std::to_string(ker[1]) + " does not match input channels " +
                     std::to_string(g.c) + "/" + std::to_string(g.groups));
  }
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.ho = conv_out_size(g.h, g.kh, g.stride, g.pad);
  g.wo = conv_out_size(g.w, g.kw, g.stride, g.pad);
  return g;
}

// x: one image group [cg, h, w] -> col [k, p]
void im2col(const double* x, const ConvGeom& g, double* col) {
  const int p = g.p();
  for (int c = 0; c < g.cg; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * p;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          double* dst = row + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + ih) * g.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const int p = g.p();
  for (int c = 0; c < g.cg; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * p;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          double* dst = dx + (static_cast<std::size_t>(c) * g.h + ih) * g.w;
          const double* src = row + oh * g.wo;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

int conv_out_size(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0) throw ShapeError("conv2d kernel larger than padded input");
  return span / stride + 1;
}

Tensor conv2d_naive(const Tensor& input, const Tensor& kernel, const ConvOptions& opt) {
  const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), opt);
  Tensor out(Shape{g.n, g.f, g.ho, g.wo});
  for (int n = 0; n < g.n; ++n) {
    for (int f = 0; f < g.f; ++f) {
      const int grp = f / g.fg;
      for (int oh = 0; oh < g.ho; ++oh) {
        for (int ow = 0; ow < g.wo; ++ow) {
          double acc = 0.0;
          for (int c = 0; c < g.cg; ++c) {
            for (int ki = 0; ki < g.kh; ++ki) {
              for (int kj = 0; kj < g.kw; ++kj) {
                const int ih = oh * g.stride - g.pad + ki;
                const int iw = ow * g.stride - g.pad + kj;
                if (ih < 0 || ih >= g.h || iw < 0 || iw >= g.w) continue;
                acc += input.at(n, grp * g.cg + c, ih, iw) * kernel.at(f, c, ki, kj);
              }
            }
          }
          out.at(n, f, oh, ow) = acc;
        }
      }
    }
  }
  return out;
}

Tensor conv2d_fast(const Tensor& input, const Tensor& kernel, const ConvOptions& opt) {
  const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), opt);
  Tensor out(Shape{g.n, g.f, g.ho, g.wo});
  const int k = g.k();
  const int p = g.p();
  std::vector<double> col(g.pointwise() ? 0 : static_cast<std::size_t>(k) * p);
  for (int n = 0; n < g.n; ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      const double* x = input.data().data() + (static_cast<std::size_t>(n) * g.c + grp * g.cg) * g.h * g.w;
      const double* colp = x;
      if (!g.pointwise()) {
        im2col(x, g, col.data());
        colp = col.data();
      }
      ConstMatMap wmat(kernel.data().data() + static_cast<std::size_t>(grp) * g.fg * k, g.fg, k);
      ConstMatMap cmat(colp, k, p);
      MatMap omat(out.data().data() + (static_cast<std::size_t>(n) * g.f + grp * g.fg) * p, g.fg, p);
      omat.noalias() = wmat * cmat;
    }
  }
  return out;
}

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::LeakyRelu:
      return x > 0.0 ? x : kLeakySlope * x;
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Silu:
      return x * sigmoid(x);
  }
  return x;
}

double activate_grad(double x, Activation kind) {
  switch (kind) {
    case Activation::LeakyRelu:
      return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Silu: {
      const double s = sigmoid(x);
      return s + x * s * (1.0 - s);
    }
  }
  return 1.0;
}

namespace ops {

Var conv2d(Tape& tape, Var input, Var kernel, const ConvOptions& opt) {
  const ConvGeom g = conv_geometry(tape.shape(input), tape.shape(kernel), opt);
  Tensor out = conv2d_fast(tape.value(input), tape.value(kernel), opt);
  return tape.record("conv2d", std::move(out), {input, kernel}, [g](const BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& w = ctx.input(1);
    Tensor* dx = ctx.grad(0);
    Tensor* dw = ctx.grad(1);
    const int k = g.k();
    const int p = g.p();
    std::vector<double> col(g.pointwise() ? 0 : static_cast<std::size_t>(k) * p);
    std::vector<double> dcol(g.pointwise() || !dx ? 0 : static_cast<std::size_t>(k) * p);
    for (int n = 0; n < g.n; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        const std::size_t xoff = (static_cast<std::size_t>(n) * g.c + grp * g.cg) * g.h * g.w;
        ConstMatMap gout(ctx.grad_out().data().data() + (static_cast<std::size_t>(n) * g.f + grp * g.fg) * p, g.fg, p);
        ConstMatMap wmat(w.data().data() + static_cast<std::size_t>(grp) * g.fg * k, g.fg, k);
        if (dw) {
          const double* colp = x.data().data() + xoff;
          if (!g.pointwise()) {
            im2col(colp, g, col.data());
            colp = col.data();
          }
          MatMap dwmat(dw->data().data() + static_cast<std::size_t>(grp) * g.fg * k, g.fg, k);
          dwmat.noalias() += gout * ConstMatMap(colp, k, p).transpose();
        }
        if (dx) {
          if (g.pointwise()) {
            MatMap dxmat(dx->data().data() + xoff, k, p);
            dxmat.noalias() += wmat.transpose() * gout;
          } else {
            MatMap dcmat(dcol.data(), k, p);
            dcmat.noalias() = wmat.transpose() * gout;
            col2im_add(dcol.data(), g, dx->data().data() + xoff);
          }
        }
      }
    }
  });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& bv = tape.value(bias);
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_bias: bias " + shape_str(bv.shape()) + " does not match axis 1 of " + shape_str(xv.shape()));
  }
  const int n = xv.dim(0);
  const int c = xv.dim(1);
  const std::size_t inner = xv.size() / (static_cast<std::size_t>(n) * c);
  Tensor out = xv;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double* p = out.data().data() + (static_cast<std::size_t>(i) * c + j) * inner;
      for (std::size_t q = 0; q < inner; ++q) p[q] += bv[j];
    }
  return tape.record("add_bias", std::move(out), {x, bias}, [n, c, inner](const BackwardContext& ctx) {
    const auto& go = ctx.grad_out();
    if (Tensor* dx = ctx.grad(0)) axpy(1.0, go, *dx);
    if (Tensor* db = ctx.grad(1)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          const double* p = go.data().data() + (static_cast<std::size_t>(i) * c + j) * inner;
          double acc = 0.0;
          for (std::size_t q = 0; q < inner; ++q) acc += p[q];
          (*db)[j] += acc;
        }
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  Tensor out = tape.value(a);
  axpy(1.0, tape.value(b), out);
  return tape.record("add", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* da = ctx.grad(0)) axpy(1.0, ctx.grad_out(), *da);
    if (Tensor* db = ctx.grad(1)) axpy(1.0, ctx.grad_out(), *db);
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record("mul", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    const Tensor& go = ctx.grad_out();
    if (Tensor* da = ctx.grad(0))
      for (std::size_t i = 0; i < go.size(); ++i) (*da)[i] += go[i] * ctx.input(1)[i];
    if (Tensor* db = ctx.grad(1))
      for (std::size_t i = 0; i < go.size(); ++i) (*db)[i] += go[i] * ctx.input(0)[i];
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = tape.value(x);
  for (double& v : out.data()) v *= factor;
  return tape.record("scale", std::move(out), {x}, [factor](const BackwardContext& ctx) {
    if (Tensor* dx = ctx.grad(0)) axpy(factor, ctx.grad_out(), *dx);
  });
}

Var activation(Tape& tape, Var x, Activation kind) {
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = activate(xv[i], kind);
  return tape.record("activation", std::move(out), {x}, [kind](const BackwardContext& ctx) {
    Tensor* dx = ctx.grad(0);
    if (!dx) return;
    const Tensor& go = ctx.grad_out();
    const Tensor& in = ctx.input(0);
    for (std::size_t i = 0; i < go.size(); ++i) (*dx)[i] += go[i] * activate_grad(in[i], kind);
  });
}

Var upsample_nearest(Tape& tape, Var x, int factor) {
  if (factor < 2) throw ParameterError("upsample factor must be >= 2, got " + std::to_string(factor));
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 4) throw ShapeError("upsample_nearest expects NCHW input");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out(Shape{n, c, h * factor, w * factor});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h * factor; ++y)
        for (int q = 0; q < w * factor; ++q) out.at(i, j, y, q) = xv.at(i, j, y / factor, q / factor);
  return tape.record("upsample_nearest", std::move(out), {x}, [factor](const BackwardContext& ctx) {
    Tensor* dx = ctx.grad(0);
    if (!dx) return;
    const Tensor& go = ctx.grad_out();
    const Shape& s = go.shape();
    for (int i = 0; i < s[0]; ++i)
      for (int j = 0; j < s[1]; ++j)
        for (int y = 0; y < s[2]; ++y)
          for (int q = 0; q < s[3]; ++q) dx->at(i, j, y / factor, q / factor) += go.at(i, j, y, q);
  });
}

Var concat_channels(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one input");
  const Shape& first = tape.shape(parts[0]);
  int total_c = 0;
  for (const Var v : parts) {
    const Shape& s = tape.shape(v);
    if (s.size() < 2 || s.size() != first.size() || s[0] != first[0] ||
        !std::equal(s.begin() + 2, s.end(), first.begin() + 2)) {
      throw ShapeError("concat_channels: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    }
    total_c += s[1];
  }
  Shape out_shape = first;
  out_shape[1] = total_c;
  const int n = first[0];
  const std::size_t inner = shape_numel(first) / (static_cast<std::size_t>(n) * first[1]);
  Tensor out(out_shape);
  std::vector<int> offsets;
  int off = 0;
  for (const Var v : parts) {
    const Tensor& pv = tape.value(v);
    const int c = pv.dim(1);
    for (int i = 0; i < n; ++i) {
      const double* src = pv.data().data() + static_cast<std::size_t>(i) * c * inner;
      double* dst = out.data().data() + (static_cast<std::size_t>(i) * total_c + off) * inner;
      std::copy(src, src + c * inner, dst);
    }
    offsets.push_back(off);
    off += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record("concat_channels", std::move(out), std::move(inputs),
                     [offsets, n, total_c, inner](const BackwardContext& ctx) {
                       const Tensor& go = ctx.grad_out();
                       for (std::size_t k = 0; k < offsets.size(); ++k) {
                         Tensor* d = ctx.grad(k);
                         if (!d) continue;
                         const int c = ctx.input(k).dim(1);
                         for (int i = 0; i < n; ++i) {
                           const double* src =
                               go.data().data() + (static_cast<std::size_t>(i) * total_c + offsets[k]) * inner;
                           double* dst = d->data().data() + static_cast<std::size_t>(i) * c * inner;
                           for (std::size_t q = 0; q < c * inner; ++q) dst[q] += src[q];
                         }
                       }
                     });
}

Var sum(Tape& tape, Var x) {
  return tape.record("sum", Tensor::scalar(tape.value(x).sum()), {x}, [](const BackwardContext& ctx) {
    if (Tensor* dx = ctx.grad(0)) {
      const double g = ctx.grad_out()[0];
      for (double& v : dx->data()) v += g;
    }
  });
}

Var mean(Tape& tape, Var x) {
  const double n = static_cast<double>(tape.value(x).size());
  return tape.record("mean", Tensor::scalar(tape.value(x).sum() / n), {x}, [n](const BackwardContext& ctx) {
    if (Tensor* dx = ctx.grad(0)) {
      const double g = ctx.grad_out()[0] / n;
      for (double& v : dx->data()) v += g;
    }
  });
}

Var matmul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  MatMap(out.data().data(), m, n).noalias() = ConstMatMap(av.data().data(), m, k) * ConstMatMap(bv.data().data(), k, n);
  return tape.record("matmul", std::move(out), {a, b}, [m, k, n](const BackwardContext& ctx) {
    ConstMatMap go(ctx.grad_out().data().data(), m, n);
    if (Tensor* da = ctx.grad(0)) {
      MatMap(da->data().data(), m, k).noalias() += go * ConstMatMap(ctx.input(1).data().data(), k, n).transpose();
    }
    if (Tensor* db = ctx.grad(1)) {
      MatMap(db->data().data(), k, n).noalias() += ConstMatMap(ctx.input(0).data().data(), m, k).transpose() * go;
    }
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {x}, [](const BackwardContext& ctx) {
    if (Tensor* dx = ctx.grad(0)) {
      for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += ctx.grad_out()[i];
    }
  });
}

Var bce_with_logits(Tape& tape, Var logits, double target) {
  const Tensor& lv = tape.value(logits);
  double acc = 0.0;
  for (const double x : lv.data()) acc += softplus(x) - target * x;
  const double n = static_cast<double>(lv.size());
  return tape.record("bce_with_logits", Tensor::scalar(acc / n), {logits}, [target, n](const BackwardContext& ctx) {
    Tensor* dx = ctx.grad(0);
    if (!dx) return;
    const double g = ctx.grad_out()[0] / n;
    const Tensor& in = ctx.input(0);
    for (std::size_t i = 0; i < in.size(); ++i) (*dx)[i] += g * (sigmoid(in[i]) - target);
  });
}

Var external_scalar(Tape& tape, std::span<const Var> inputs, double value, std::vector<Tensor> grads) {
  if (grads.size() != inputs.size()) throw ContractError("external_scalar: one gradient per input required");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (grads[i].shape() != tape.shape(inputs[i])) throw ShapeError("external_scalar: gradient shape mismatch");
  }
  std::vector<Var> in(inputs.begin(), inputs.end());
  return tape.record("external_scalar", Tensor::scalar(value), std::move(in),
                     [grads = std::move(grads)](const BackwardContext& ctx) {
                       const double g = ctx.grad_out()[0];
                       for (std::size_t i = 0; i < grads.size(); ++i) {
                         if (Tensor* d = ctx.grad(i)) axpy(g, grads[i], *d);
                       }
                     });
}

}  // namespace ops
}  // namespace pcbdet
