#include "pcbdet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "pcbdet/errors.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const int d : shape) {
    if (d < 1) throw ShapeError("tensor dims must be >= 1, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::filled(Shape shape, const Fill& fill) {
  Tensor t(std::move(shape));
  if (const auto* c = std::get_if<double>(&fill)) {
    std::fill(t.data_.begin(), t.data_.end(), *c);
  } else if (const auto* u = std::get_if<UniformFill>(&fill)) {
    Rng rng(u->seed);
    for (double& v : t.data_) v = rng.uniform(u->lo, u->hi);
  } else {
    const auto& n = std::get<NormalFill>(fill);
    Rng rng(n.seed);
    for (double& v : t.data_) v = rng.normal(n.mean, n.stddev);
  }
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out(std::move(shape), data_);
  out.requires_grad_ = requires_grad_;
  return out;
}

bool Tensor::all_finite() const noexcept {
  for (const double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (x.shape() != y.shape()) throw ShapeError("axpy shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace pcbdet
