#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// What a backward rule sees: the upstream gradient, the forward values,
/// and a slot per input to accumulate into (null when that input does not
/// need a gradient).
class BackwardContext {
 public:
  BackwardContext(const Tensor& grad_out, const Tensor& output, std::vector<const Tensor*> inputs,
                  std::vector<Tensor*> grads)
      : grad_out_(grad_out), output_(output), inputs_(std::move(inputs)), grads_(std::move(grads)) {}

  const Tensor& grad_out() const noexcept { return grad_out_; }
  const Tensor& output() const noexcept { return output_; }
  const Tensor& input(std::size_t i) const { return *inputs_.at(i); }
  Tensor* grad(std::size_t i) const { return grads_.at(i); }

 private:
  const Tensor& grad_out_;
  const Tensor& output_;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Gradients of a scalar with respect to every requires-grad leaf.
class Gradients {
 public:
  const Tensor& of(Var v) const;
  bool contains(Var v) const { return by_id_.count(v.id) != 0; }
  const std::unordered_map<std::size_t, Tensor>& all() const noexcept { return by_id_; }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> by_id_;
};

/// Append-only record of primitive ops for reverse-mode differentiation.
///
/// Inputs always precede the op that consumes them, so walking the record
/// backwards is a valid reverse topological order. Every recorded value is
/// checked for NaN/Inf and a NumericError is thrown at the offending op.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var parameter(Tensor value);

  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a single-element `loss`. Leaves not reached get zeros.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace pcbdet
