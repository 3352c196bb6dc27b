#include "pcbdet/tape.hpp"

#include "pcbdet/errors.hpp"

namespace pcbdet {

const Tensor& Gradients::of(Var v) const {
  const auto it = by_id_.find(v.id);
  if (it == by_id_.end()) throw ContractError("no gradient recorded for var " + std::to_string(v.id));
  return it->second;
}

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  Node node;
  node.op = "leaf";
  node.needs_grad = value.requires_grad();
  node.is_leaf = true;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::parameter(Tensor value) {
  value.set_requires_grad(true);
  return leaf(std::move(value));
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite output from op '" + op + "'");
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (const Var in : inputs) {
    if (in.id >= nodes_.size()) throw ContractError("op '" + node.op + "' consumes an unknown var");
    node.inputs.push_back(in.id);
    node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Gradients Tape::backward(Var loss) const {
  if (loss.id >= nodes_.size()) throw ContractError("backward from an unknown var");
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);

  for (std::size_t k = loss.id + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (node.is_leaf || !node.needs_grad || grads[k].empty()) continue;
    std::vector<const Tensor*> inputs;
    std::vector<Tensor*> slots;
    inputs.reserve(node.inputs.size());
    slots.reserve(node.inputs.size());
    for (const std::size_t in : node.inputs) {
      inputs.push_back(&nodes_[in].value);
      if (nodes_[in].needs_grad) {
        if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        slots.push_back(&grads[in]);
      } else {
        slots.push_back(nullptr);
      }
    }
    node.backward(BackwardContext(grads[k], node.value, std::move(inputs), std::move(slots)));
    if (k != loss.id) grads[k] = Tensor();
  }

  Gradients out;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& node = nodes_[k];
    if (!node.is_leaf || !node.needs_grad) continue;
    out.by_id_.emplace(k, grads[k].empty() ? Tensor(node.value.shape(), 0.0) : std::move(grads[k]));
  }
  return out;
}

}  // namespace pcbdet
