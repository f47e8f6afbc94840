#include "icsc/nn/tape.hpp"

#include <string>

#include "icsc/error.hpp"

namespace icsc::nn {

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value, Tensor* grad_sink) {
  if (grad_sink != nullptr && grad_sink->size() != value.size()) {
    throw UsageError("gradient sink shape " + shape_string(grad_sink->shape()) +
                     " does not match parameter " + shape_string(value.shape()));
  }
  Node n;
  n.external = &value;
  n.grad_external = grad_sink;
  n.requires_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("variable is not recorded on this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("variable is not recorded on this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external != nullptr ? *n.external : n.owned;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad(Var v) {
  Node& n = node(v);
  if (n.grad_external != nullptr) return *n.grad_external;
  if (n.grad.size() == 0 && value(v).size() != 0) n.grad = Tensor(value(v).shape());
  return n.grad;
}

void Tape::backward(Var output, std::span<const double> seed) {
  if (nodes_.empty()) throw UsageError("backward called before any forward pass");
  if (consumed_) throw UsageError("backward already run on this tape");
  const Tensor& out = value(output);
  if (seed.size() != out.size()) {
    throw UsageError("backward seed length " + std::to_string(seed.size()) +
                     " does not match output size " + std::to_string(out.size()));
  }
  consumed_ = true;
  if (!node(output).requires_grad) return;
  Tensor& g = grad(output);
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, Var{i});
  }
}

}  // namespace icsc::nn
