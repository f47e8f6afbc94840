#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "icsc/nn/tensor.hpp"

namespace icsc::nn {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape;
/// Receives the tape and the node being differentiated.
using BackwardFn = std::function<void(Tape&, Var)>;

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// the reverse of insertion order is a valid topological order for backward.
///
/// Gradient buffers are allocated only for nodes that depend on something
/// requiring a gradient. Parameter nodes refer to caller-owned value and
/// gradient tensors; backward accumulates into the latter.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// `grad_sink` may be null for inference; it must outlive backward().
  Var parameter(const Tensor& value, Tensor* grad_sink);

  /// Records an op result. `backward` runs only if the node requires grad.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient buffer of `v`, allocated (zeroed) on first use.
  Tensor& grad(Var v);

  /// Seeds d(output) with `seed` (same length as the output) and propagates.
  /// Throws UsageError if nothing was recorded or `output` is not on this tape.
  void backward(Var output, std::span<const double> seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Tensor* grad_external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace icsc::nn
