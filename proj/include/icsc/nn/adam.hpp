#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icsc/nn/tensor.hpp"

namespace icsc::nn {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // first moments, parameter-shaped
  std::vector<Tensor> v;  // second moments, parameter-shaped
};

/// Allocates zeroed moments mirroring `params`.
AdamState make_adam(std::span<const Tensor> params, double lr);

/// One bias-corrected ADAM update in place. Throws NumericError naming the
/// parameter (and element) if any gradient is non-finite; nothing is updated
/// in that case.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads,
               std::span<const std::string> names);

}  // namespace icsc::nn
