#include "icsc/nn/adam.hpp"

#include <cmath>

#include "icsc/error.hpp"

namespace icsc::nn {

AdamState make_adam(std::span<const Tensor> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size() || params.size() != names.size()) {
    throw UsageError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->size() != grads[i].size() || params[i]->size() != state.m[i].size()) {
      throw UsageError("adam_step: shape mismatch for parameter '" + names[i] + "'");
    }
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError("non-finite gradient in parameter '" + names[i] + "' at element " +
                           std::to_string(j));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace icsc::nn
