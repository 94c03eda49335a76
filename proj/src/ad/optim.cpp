#include "cafield/ad/optim.hpp"

#include <cmath>

#include "cafield/error.hpp"

namespace cafield::ad {

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw UsageError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw UsageError("adam_step: parameter list changed between steps");
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) throw UsageError("adam_step: parameter shape changed");
    auto values = p.mutable_values();
    auto grad = p.mutable_grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      values[k] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * values[k]);
      grad[k] = 0.0;
    }
  }
}

}  // namespace cafield::ad
