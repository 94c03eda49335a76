#pragma once

#include <cstdint>
#include <vector>

#include "cafield/ad/tensor.hpp"

namespace cafield::ad {

struct AdamConfig {
  double lr = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled, applied as lr * wd * p
};

struct AdamState {
  explicit AdamState(AdamConfig c = {}) : config(c) {}

  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update over params (same order every call), then zeroes their
/// gradients. Throws UsageError if a parameter has no gradient.
void adam_step(const std::vector<Tensor>& params, AdamState& state);

}  // namespace cafield::ad
