#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cafield/ad/tensor.hpp"

namespace cafield::ad {

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries with a kink inside the stencil
  bool passed = true;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of f with central differences (step h)
/// for every entry of every input that requires a gradient. Relative error
/// is |a - n| / max(|a|, |n|, 1e-3).
GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double tol,
                          double h = 1e-5);

/// For piecewise-smooth f (ReLU, max, nearest-neighbor selection): an entry
/// failing the central check whose analytic gradient matches the forward or
/// backward one-sided slope within kink_tol straddles a kink and is skipped.
/// Fails if more than max_skip_fraction of the entries are skipped.
GradcheckReport gradcheck_piecewise(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                    double tol, double h = 1e-5, double kink_tol = 1e-3,
                                    double max_skip_fraction = 0.01);

}  // namespace cafield::ad
