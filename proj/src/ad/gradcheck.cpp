#include "cafield/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cafield::ad {

namespace {

GradcheckReport run(const ScalarFn& f, const std::vector<Tensor>& inputs, double tol, double h,
                    double kink_tol) {
  std::vector<Tensor> in = inputs;
  for (auto& t : in) t.zero_grad();
  f(in).backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& t : in) {
    if (t.requires_grad() && t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }

  const double f0 = kink_tol > 0 ? f(in).item() : 0.0;
  GradcheckReport report;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!in[i].requires_grad()) continue;
    auto values = in[i].mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double orig = values[k];
      values[k] = orig + h;
      const double fp = f(in).item();
      values[k] = orig - h;
      const double fm = f(in).item();
      values[k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][k];
      ++report.checked;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      const double rel = std::abs(a - numeric) / denom;
      if (kink_tol > 0 && rel >= tol) {
        // Across a kink the exact gradient is the slope of one side.
        const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
        const double scale = std::max({std::abs(a), std::abs(fwd), std::abs(bwd), 1e-3});
        if (std::min(std::abs(a - fwd), std::abs(a - bwd)) / scale < kink_tol) {
          ++report.skipped;
          continue;
        }
      }
      if (rel > report.max_rel_error || std::isnan(rel)) {
        report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_input = i;
        report.worst_index = k;
      }
    }
  }
  for (auto& t : in) t.zero_grad();
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double tol,
                          double h) {
  return run(f, inputs, tol, h, 0.0);
}

GradcheckReport gradcheck_piecewise(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                    double tol, double h, double kink_tol,
                                    double max_skip_fraction) {
  GradcheckReport report = run(f, inputs, tol, h, kink_tol);
  if (static_cast<double>(report.skipped) >
      max_skip_fraction * static_cast<double>(report.checked)) {
    report.passed = false;
  }
  return report;
}

}  // namespace cafield::ad
