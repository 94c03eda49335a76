#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cafield::cli {

struct CheckResult {
  std::string group;
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerifyOptions {
  int lmax = 2;               // degree used by the layer checks
  std::uint64_t seed = 0;
  std::size_t rotations = 20;
  std::size_t grid = 16;
};

/// Y(Rx) = D(R) Y(x) and the D homomorphism for degrees 0..3 (100 samples).
std::vector<CheckResult> check_sh_wigner(const VerifyOptions& opt);
/// CG intertwining and completeness for all triples with n, l <= 3.
std::vector<CheckResult> check_cg(const VerifyOptions& opt);
/// Local average, density scaling and gradient equivariance of input fields.
std::vector<CheckResult> check_lemmas(const VerifyOptions& opt);
/// Exact-rotation residuals of every network stage on an object grid with
/// batch-norm statistics warmed and then frozen. The *_linear checks run the
/// network without the sphere-domain nonlinearity.
std::vector<CheckResult> check_layers(const VerifyOptions& opt);
/// Gradcheck of every differentiable op and of the full training loss.
std::vector<CheckResult> check_autodiff(const VerifyOptions& opt);
/// Reconstruction, orthogonality and Chamfer identities of the losses.
std::vector<CheckResult> check_losses(const VerifyOptions& opt);

std::vector<CheckResult> run_verification(const VerifyOptions& opt);

bool all_passed(const std::vector<CheckResult>& checks);

/// One line per check: status, group/name, residual and tolerance.
void print_checks(std::ostream& os, const std::vector<CheckResult>& checks);

}  // namespace cafield::cli
