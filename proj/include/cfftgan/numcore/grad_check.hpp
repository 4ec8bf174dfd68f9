#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::num {

/// Scalar-valued function of the checked inputs.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckOptions {
  double eps = 1e-3;
  double rtol = 1e-3;
  double atol = 1e-5;
  /// Inputs with more elements are checked on a seeded random subset of this
  /// many coordinates.
  std::size_t max_coords = 10000;
  std::uint64_t seed = 0;
  /// Evaluate the finite differences on 64-bit copies of the inputs. `f`
  /// must then build everything from its arguments (no captured tensors).
  /// The analytic gradient is still computed at the inputs' own width.
  bool promote_numeric = false;
  /// For piecewise-smooth functions (relu, abs, max). When > 0 each
  /// coordinate's central difference at step h is compared with the one at
  /// h/2; if they disagree by more than a quarter of the pass tolerance a kink
  /// lies inside the step, h is divided by 10 and the pair retaken, at most
  /// this many times. The h/2 difference is the reference.
  int kink_refinements = 0;

  /// 32-bit checks: rtol 1e-3, atol 1e-5, eps 1e-3, differences in 64-bit.
  static GradCheckOptions single_precision() {
    GradCheckOptions o;
    o.eps = 1e-3;
    o.rtol = 1e-3;
    o.atol = 1e-5;
    o.promote_numeric = true;
    return o;
  }
  /// 64-bit checks: rtol 1e-6, atol 1e-8, eps 1e-5.
  static GradCheckOptions double_precision() {
    GradCheckOptions o;
    o.eps = 1e-5;
    o.rtol = 1e-6;
    o.atol = 1e-8;
    return o;
  }
};

struct InputCheck {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t refined = 0;  // coordinates whose step was shrunk
  bool pass = true;
};

struct GradCheckReport {
  std::vector<InputCheck> inputs;
  bool pass = true;
  std::string summary() const;
};

/// Compares tape gradients of f with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). A coordinate passes when
/// |analytic - numeric| <= atol + rtol |numeric|. Inputs are perturbed in
/// place and restored; their requires_grad flag is set for the duration.
GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace cfftgan::num
