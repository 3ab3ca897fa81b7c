#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hst/tensor.hpp"

namespace hst {

// Central finite-difference validation of reverse-mode gradients. Checks run
// in 64-bit arithmetic regardless of training precision; relative error uses
// denominator max(|analytic|, |numeric|, 1e-8).

constexpr double kGradCheckTol = 1e-4;
constexpr double kGradCheckStep = 1e-4;

struct GradCheckResult {
  std::string name;
  size_t elements_checked = 0;
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string worst_param;
  size_t worst_index = 0;

  bool pass() const { return max_rel_err <= kGradCheckTol; }
};

using LossFn64 = std::function<Tensor64()>;

// fn rebuilds the computation from the listed parameter tensors (captured by
// the closure) and returns a scalar loss. Every `stride`-th element of every
// parameter is perturbed by +/- h; stride 1 checks all elements.
GradCheckResult gradcheck(const std::string& name, const LossFn64& fn,
                          std::vector<std::pair<std::string, Tensor64>> params,
                          double h = kGradCheckStep, size_t stride = 1);

// Standard battery over every differentiable primitive, >= 5 random
// instances each. Used by the gradcheck CLI verb and the acceptance suite.
std::vector<GradCheckResult> primitive_gradchecks(uint64_t seed);

// Reduced end-to-end model check: full forward + charbonnier loss on a
// 1x3x8x8 input with channels 8, window 4, 1 RSTB per branch, 2 STLs.
GradCheckResult model_gradcheck(uint64_t seed, size_t stride = 1);

}  // namespace hst
