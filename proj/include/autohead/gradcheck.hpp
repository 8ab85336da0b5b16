#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "autohead/tensor.hpp"

namespace autohead::nn {

/// A tensor-to-tensor function paired with its hand-derived vector-Jacobian product.
struct DifferentiableOp {
  std::function<Tensor(const Tensor&)> forward;
  /// Gradient with respect to the argument, given the gradient with respect to the output.
  std::function<Tensor(const Tensor& x, const Tensor& upstream)> backward;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

// Compares op.backward against central differences (f(x+eps) - f(x-eps)) / 2eps
// of the scalar L(x) = sum_k u_k f(x)_k, where u is a fixed random projection
// drawn from `seed`. The op must be deterministic (dropout in eval mode).
GradCheckResult finite_difference_check(const DifferentiableOp& op, const Tensor& input, double eps,
                                        std::uint64_t seed = 0);

}  // namespace autohead::nn
