#include "autohead/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "autohead/error.hpp"
#include "autohead/random.hpp"

namespace autohead::nn {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {
double project(const Tensor& y, const Tensor& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += u[i] * y[i];
  return s;
}
}  // namespace

GradCheckResult finite_difference_check(const DifferentiableOp& op, const Tensor& input, double eps,
                                        std::uint64_t seed) {
  if (!(eps > 0.0)) throw ConfigError("finite difference step must be positive");
  const Tensor y = op.forward(input);
  Tensor u(y.shape());
  Rng rng(seed);
  for (double& v : u.data()) v = rng.uniform(-1.0, 1.0);

  const Tensor analytic = op.backward(input, u);
  if (analytic.shape() != input.shape()) {
    throw ShapeError("analytic gradient " + shape_to_string(analytic.shape()) + " for input " +
                     shape_to_string(input.shape()));
  }

  GradCheckResult result;
  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = project(op.forward(x), u);
    x[i] = orig - eps;
    const double down = project(op.forward(x), u);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric);
    if (err > result.max_relative_error || i == 0) {
      result = {std::max(err, result.max_relative_error), i, analytic[i], numeric};
    }
  }
  return result;
}

}  // namespace autohead::nn
