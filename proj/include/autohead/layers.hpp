#pragma once

#include <cstddef>

#include "autohead/random.hpp"
#include "autohead/tensor.hpp"

// Differentiable layer primitives. Every function is pure: outputs depend only
// on the arguments (and the Rng state for dropout in training mode).
namespace autohead::nn {

/// Matrix product of an m x k and a k x n matrix. Summation runs in increasing k.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Output extent of a sliding window: (in + 2 * padding - window) / stride + 1.
/// Throws ConfigError unless the division is exact and the window fits.
std::size_t window_output_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t padding);

// Cross-correlation (kernels are not flipped) over a C x H x W input with
// C_out x C x k x k kernels and zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding,
                            const Tensor& upstream);

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);

/// Routes each upstream value to the first row-major maximum of its window.
Tensor maxpool2d_backward(const Tensor& input, std::size_t window, std::size_t stride, const Tensor& upstream);

Tensor relu(const Tensor& input);

/// Subgradient at 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

/// W x + b for a rank-1 input of length d_in and a d_out x d_in weight matrix.
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct FullyConnectedGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

FullyConnectedGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

enum class Mode { kTrain, kEval };

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise 1 / (1 - rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

/// Identity in eval mode; in train mode multiplies by a fresh dropout_mask.
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);

/// Elementwise product, used for the dropout backward pass with the same mask.
Tensor multiply(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(max(p[label], 1e-12)).
double cross_entropy(const Tensor& probabilities, std::size_t label);

/// Gradient of cross_entropy(softmax(z)) with respect to z: p - onehot(label).
Tensor softmax_cross_entropy_grad(const Tensor& probabilities, std::size_t label);

}  // namespace autohead::nn
