#include "autohead/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "autohead/error.hpp"

namespace autohead::nn {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

// Output columns [lo, hi) whose input column ox * stride + offset - padding lies inside [0, extent).
struct Span1d {
  std::size_t lo;
  std::size_t hi;
};

Span1d valid_outputs(std::size_t extent, std::size_t out_extent, std::size_t stride, std::size_t offset,
                     std::size_t padding) {
  std::size_t lo = 0;
  if (padding > offset) lo = (padding - offset + stride - 1) / stride;
  // ox * stride + offset - padding <= extent - 1
  const long long top = static_cast<long long>(extent) - 1 + static_cast<long long>(padding) -
                        static_cast<long long>(offset);
  std::size_t hi = top < 0 ? 0 : static_cast<std::size_t>(top) / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      const double* brow = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

std::size_t window_output_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t padding) {
  if (window == 0 || stride == 0) throw ConfigError("window and stride must be >= 1");
  const std::size_t padded = in + 2 * padding;
  if (padded < window) {
    throw ConfigError("window " + std::to_string(window) + " exceeds padded extent " + std::to_string(padded));
  }
  if ((padded - window) % stride != 0) {
    throw ConfigError("(" + std::to_string(in) + " + 2*" + std::to_string(padding) + " - " + std::to_string(window) +
                      ") is not divisible by stride " + std::to_string(stride));
  }
  return (padded - window) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw ShapeError("conv2d kernels " + shape_to_string(kernels.shape()) + " do not match input channels of " +
                     shape_to_string(input.shape()));
  }
  if (kernels.dim(3) != k) throw ShapeError("conv2d kernels must be square, got " + shape_to_string(kernels.shape()));
  if (bias.size() != cout) throw ShapeError("conv2d bias " + shape_to_string(bias.shape()) + " for " +
                                            std::to_string(cout) + " output channels");
  const std::size_t ho = window_output_extent(h, k, stride, padding);
  const std::size_t wo = window_output_extent(w, k, stride, padding);

  Tensor out({cout, ho, wo});
  const double* in = input.data().data();
  double* o = out.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    double* oplane = o + co * ho * wo;
    std::fill(oplane, oplane + ho * wo, bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* iplane = in + ci * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const Span1d rows = valid_outputs(h, ho, stride, ky, padding);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wt = kernels[((co * cin + ci) * k + ky) * k + kx];
          const Span1d cols = valid_outputs(w, wo, stride, kx, padding);
          if (cols.lo >= cols.hi) continue;
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const double* irow = iplane + (oy * stride + ky - padding) * w;
            double* orow = oplane + oy * wo;
            if (stride == 1) {
              const double* shifted = irow + (cols.lo + kx - padding);
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wt * shifted[ox - cols.lo];
            } else {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wt * irow[ox * stride + kx - padding];
            }
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding,
                            const Tensor& upstream) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != cin) throw ShapeError("conv2d kernels do not match input channels");
  const std::size_t ho = window_output_extent(h, k, stride, padding);
  const std::size_t wo = window_output_extent(w, k, stride, padding);
  if (upstream.shape() != Shape{cout, ho, wo}) {
    throw ShapeError("conv2d upstream " + shape_to_string(upstream.shape()) + " expected " +
                     shape_to_string({cout, ho, wo}));
  }

  Conv2dGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({cout})};
  const double* in = input.data().data();
  const double* up = upstream.data().data();
  double* gin = g.input.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    const double* uplane = up + co * ho * wo;
    double s = 0.0;
    for (std::size_t i = 0; i < ho * wo; ++i) s += uplane[i];
    g.bias[co] = s;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* iplane = in + ci * h * w;
      double* giplane = gin + ci * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const Span1d rows = valid_outputs(h, ho, stride, ky, padding);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((co * cin + ci) * k + ky) * k + kx;
          const double wt = kernels[widx];
          const Span1d cols = valid_outputs(w, wo, stride, kx, padding);
          double acc = 0.0;
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const std::size_t row = (oy * stride + ky - padding) * w;
            const double* irow = iplane + row;
            double* girow = giplane + row;
            const double* urow = uplane + oy * wo;
            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
              const std::size_t ix = ox * stride + kx - padding;
              acc += urow[ox] * irow[ix];
              girow[ix] += wt * urow[ox];
            }
          }
          g.kernels[widx] = acc;
        }
      }
    }
  }
  return g;
}

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "maxpool2d input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = window_output_extent(h, window, stride, 0);
  const std::size_t wo = window_output_extent(w, window, stride, 0);
  Tensor out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = input.at(ch, oy * stride, ox * stride);
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            best = std::max(best, input.at(ch, oy * stride + dy, ox * stride + dx));
          }
        }
        out.at(ch, oy, ox) = best;
      }
    }
  }
  return out;
}

Tensor maxpool2d_backward(const Tensor& input, std::size_t window, std::size_t stride, const Tensor& upstream) {
  require_rank(input, 3, "maxpool2d input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = window_output_extent(h, window, stride, 0);
  const std::size_t wo = window_output_extent(w, window, stride, 0);
  if (upstream.shape() != Shape{c, ho, wo}) {
    throw ShapeError("maxpool2d upstream " + shape_to_string(upstream.shape()) + " expected " +
                     shape_to_string({c, ho, wo}));
  }
  Tensor grad(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t by = oy * stride, bx = ox * stride;
        double best = input.at(ch, by, bx);
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const double v = input.at(ch, oy * stride + dy, ox * stride + dx);
            if (v > best) {  // strict: ties keep the first row-major position
              best = v;
              by = oy * stride + dy;
              bx = ox * stride + dx;
            }
          }
        }
        grad.at(ch, by, bx) += upstream.at(ch, oy, ox);
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (input.shape() != upstream.shape()) throw ShapeError("relu upstream shape differs from input");
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0 ? upstream[i] : 0.0;
  return grad;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "fully_connected weights");
  const std::size_t dout = weights.dim(0), din = weights.dim(1);
  if (input.rank() != 1 || input.size() != din) {
    throw ShapeError("fully_connected input " + shape_to_string(input.shape()) + " does not match weights " +
                     shape_to_string(weights.shape()));
  }
  if (bias.size() != dout) throw ShapeError("fully_connected bias " + shape_to_string(bias.shape()));
  Tensor out({dout});
  const double* x = input.data().data();
  for (std::size_t o = 0; o < dout; ++o) {
    const double* row = weights.data().data() + o * weights.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < din; ++i) s += row[i] * x[i];
    out[o] = s + bias[o];
  }
  return out;
}

FullyConnectedGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  require_rank(weights, 2, "fully_connected weights");
  const std::size_t dout = weights.dim(0), din = weights.dim(1);
  if (input.rank() != 1 || input.size() != din) throw ShapeError("fully_connected input does not match weights");
  if (upstream.size() != dout) throw ShapeError("fully_connected upstream does not match output");
  FullyConnectedGrads g{Tensor({din}), Tensor(weights.shape()), upstream.reshaped({dout})};
  const double* x = input.data().data();
  double* gx = g.input.data().data();
  for (std::size_t o = 0; o < dout; ++o) {
    const double u = upstream[o];
    const double* row = weights.data().data() + o * weights.dim(1);
    double* grow = &g.weights.at(o, 0);
    for (std::size_t i = 0; i < din; ++i) {
      grow[i] = u * x[i];
      gx[i] += u * row[i];
    }
  }
  return g;
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) return input;
  return multiply(input, dropout_mask(input.shape(), rate, rng));
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise product of " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax logits");
  double mx = logits[0];
  for (double v : logits.data()) mx = std::max(mx, v);
  Tensor out(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out.data()) v /= sum;
  return out;
}

double cross_entropy(const Tensor& probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(probabilities.size()) + " classes");
  }
  return -std::log(std::max(probabilities[label], kProbabilityFloor));
}

Tensor softmax_cross_entropy_grad(const Tensor& probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(probabilities.size()) + " classes");
  }
  Tensor g = probabilities;
  g[label] -= 1.0;
  return g;
}

}  // namespace autohead::nn
