#include <gtest/gtest.h>

#include "autohead/error.hpp"
#include "autohead/layers.hpp"
#include "autohead/random.hpp"
#include "autohead/tensor.hpp"

using autohead::Rng;
using autohead::Tensor;
namespace nn = autohead::nn;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at(1, 2, 3) = 7.0;
  EXPECT_EQ(t[23], 7.0);
  EXPECT_EQ(t.reshaped({24})[23], 7.0);
  EXPECT_THROW(t.reshaped({5, 5}), autohead::ShapeError);
}

TEST(Tensor, RejectsDataOfWrongLength) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), autohead::ShapeError);
}

TEST(Matmul, HandExample) {
  const auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const auto b = Tensor::matrix(2, 1, {5, 6});
  const auto c = nn::matmul(a, b);
  ASSERT_EQ(c.shape(), (autohead::Shape{2, 1}));
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);
}

TEST(Matmul, IdentityAndZero) {
  const auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const auto b = Tensor::matrix(2, 3, {1.5, -2, 3, 4, 5.25, -6});
  EXPECT_EQ(nn::matmul(eye, b), b);
  const auto zero = nn::matmul(b, Tensor({3, 4}, 0.0));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(6), n = 1 + rng.below(4);
    Tensor a({m, k}), b({k, n});
    for (auto& v : a.data()) v = rng.uniform(-2, 2);
    for (auto& v : b.data()) v = rng.uniform(-2, 2);
    const auto c = nn::matmul(a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
        EXPECT_EQ(c.at(i, j), s);
      }
    }
  }
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(nn::matmul(Tensor({2, 3}), Tensor({2, 3})), autohead::ShapeError);
}
