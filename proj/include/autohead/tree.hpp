#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "autohead/random.hpp"

namespace autohead::ml {

/// Non-owning row-major N x d view.
struct MatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data + i * cols, cols}; }
};

/// Owning row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  MatrixView view() const { return {values.data(), rows, cols}; }
};

/// Row indices of every column sorted by value (stable on ties); reusable across fits on the same matrix.
struct ColumnOrder {
  std::vector<std::vector<std::uint32_t>> order;
};
ColumnOrder sort_columns(MatrixView x);

enum class SplitMode {
  kExact,   // every midpoint between consecutive distinct values
  kRandom,  // one uniform threshold per candidate feature (extremely randomized trees)
};

struct TreeParams {
  int max_depth = 6;
  std::size_t min_samples_leaf = 1;
  SplitMode mode = SplitMode::kExact;
  std::size_t features_per_split = 0;  // 0 = every feature in the pool
  double lambda = 1.0;                 // Newton leaf regularization, used only with hessians
};

struct TreeNode {
  std::int64_t feature = -1;  // -1 for leaves
  double threshold = 0.0;     // x[feature] < threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;   // leaf output (also kept for internal nodes)
  double gain = 0.0;    // gain of the chosen split, 0 for leaves
  double weight = 0.0;  // sum of sample weights reaching the node

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const;
  std::size_t leaf_count() const;

  void append_to(std::vector<double>& payload) const;
  static DecisionTree read_from(std::span<const double> payload, std::size_t& pos);

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct TreeFitInput {
  MatrixView x;
  std::span<const double> targets;   // regression targets, or residuals y - p in Newton mode
  std::span<const double> hessians;  // empty: variance reduction with mean leaves
  std::span<const double> weights;   // empty: all ones; bootstrap multiplicities otherwise (0 excludes a row)
  std::span<const std::size_t> feature_pool;  // empty: all features
  const ColumnOrder* presorted = nullptr;    // computed on demand when null
};

// Greedy level-wise growth. Variance mode maximizes S_L^2/W_L + S_R^2/W_R - S^2/W
// (the reduction in squared error) with leaves S/W; Newton mode uses D = H + lambda
// in place of W, giving leaves sum(r)/(sum(h) + lambda). A node whose targets are
// not all equal is split whenever a split respecting min_samples_leaf exists,
// ties going to the lowest feature and then the lowest threshold.
DecisionTree fit_regression_tree(const TreeFitInput& input, const TreeParams& params, Rng& rng);

}  // namespace autohead::ml
