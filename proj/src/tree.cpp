#include "autohead/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "autohead/error.hpp"

namespace autohead::ml {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols) throw ShapeError("matrix data does not match " + std::to_string(rows) + "x" +
                                                     std::to_string(cols));
}

ColumnOrder sort_columns(MatrixView x) {
  ColumnOrder co;
  co.order.resize(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& o = co.order[f];
    o.resize(x.rows);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return co;
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw DataError("decision tree has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!std::isfinite(n.value)) throw DataError("decision tree leaf value is not finite");
    if (!n.is_leaf() && (n.left <= i || n.right <= i || n.left >= nodes_.size() || n.right >= nodes_.size())) {
      throw DataError("decision tree node " + std::to_string(i) + " has invalid children");
    }
  }
}

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& n = nodes_[i];
    i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes_[i].value;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
  }
  return best;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void DecisionTree::append_to(std::vector<double>& payload) const {
  payload.push_back(static_cast<double>(nodes_.size()));
  for (const auto& n : nodes_) {
    payload.insert(payload.end(), {static_cast<double>(n.feature), n.threshold, static_cast<double>(n.left),
                                   static_cast<double>(n.right), n.value, n.gain, n.weight});
  }
}

DecisionTree DecisionTree::read_from(std::span<const double> payload, std::size_t& pos) {
  auto next = [&]() {
    if (pos >= payload.size()) throw DataError("truncated decision tree payload");
    return payload[pos++];
  };
  const auto count = static_cast<std::size_t>(next());
  std::vector<TreeNode> nodes(count);
  for (auto& n : nodes) {
    n.feature = static_cast<std::int64_t>(next());
    n.threshold = next();
    n.left = static_cast<std::uint32_t>(next());
    n.right = static_cast<std::uint32_t>(next());
    n.value = next();
    n.gain = next();
    n.weight = next();
  }
  return DecisionTree(std::move(nodes));
}

namespace {

constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

struct NodeStats {
  double s = 0.0;  // sum of w * target
  double h = 0.0;  // sum of w * hessian
  double w = 0.0;  // sum of weights
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = -std::numeric_limits<double>::infinity();
};

struct Best {
  double gain = -std::numeric_limits<double>::infinity();
  std::int64_t feature = -1;
  double threshold = 0.0;

  // Gains equal up to summation-order rounding count as ties, which the scan order settles.
  bool beaten_by(double g) const { return feature < 0 || g > gain + 1e-12 * std::max(1.0, std::abs(gain)); }
};

}  // namespace

DecisionTree fit_regression_tree(const TreeFitInput& in, const TreeParams& params, Rng& rng) {
  const MatrixView& x = in.x;
  const std::size_t n = x.rows;
  if (params.max_depth < 0) throw ConfigError("tree depth must be >= 0");
  if (n == 0 || x.cols == 0) throw ConfigError("cannot fit a tree on empty input");
  if (in.targets.size() != n) throw ShapeError("tree targets do not match the row count");
  const bool newton = !in.hessians.empty();
  if (newton && in.hessians.size() != n) throw ShapeError("tree hessians do not match the row count");
  if (!in.weights.empty() && in.weights.size() != n) throw ShapeError("tree weights do not match the row count");
  if (params.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");

  std::vector<std::size_t> pool;
  if (in.feature_pool.empty()) {
    pool.resize(x.cols);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    pool.assign(in.feature_pool.begin(), in.feature_pool.end());
    for (auto f : pool) {
      if (f >= x.cols) throw ShapeError("feature pool index out of range");
    }
  }
  ColumnOrder local;
  const ColumnOrder* order = in.presorted;
  if (order == nullptr) {
    local = sort_columns(x);
    order = &local;
  }

  auto weight = [&](std::size_t r) { return in.weights.empty() ? 1.0 : in.weights[r]; };
  auto denom = [&](const NodeStats& s) { return newton ? s.h + params.lambda : s.w; };
  auto score = [](double s, double d) { return d > 0.0 ? s * s / d : 0.0; };
  const double lambda = newton ? params.lambda : 0.0;

  std::vector<TreeNode> nodes(1);
  std::vector<NodeStats> stats(1);
  std::vector<std::uint32_t> node_of(n, kNoNode);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weight(r);
    if (w <= 0.0) continue;
    node_of[r] = 0;
    auto& st = stats[0];
    st.s += w * in.targets[r];
    st.h += newton ? w * in.hessians[r] : 0.0;
    st.w += w;
    st.tmin = std::min(st.tmin, in.targets[r]);
    st.tmax = std::max(st.tmax, in.targets[r]);
  }
  if (stats[0].w <= 0.0) throw ConfigError("cannot fit a tree with zero total weight");

  std::vector<std::uint32_t> frontier{0};
  const double msl = static_cast<double>(params.min_samples_leaf);
  const std::size_t per_split =
      params.features_per_split == 0 ? pool.size() : std::min(params.features_per_split, pool.size());

  for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    // Frontier nodes that can still split get a dense slot.
    std::vector<std::int64_t> slot(nodes.size(), -1);
    std::vector<std::uint32_t> open;
    for (auto id : frontier) {
      const auto& st = stats[id];
      if (st.tmin < st.tmax && st.w >= 2.0 * msl) {
        slot[id] = static_cast<std::int64_t>(open.size());
        open.push_back(id);
      }
    }
    if (open.empty()) break;
    const std::size_t k = open.size();
    const std::size_t p = pool.size();

    // Candidate features per node (index into pool).
    std::vector<char> selected(k * p, per_split == p ? 1 : 0);
    if (per_split < p) {
      std::vector<std::size_t> idx(p);
      for (std::size_t s = 0; s < k; ++s) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < per_split; ++i) {
          const auto j = i + static_cast<std::size_t>(rng.below(p - i));
          std::swap(idx[i], idx[j]);
          selected[s * p + idx[i]] = 1;
        }
      }
    }

    std::vector<Best> best(k);
    std::vector<double> sl(k), hl(k), wl(k), last(k);
    std::vector<char> seen(k);

    if (params.mode == SplitMode::kExact) {
      for (std::size_t pi = 0; pi < p; ++pi) {
        const std::size_t f = pool[pi];
        std::fill(sl.begin(), sl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(wl.begin(), wl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (auto r : order->order[f]) {
          const auto node = node_of[r];
          if (node == kNoNode || slot[node] < 0) continue;
          const auto s = static_cast<std::size_t>(slot[node]);
          if (!selected[s * p + pi]) continue;
          const double v = x(r, f);
          if (seen[s] && v > last[s]) {
            const auto& st = stats[node];
            const double wr = st.w - wl[s];
            if (wl[s] >= msl && wr >= msl) {
              const double dl = newton ? hl[s] + lambda : wl[s];
              const double dr = newton ? (st.h - hl[s]) + lambda : wr;
              const double gain = score(sl[s], dl) + score(st.s - sl[s], dr) - score(st.s, denom(st));
              if (best[s].beaten_by(gain)) {
                double thr = 0.5 * (last[s] + v);
                if (!(thr > last[s])) thr = v;
                best[s] = {gain, static_cast<std::int64_t>(f), thr};
              }
            }
          }
          const double w = weight(r);
          sl[s] += w * in.targets[r];
          if (newton) hl[s] += w * in.hessians[r];
          wl[s] += w;
          last[s] = v;
          seen[s] = 1;
        }
      }
    } else {
      std::vector<double> lo(k * p, std::numeric_limits<double>::infinity());
      std::vector<double> hi(k * p, -std::numeric_limits<double>::infinity());
      for (std::size_t r = 0; r < n; ++r) {
        const auto node = node_of[r];
        if (node == kNoNode || slot[node] < 0) continue;
        const auto s = static_cast<std::size_t>(slot[node]);
        for (std::size_t pi = 0; pi < p; ++pi) {
          const double v = x(r, pool[pi]);
          lo[s * p + pi] = std::min(lo[s * p + pi], v);
          hi[s * p + pi] = std::max(hi[s * p + pi], v);
        }
      }
      std::vector<double> thr(k * p, std::numeric_limits<double>::quiet_NaN());
      for (std::size_t s = 0; s < k; ++s) {
        for (std::size_t pi = 0; pi < p; ++pi) {
          if (!selected[s * p + pi] || !(lo[s * p + pi] < hi[s * p + pi])) continue;
          thr[s * p + pi] = rng.uniform(lo[s * p + pi], hi[s * p + pi]);
        }
      }
      for (std::size_t pi = 0; pi < p; ++pi) {
        const std::size_t f = pool[pi];
        std::fill(sl.begin(), sl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(wl.begin(), wl.end(), 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          const auto node = node_of[r];
          if (node == kNoNode || slot[node] < 0) continue;
          const auto s = static_cast<std::size_t>(slot[node]);
          const double t = thr[s * p + pi];
          if (std::isnan(t) || !(x(r, f) < t)) continue;
          const double w = weight(r);
          sl[s] += w * in.targets[r];
          if (newton) hl[s] += w * in.hessians[r];
          wl[s] += w;
        }
        for (std::size_t s = 0; s < k; ++s) {
          const double t = thr[s * p + pi];
          if (std::isnan(t)) continue;
          const auto& st = stats[open[s]];
          const double wr = st.w - wl[s];
          if (wl[s] < msl || wr < msl) continue;
          const double dl = newton ? hl[s] + lambda : wl[s];
          const double dr = newton ? (st.h - hl[s]) + lambda : wr;
          const double gain = score(sl[s], dl) + score(st.s - sl[s], dr) - score(st.s, denom(st));
          if (best[s].beaten_by(gain)) best[s] = {gain, static_cast<std::int64_t>(f), t};
        }
      }
    }

    // Create children for the nodes that found a split.
    std::vector<std::uint32_t> next;
    for (std::size_t s = 0; s < k; ++s) {
      if (best[s].feature < 0) continue;
      const auto left = static_cast<std::uint32_t>(nodes.size());
      auto& nd = nodes[open[s]];
      nd.feature = best[s].feature;
      nd.threshold = best[s].threshold;
      nd.gain = best[s].gain;
      nd.left = left;
      nd.right = left + 1;
      nodes.resize(nodes.size() + 2);
      stats.resize(stats.size() + 2);
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto node = node_of[r];
      if (node == kNoNode || nodes[node].is_leaf()) continue;
      const auto& nd = nodes[node];
      const auto child = x(r, static_cast<std::size_t>(nd.feature)) < nd.threshold ? nd.left : nd.right;
      node_of[r] = child;
      const double w = weight(r);
      auto& st = stats[child];
      st.s += w * in.targets[r];
      if (newton) st.h += w * in.hessians[r];
      st.w += w;
      st.tmin = std::min(st.tmin, in.targets[r]);
      st.tmax = std::max(st.tmax, in.targets[r]);
    }
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].weight = stats[i].w;
    nodes[i].value = stats[i].s / denom(stats[i]);
  }
  return DecisionTree(std::move(nodes));
}

}  // namespace autohead::ml
