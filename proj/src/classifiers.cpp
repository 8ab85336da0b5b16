#include "autohead/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "autohead/container.hpp"
#include "autohead/error.hpp"
#include "autohead/metrics.hpp"

namespace autohead::ml {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_xy(MatrixView x, std::span<const int> y, const char* who) {
  if (x.rows != y.size()) {
    throw ShapeError(std::string(who) + ": " + std::to_string(x.rows) + " rows but " + std::to_string(y.size()) +
                     " labels");
  }
  if (x.rows == 0 || x.cols == 0) throw ConfigError(std::string(who) + ": empty training data");
  for (int v : y) {
    if (v != 0 && v != 1) throw ConfigError(std::string(who) + ": labels must be 0 or 1");
  }
}

void require_both_classes(std::span<const int> y, const char* who) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw ConfigError(std::string(who) + ": single-class labels");
  }
}

/// softplus(f) - y f, the logistic loss at logit f.
double logit_loss(double f, int y) { return std::log1p(std::exp(-std::abs(f))) + std::max(f, 0.0) - y * f; }

struct Standardizer {
  std::vector<double> means;
  std::vector<double> scales;

  static Standardizer fit(MatrixView x) {
    Standardizer s;
    s.means.assign(x.cols, 0.0);
    s.scales.assign(x.cols, 1.0);
    const double n = static_cast<double>(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) m += x(i, j);
      m /= n;
      double v = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / n);
      s.means[j] = m;
      s.scales[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  Matrix apply(MatrixView x) const {
    Matrix z(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t j = 0; j < x.cols; ++j) z(i, j) = (x(i, j) - means[j]) / scales[j];
    }
    return z;
  }
};

double standardized(std::span<const double> means, std::span<const double> scales, std::size_t j, double v) {
  return means.empty() ? v : (v - means[j]) / scales[j];
}

Matrix take_rows(MatrixView x, std::span<const std::size_t> rows) {
  Matrix m(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * x.cols));
  }
  return m;
}

Matrix take_columns(MatrixView x, std::span<const std::size_t> cols) {
  Matrix m(x.rows, cols.size());
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) m(i, j) = x(i, cols[j]);
  }
  return m;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_loss(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) throw ShapeError("log_loss needs equal, non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = y[i] == 1 ? p[i] : 1.0 - p[i];
    s -= std::log(std::max(q, 1e-12));
  }
  return s / static_cast<double>(p.size());
}

// ---------------------------------------------------------------- boosting

double GbmModel::raw_score(std::span<const double> x) const {
  double f = init;
  for (const auto& t : trees) f += shrinkage * t.predict(x);
  return f;
}

GbmModel fit_gbm(MatrixView x, std::span<const int> y, const GbmParams& params, std::uint64_t seed) {
  check_xy(x, y, "gbm");
  require_both_classes(y, "gbm");
  if (!(params.shrinkage > 0.0)) throw ConfigError("gbm shrinkage must be > 0");
  if (!(params.colsample > 0.0 && params.colsample <= 1.0)) throw ConfigError("gbm colsample must be in (0, 1]");
  if (params.max_depth < 0) throw ConfigError("gbm depth must be >= 0");

  const std::size_t n = x.rows, d = x.cols;
  const double base = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(n);
  GbmModel m;
  m.init = std::log(base / (1.0 - base));
  m.shrinkage = params.shrinkage;
  m.flavor = params.flavor;

  const bool newton = params.flavor == GbmFlavor::kNewton;
  const ColumnOrder order = sort_columns(x);
  const TreeParams tp{params.max_depth, params.min_samples_leaf, SplitMode::kExact, 0, params.lambda};
  std::vector<double> f(n, m.init), r(n), h(n);
  auto loss = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += logit_loss(f[i], y[i]);
    return s / static_cast<double>(n);
  };
  m.history.push_back(loss());

  const std::size_t cols =
      params.colsample >= 1.0 ? d : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.colsample * d - 1e-9)));
  std::vector<std::size_t> pool;
  for (std::size_t round = 0; round < params.rounds; ++round) {
    Rng rng(derive_seed(seed, {round}));
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(f[i]);
      r[i] = y[i] - p;
      h[i] = p * (1.0 - p);
    }
    pool.clear();
    if (cols < d) {
      std::vector<std::size_t> idx(d);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < cols; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(d - i))]);
      pool.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cols));
      std::sort(pool.begin(), pool.end());
    }
    TreeFitInput in;
    in.x = x;
    in.targets = r;
    if (newton) in.hessians = h;
    in.feature_pool = pool;
    in.presorted = &order;
    m.trees.push_back(fit_regression_tree(in, tp, rng));
    const auto& tree = m.trees.back();
    for (std::size_t i = 0; i < n; ++i) f[i] += m.shrinkage * tree.predict(x.row(i));
    m.history.push_back(loss());
  }
  return m;
}

// ---------------------------------------------------------------- forests

double ForestModel::predict_proba(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return trees.empty() ? 0.5 : s / static_cast<double>(trees.size());
}

ForestModel fit_forest(MatrixView x, std::span<const int> y, const ForestParams& params, std::uint64_t seed) {
  check_xy(x, y, "forest");
  if (x.rows < 2) throw ConfigError("forest needs at least 2 rows");
  if (params.trees < 1) throw ConfigError("forest needs at least one tree");
  const std::size_t n = x.rows, d = x.cols;
  ForestModel m;
  m.mode = params.mode;
  if (params.features_per_split) {
    m.features_per_split = *params.features_per_split == 0 ? d : std::min(*params.features_per_split, d);
  } else {
    m.features_per_split = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
  }
  const TreeParams tp{params.max_depth, params.min_samples_leaf,
                      params.mode == ForestMode::kExtraTrees ? SplitMode::kRandom : SplitMode::kExact,
                      m.features_per_split == d ? 0 : m.features_per_split, 1.0};
  std::vector<double> targets(y.begin(), y.end());
  const ColumnOrder order = sort_columns(x);
  std::vector<double> weights;
  for (std::size_t t = 0; t < params.trees; ++t) {
    Rng rng(derive_seed(seed, {t}));
    weights.clear();
    if (params.bootstrap) {
      weights.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) weights[static_cast<std::size_t>(rng.below(n))] += 1.0;
    }
    TreeFitInput in;
    in.x = x;
    in.targets = targets;
    in.weights = weights;
    in.presorted = &order;
    m.trees.push_back(fit_regression_tree(in, tp, rng));
    m.bootstrapped.push_back(params.bootstrap ? 1 : 0);
  }
  return m;
}

// ---------------------------------------------------------------- linear

double GlmModel::predict_proba(std::span<const double> x) const {
  if (x.size() != weights.size()) throw ShapeError("glm expects " + std::to_string(weights.size()) + " features");
  double f = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) f += weights[j] * standardized(means, scales, j, x[j]);
  return sigmoid(f);
}

GlmModel fit_glm(MatrixView x, std::span<const int> y, double l2, std::size_t max_iters, double tol) {
  check_xy(x, y, "glm");
  require_both_classes(y, "glm");
  if (!(l2 >= 0.0)) throw ConfigError("glm l2 must be >= 0");
  const auto st = Standardizer::fit(x);
  const Matrix z = st.apply(x);
  const std::size_t n = x.rows, d = x.cols;
  const double inv_n = 1.0 / static_cast<double>(n);

  GlmModel m;
  m.means = st.means;
  m.scales = st.scales;
  m.l2 = l2;
  m.weights.assign(d, 0.0);

  std::vector<double> f(n);
  auto objective = [&](const std::vector<double>& w, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double v = b;
      for (std::size_t j = 0; j < d; ++j) v += w[j] * z(i, j);
      f[i] = v;
      s += logit_loss(v, y[i]);
    }
    double reg = 0.0;
    for (double wj : w) reg += wj * wj;
    return s * inv_n + 0.5 * l2 * reg;
  };

  double obj = objective(m.weights, m.bias);
  m.objective_history.push_back(obj);
  std::vector<double> gw(d), w_try(d);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    // f holds the logits of the current iterate.
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = sigmoid(f[i]) - y[i];
      gb += e;
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * z(i, j);
    }
    double g2 = 0.0;
    gb *= inv_n;
    g2 += gb * gb;
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] = gw[j] * inv_n + l2 * m.weights[j];
      g2 += gw[j] * gw[j];
    }
    if (g2 == 0.0) {
      m.converged = true;
      break;
    }
    step = std::min(step * 2.0, 1e6);
    double next = obj;
    double b_try = m.bias;
    bool accepted = false;
    while (step > 1e-20) {
      for (std::size_t j = 0; j < d; ++j) w_try[j] = m.weights[j] - step * gw[j];
      b_try = m.bias - step * gb;
      next = objective(w_try, b_try);
      if (next <= obj - 0.5 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      objective(m.weights, m.bias);
      m.converged = true;
      break;
    }
    m.weights = w_try;
    m.bias = b_try;
    const double improvement = obj - next;
    obj = next;
    m.objective_history.push_back(obj);
    m.iterations = it + 1;
    if (improvement < tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

GlmModel fit_glm_grid(MatrixView x, std::span<const int> y, const GlmParams& params, std::uint64_t seed) {
  const std::vector<double> grid = params.l2_grid.empty() ? std::vector<double>{params.l2} : params.l2_grid;
  if (grid.size() == 1) return fit_glm(x, y, grid[0], params.max_iters, params.tol);
  check_xy(x, y, "glm");
  require_both_classes(y, "glm");

  const auto folds = stratified_folds(y, 3, seed);
  double best_auc = -1.0;
  double best_l2 = grid[0];
  for (double l2 : grid) {
    std::vector<double> oof(x.rows, 0.5);
    bool ok = true;
    for (std::size_t f = 0; f < 3 && ok; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < x.rows; ++i) (folds[i] == f ? te : tr).push_back(i);
      const Matrix xt = take_rows(x, tr);
      std::vector<int> yt;
      for (auto i : tr) yt.push_back(y[i]);
      try {
        const auto m = fit_glm(xt.view(), yt, l2, params.max_iters, params.tol);
        for (auto i : te) oof[i] = m.predict_proba(x.row(i));
      } catch (const ConfigError&) {
        ok = false;
      }
    }
    if (!ok) continue;
    const double auc = metrics::roc_auc(oof, y);
    if (auc > best_auc) {
      best_auc = auc;
      best_l2 = l2;
    }
  }
  return fit_glm(x, y, best_l2, params.max_iters, params.tol);
}

// ---------------------------------------------------------------- dense network

double MlpHead::predict_proba(std::span<const double> x) const {
  if (x.size() != means.size()) throw ShapeError("mlp head expects " + std::to_string(means.size()) + " features");
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - means[j]) / scales[j];
  return network.predict(Tensor::vector(std::move(z)))[1];
}

MlpHead fit_mlp_head(MatrixView x, std::span<const int> y, const MlpParams& params, std::uint64_t seed) {
  check_xy(x, y, "mlp");
  require_both_classes(y, "mlp");
  const auto st = Standardizer::fit(x);
  const Matrix z = st.apply(x);
  cnn::SampleSet set;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = z.view().row(i);
    set.inputs.push_back(Tensor::vector({row.begin(), row.end()}));
    set.labels.push_back(static_cast<std::size_t>(y[i]));
  }
  const auto spec = cnn::mlp_spec(x.cols, params.hidden, 2);
  auto config = params.train;
  config.seed = derive_seed(seed, {2});
  auto trained = cnn::train(cnn::build_network(spec, derive_seed(seed, {1})), set, set, config);
  MlpHead h;
  h.network = std::move(trained.network);
  h.means = st.means;
  h.scales = st.scales;
  h.selected_epoch = trained.selected_epoch;
  return h;
}

// ---------------------------------------------------------------- unified head contract

bool operator==(const StackParams& a, const StackParams& b) {
  return a.bases == b.bases && a.k_folds == b.k_folds && a.meta_l2 == b.meta_l2;
}

bool operator==(const HeadConfig& a, const HeadConfig& b) {
  return a.params == b.params && a.feature_subset == b.feature_subset;
}

double StackedEnsemble::predict_proba(std::span<const double> x) const {
  std::vector<double> z;
  z.reserve(bases.size());
  for (const auto& b : bases) z.push_back(ml::predict_proba(b, x));
  return meta.predict_proba(z);
}

std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be >= 1");
  std::vector<std::size_t> fold(y.size(), 0);
  Rng rng(seed);
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = i % k;
  }
  return fold;
}

StackedEnsemble fit_stacked_ensemble(std::span<const HeadConfig> bases, MatrixView x, std::span<const int> y,
                                     std::size_t k_folds, std::uint64_t seed, double meta_l2) {
  check_xy(x, y, "stacking");
  if (bases.size() < 2) throw ConfigError("stacking needs at least 2 base models");
  if (k_folds < 2) throw ConfigError("stacking needs k >= 2 folds");
  if (x.rows < k_folds) throw ConfigError("stacking needs at least k rows");
  const std::size_t n = x.rows, b_count = bases.size();

  std::vector<std::size_t> folds;
  for (std::uint64_t attempt = 0;; ++attempt) {
    folds = stratified_folds(y, k_folds, derive_seed(seed, {attempt}));
    std::size_t bad = k_folds;
    for (std::size_t f = 0; f < k_folds && bad == k_folds; ++f) {
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (folds[i] == f) continue;
        (y[i] == 1 ? pos : neg) = true;
      }
      if (!pos || !neg) bad = f;
    }
    if (bad == k_folds) break;
    if (attempt >= 1) {
      throw SearchError("stacking: training part of fold " + std::to_string(bad) +
                        " holds a single class after re-folding");
    }
  }

  StackedEnsemble ens;
  ens.k_folds = k_folds;
  ens.out_of_fold = Matrix(n, b_count);
  for (std::size_t f = 0; f < k_folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (folds[i] == f ? te : tr).push_back(i);
    const Matrix xt = take_rows(x, tr);
    std::vector<int> yt;
    for (auto i : tr) yt.push_back(y[i]);
    for (std::size_t b = 0; b < b_count; ++b) {
      const auto model = fit_head(bases[b], xt.view(), yt, derive_seed(seed, {100 + f, b}));
      for (auto i : te) ens.out_of_fold(i, b) = predict_proba(model, x.row(i));
    }
  }
  ens.meta = fit_glm(ens.out_of_fold.view(), y, meta_l2);
  for (std::size_t b = 0; b < b_count; ++b) ens.bases.push_back(fit_head(bases[b], x, y, derive_seed(seed, {200, b})));
  return ens;
}

HeadModel fit_head(const HeadConfig& config, MatrixView x, std::span<const int> y, std::uint64_t seed) {
  HeadModel h;
  h.input_dim = x.cols;
  h.feature_subset = config.feature_subset;
  Matrix sub;
  MatrixView v = x;
  if (!config.feature_subset.empty()) {
    for (auto j : config.feature_subset) {
      if (j >= x.cols) throw ConfigError("feature subset index " + std::to_string(j) + " out of range");
    }
    sub = take_columns(x, config.feature_subset);
    v = sub.view();
  }
  std::visit(overloaded{
                 [&](const GbmParams& p) { h.model = fit_gbm(v, y, p, seed); },
                 [&](const ForestParams& p) { h.model = fit_forest(v, y, p, seed); },
                 [&](const GlmParams& p) { h.model = fit_glm_grid(v, y, p, seed); },
                 [&](const MlpParams& p) { h.model = fit_mlp_head(v, y, p, seed); },
                 [&](const StackParams& p) { h.model = fit_stacked_ensemble(p.bases, v, y, p.k_folds, seed, p.meta_l2); },
             },
             config.params);
  return h;
}

double predict_proba(const HeadModel& head, std::span<const double> x) {
  if (x.size() != head.input_dim) {
    throw ShapeError("head expects " + std::to_string(head.input_dim) + " features, got " + std::to_string(x.size()));
  }
  std::vector<double> sub;
  std::span<const double> v = x;
  if (!head.feature_subset.empty()) {
    for (auto j : head.feature_subset) sub.push_back(x[j]);
    v = sub;
  }
  return std::visit([&](const auto& m) { return m.predict_proba(v); }, head.model);
}

std::vector<double> predict_proba(const HeadModel& head, MatrixView x) {
  std::vector<double> out;
  out.reserve(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out.push_back(predict_proba(head, x.row(i)));
  return out;
}

std::string family_name(const HeadModel& head) {
  static constexpr const char* kNames[] = {"gbm", "forest", "glm", "mlp", "stacked"};
  return kNames[head.model.index()];
}

// ---------------------------------------------------------------- configuration text

void to_json(nlohmann::json& j, const HeadConfig& c) {
  std::visit(overloaded{
                 [&](const GbmParams& p) {
                   j = {{"family", "gbm"},
                        {"rounds", p.rounds},
                        {"shrinkage", p.shrinkage},
                        {"max_depth", p.max_depth},
                        {"min_samples_leaf", p.min_samples_leaf},
                        {"colsample", p.colsample},
                        {"lambda", p.lambda},
                        {"flavor", p.flavor == GbmFlavor::kNewton ? "newton" : "gradient"}};
                 },
                 [&](const ForestParams& p) {
                   j = {{"family", "forest"},
                        {"trees", p.trees},
                        {"max_depth", p.max_depth},
                        {"min_samples_leaf", p.min_samples_leaf},
                        {"bootstrap", p.bootstrap},
                        {"mode", p.mode == ForestMode::kRandomForest ? "random_forest" : "extra_trees"}};
                   j["features_per_split"] = p.features_per_split ? nlohmann::json(*p.features_per_split) : nlohmann::json();
                 },
                 [&](const GlmParams& p) {
                   j = {{"family", "glm"}, {"l2", p.l2}, {"max_iters", p.max_iters}, {"tol", p.tol}, {"l2_grid", p.l2_grid}};
                 },
                 [&](const MlpParams& p) {
                   j = {{"family", "mlp"},
                        {"hidden", p.hidden},
                        {"batch_size", p.train.batch_size},
                        {"learning_rate", p.train.learning_rate},
                        {"momentum", p.train.momentum},
                        {"epochs", p.train.epochs}};
                 },
                 [&](const StackParams& p) {
                   nlohmann::json bases = nlohmann::json::array();
                   for (const auto& b : p.bases) bases.push_back(b);
                   j = {{"family", "stacked"}, {"bases", bases}, {"k_folds", p.k_folds}, {"meta_l2", p.meta_l2}};
                 },
             },
             c.params);
  if (!c.feature_subset.empty()) j["feature_subset"] = c.feature_subset;
}

void from_json(const nlohmann::json& j, HeadConfig& c) {
  const auto family = j.at("family").get<std::string>();
  if (family == "gbm") {
    GbmParams p;
    p.rounds = j.at("rounds").get<std::size_t>();
    p.shrinkage = j.at("shrinkage").get<double>();
    p.max_depth = j.at("max_depth").get<int>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.colsample = j.at("colsample").get<double>();
    p.lambda = j.at("lambda").get<double>();
    const auto flavor = j.at("flavor").get<std::string>();
    if (flavor != "newton" && flavor != "gradient") throw DataError("unknown gbm flavor '" + flavor + "'");
    p.flavor = flavor == "newton" ? GbmFlavor::kNewton : GbmFlavor::kGradient;
    c.params = p;
  } else if (family == "forest") {
    ForestParams p;
    p.trees = j.at("trees").get<std::size_t>();
    p.max_depth = j.at("max_depth").get<int>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.bootstrap = j.at("bootstrap").get<bool>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "random_forest" && mode != "extra_trees") throw DataError("unknown forest mode '" + mode + "'");
    p.mode = mode == "random_forest" ? ForestMode::kRandomForest : ForestMode::kExtraTrees;
    if (!j.at("features_per_split").is_null()) p.features_per_split = j.at("features_per_split").get<std::size_t>();
    c.params = p;
  } else if (family == "glm") {
    GlmParams p;
    p.l2 = j.at("l2").get<double>();
    p.max_iters = j.at("max_iters").get<std::size_t>();
    p.tol = j.at("tol").get<double>();
    p.l2_grid = j.at("l2_grid").get<std::vector<double>>();
    c.params = p;
  } else if (family == "mlp") {
    MlpParams p;
    p.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    p.train.batch_size = j.at("batch_size").get<std::size_t>();
    p.train.learning_rate = j.at("learning_rate").get<double>();
    p.train.momentum = j.at("momentum").get<double>();
    p.train.epochs = j.at("epochs").get<std::size_t>();
    c.params = p;
  } else if (family == "stacked") {
    StackParams p;
    for (const auto& b : j.at("bases")) p.bases.push_back(b.get<HeadConfig>());
    p.k_folds = j.at("k_folds").get<std::size_t>();
    p.meta_l2 = j.at("meta_l2").get<double>();
    c.params = p;
  } else {
    throw DataError("unknown head family '" + family + "'");
  }
  c.feature_subset = j.contains("feature_subset") ? j.at("feature_subset").get<std::vector<std::size_t>>()
                                                  : std::vector<std::size_t>{};
}

std::string canonical_text(const HeadConfig& c) { return nlohmann::json(c).dump(); }

// ---------------------------------------------------------------- serialization

namespace {

void put_vector(std::vector<double>& payload, std::span<const double> v) {
  payload.push_back(static_cast<double>(v.size()));
  payload.insert(payload.end(), v.begin(), v.end());
}

std::vector<double> get_vector(io::PayloadReader& r) {
  const auto n = static_cast<std::size_t>(r.next());
  return r.take(n);
}

void append_trees(std::vector<double>& payload, const std::vector<DecisionTree>& trees) {
  payload.push_back(static_cast<double>(trees.size()));
  for (const auto& t : trees) t.append_to(payload);
}

std::vector<DecisionTree> read_trees(io::PayloadReader& r) {
  const auto n = static_cast<std::size_t>(r.next());
  std::vector<DecisionTree> trees;
  for (std::size_t i = 0; i < n; ++i) {
    // Tree nodes are 7 values each, preceded by the node count.
    const auto count = static_cast<std::size_t>(r.next());
    std::vector<double> buf{static_cast<double>(count)};
    const auto body = r.take(count * 7);
    buf.insert(buf.end(), body.begin(), body.end());
    std::size_t pos = 0;
    trees.push_back(DecisionTree::read_from(buf, pos));
  }
  return trees;
}

void encode_glm(const GlmModel& m, nlohmann::json& meta, std::vector<double>& payload) {
  meta = {{"iterations", m.iterations}, {"converged", m.converged}};
  payload.push_back(m.bias);
  payload.push_back(m.l2);
  put_vector(payload, m.weights);
  put_vector(payload, m.means);
  put_vector(payload, m.scales);
  put_vector(payload, m.objective_history);
}

GlmModel decode_glm(const nlohmann::json& meta, io::PayloadReader& r) {
  GlmModel m;
  m.iterations = meta.at("iterations").get<std::size_t>();
  m.converged = meta.at("converged").get<bool>();
  m.bias = r.next();
  m.l2 = r.next();
  m.weights = get_vector(r);
  m.means = get_vector(r);
  m.scales = get_vector(r);
  m.objective_history = get_vector(r);
  if (!m.means.empty() && (m.means.size() != m.weights.size() || m.scales.size() != m.weights.size())) {
    throw DataError("glm standardization does not match its weights");
  }
  return m;
}

void encode(const HeadModel& h, nlohmann::json& meta, std::vector<double>& payload) {
  meta = {{"family", family_name(h)}, {"input_dim", h.input_dim}, {"feature_subset", h.feature_subset}};
  std::visit(overloaded{
                 [&](const GbmModel& m) {
                   meta["flavor"] = m.flavor == GbmFlavor::kNewton ? "newton" : "gradient";
                   payload.push_back(m.init);
                   payload.push_back(m.shrinkage);
                   put_vector(payload, m.history);
                   append_trees(payload, m.trees);
                 },
                 [&](const ForestModel& m) {
                   meta["mode"] = m.mode == ForestMode::kRandomForest ? "random_forest" : "extra_trees";
                   meta["features_per_split"] = m.features_per_split;
                   meta["bootstrapped"] = std::vector<int>(m.bootstrapped.begin(), m.bootstrapped.end());
                   append_trees(payload, m.trees);
                 },
                 [&](const GlmModel& m) { encode_glm(m, meta["glm"], payload); },
                 [&](const MlpHead& m) {
                   meta["spec"] = m.network.spec();
                   meta["selected_epoch"] = m.selected_epoch;
                   put_vector(payload, m.means);
                   put_vector(payload, m.scales);
                   for (const auto& p : m.network.stack().params()) payload.insert(payload.end(), p.data().begin(), p.data().end());
                 },
                 [&](const StackedEnsemble& m) {
                   meta["k_folds"] = m.k_folds;
                   meta["bases"] = nlohmann::json::array();
                   for (const auto& b : m.bases) {
                     nlohmann::json bm;
                     encode(b, bm, payload);
                     meta["bases"].push_back(bm);
                   }
                   encode_glm(m.meta, meta["meta"], payload);
                 },
             },
             h.model);
}

HeadModel decode(const nlohmann::json& meta, io::PayloadReader& r) {
  HeadModel h;
  h.input_dim = meta.at("input_dim").get<std::size_t>();
  h.feature_subset = meta.at("feature_subset").get<std::vector<std::size_t>>();
  const auto family = meta.at("family").get<std::string>();
  if (family == "gbm") {
    GbmModel m;
    m.flavor = meta.at("flavor").get<std::string>() == "newton" ? GbmFlavor::kNewton : GbmFlavor::kGradient;
    m.init = r.next();
    m.shrinkage = r.next();
    m.history = get_vector(r);
    m.trees = read_trees(r);
    h.model = std::move(m);
  } else if (family == "forest") {
    ForestModel m;
    m.mode = meta.at("mode").get<std::string>() == "random_forest" ? ForestMode::kRandomForest : ForestMode::kExtraTrees;
    m.features_per_split = meta.at("features_per_split").get<std::size_t>();
    for (int b : meta.at("bootstrapped").get<std::vector<int>>()) m.bootstrapped.push_back(static_cast<char>(b));
    m.trees = read_trees(r);
    h.model = std::move(m);
  } else if (family == "glm") {
    h.model = decode_glm(meta.at("glm"), r);
  } else if (family == "mlp") {
    MlpHead m;
    const auto spec = meta.at("spec").get<cnn::NetworkSpec>();
    m.selected_epoch = meta.at("selected_epoch").get<std::size_t>();
    m.means = get_vector(r);
    m.scales = get_vector(r);
    auto params = cnn::LayerStack::initialize(spec.input_shape, spec.layers, 0).params();
    for (auto& p : params) {
      const auto v = r.take(p.size());
      std::copy(v.begin(), v.end(), p.data().begin());
    }
    m.network = cnn::Network(spec, cnn::LayerStack(spec.input_shape, spec.layers, std::move(params)));
    h.model = std::move(m);
  } else if (family == "stacked") {
    StackedEnsemble m;
    m.k_folds = meta.at("k_folds").get<std::size_t>();
    for (const auto& b : meta.at("bases")) m.bases.push_back(decode(b, r));
    m.meta = decode_glm(meta.at("meta"), r);
    h.model = std::move(m);
  } else {
    throw DataError("unknown head family '" + family + "'");
  }
  return h;
}

}  // namespace

void save_head(std::ostream& out, const HeadModel& head, const nlohmann::json* extra) {
  nlohmann::json meta;
  std::vector<double> payload;
  encode(head, meta, payload);
  const nlohmann::json text = {{"model", meta}, {"extra", extra ? *extra : nlohmann::json()}};
  io::write_container(out, {kHeadMagic, kHeadFormatVersion, text.dump(), std::move(payload)});
}

HeadModel load_head(std::istream& in, nlohmann::json* extra) {
  const auto c = io::read_container(in, kHeadMagic, kHeadFormatVersion);
  io::PayloadReader r(c.payload);
  HeadModel h;
  try {
    const auto text = nlohmann::json::parse(c.text);
    h = decode(text.at("model"), r);
    if (extra) *extra = text.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed head model: ") + e.what());
  }
  if (!r.done()) throw DataError("trailing values in head model payload");
  return h;
}

}  // namespace autohead::ml
