#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "autohead/classifiers.hpp"
#include "autohead/error.hpp"
#include "autohead/random.hpp"

using namespace autohead;
using namespace autohead::ml;

namespace {

struct Dataset {
  Matrix x;
  std::vector<int> y;
};

// Label = sign of the first feature, with a margin.
Dataset separable(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset s{Matrix(n, d), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.y[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j) s.x(i, j) = rng.normal();
    s.x(i, 0) = (s.y[i] ? 1.0 : -1.0) * (0.5 + rng.uniform());
  }
  return s;
}

Dataset xor_data() {
  Dataset s{Matrix(40, 2), std::vector<int>(40)};
  for (std::size_t i = 0; i < 40; ++i) {
    const int a = static_cast<int>(i % 2), b = static_cast<int>((i / 2) % 2);
    s.x(i, 0) = a;
    s.x(i, 1) = b;
    s.y[i] = a ^ b;
  }
  return s;
}

Dataset random_labels(std::size_t n, std::size_t d, Rng& rng) {
  Dataset s{Matrix(n, d), std::vector<int>(n)};
  for (auto& v : s.x.values) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    const double z = s.x(i, 0) - 0.5 * s.x(i, d - 1) + rng.normal();
    s.y[i] = z > 0.0 ? 1 : 0;
  }
  s.y[0] = 0;
  s.y[1] = 1;
  return s;
}

template <class Model>
double accuracy(const Model& m, const Dataset& s) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < s.x.rows; ++i) ok += (m.predict_proba(s.x.view().row(i)) >= 0.5) == (s.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(s.x.rows);
}

double head_accuracy(const HeadModel& h, const Dataset& s) {
  const auto p = predict_proba(h, s.x.view());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (s.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace

// ---------------------------------------------------------------- boosting

TEST(GbmTest, ZeroRoundsPredictsTheBaseRate) {
  auto s = separable(40, 2, 1);
  s.y.assign(40, 0);
  for (std::size_t i = 0; i < 10; ++i) s.y[i] = 1;
  const auto m = fit_gbm(s.x.view(), s.y, {.rounds = 0}, 1);
  EXPECT_TRUE(m.trees.empty());
  EXPECT_NEAR(m.predict_proba(s.x.view().row(3)), 0.25, 1e-12);
}

TEST(GbmTest, XorWithDepthTwoTrees) {
  const auto s = xor_data();
  const auto m = fit_gbm(s.x.view(), s.y, {.rounds = 50, .shrinkage = 0.3, .max_depth = 2}, 1);
  EXPECT_DOUBLE_EQ(accuracy(m, s), 1.0);
}

TEST(GbmTest, SeparableWithStumpsInTwentyRounds) {
  const auto s = separable(100, 3, 2);
  for (auto flavor : {GbmFlavor::kNewton, GbmFlavor::kGradient}) {
    const auto m = fit_gbm(s.x.view(), s.y, {.rounds = 20, .max_depth = 1, .flavor = flavor}, 1);
    EXPECT_DOUBLE_EQ(accuracy(m, s), 1.0);
  }
}

TEST(GbmTest, TrainingLossNeverIncreasesAtDefaults) {
  Rng rng(77);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_labels(static_cast<std::size_t>(rng.between(20, 200)),
                                 static_cast<std::size_t>(rng.between(1, 6)), rng);
    const auto m = fit_gbm(s.x.view(), s.y, GbmParams{}, static_cast<std::uint64_t>(k));
    ASSERT_EQ(m.history.size(), m.trees.size() + 1);
    for (std::size_t r = 1; r < m.history.size(); ++r) {
      EXPECT_LE(m.history[r], m.history[r - 1] + 1e-12) << "dataset " << k << " round " << r;
    }
  }
}

TEST(GbmTest, SingleClassIsRejected) {
  auto s = separable(10, 2, 1);
  s.y.assign(10, 1);
  EXPECT_THROW(fit_gbm(s.x.view(), s.y, {}, 1), ConfigError);
}

TEST(GbmTest, ColumnSamplingIsSeeded) {
  const auto s = separable(60, 5, 3);
  const GbmParams p{.rounds = 10, .colsample = 0.4};
  const auto a = fit_gbm(s.x.view(), s.y, p, 5), b = fit_gbm(s.x.view(), s.y, p, 5);
  EXPECT_EQ(a.trees, b.trees);
}

// ---------------------------------------------------------------- forests

TEST(ForestTest, OneTreeWithoutSamplingIsAFullTree) {
  const auto s = xor_data();
  const auto f = fit_forest(s.x.view(), s.y,
                            {.trees = 1, .features_per_split = 0, .bootstrap = false}, 3);
  std::vector<double> t(s.y.begin(), s.y.end());
  Rng rng(0);
  const auto tree = fit_regression_tree(TreeFitInput{s.x.view(), t, {}, {}, {}, nullptr}, {.max_depth = 20}, rng);
  ASSERT_EQ(f.trees.size(), 1u);
  EXPECT_EQ(f.trees[0], tree);
  EXPECT_DOUBLE_EQ(accuracy(f, s), 1.0);
}

TEST(ForestTest, SeparableAndBounded) {
  const auto s = separable(120, 4, 4);
  for (auto mode : {ForestMode::kRandomForest, ForestMode::kExtraTrees}) {
    const auto f = fit_forest(s.x.view(), s.y, {.trees = 25, .mode = mode}, 8);
    EXPECT_DOUBLE_EQ(accuracy(f, s), 1.0);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> q(4);
      for (auto& v : q) v = 5.0 * rng.normal();
      const double p = f.predict_proba(q);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
}

TEST(ForestTest, DefaultFeaturesPerSplitIsFloorSqrt) {
  const auto s = separable(30, 10, 5);
  EXPECT_EQ(fit_forest(s.x.view(), s.y, {.trees = 2}, 1).features_per_split, 3u);
}

// ---------------------------------------------------------------- linear

TEST(GlmTest, StrongPenaltyShrinksTowardsZero) {
  Rng rng(11);
  Dataset s{Matrix(200, 3), std::vector<int>(200)};
  for (auto& v : s.x.values) v = rng.normal();
  for (std::size_t i = 0; i < 200; ++i) s.y[i] = static_cast<int>(i % 2);
  const auto weak = fit_glm(s.x.view(), s.y, 1e-4), strong = fit_glm(s.x.view(), s.y, 100.0);
  double nw = 0.0, ns = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    nw += weak.weights[j] * weak.weights[j];
    ns += strong.weights[j] * strong.weights[j];
  }
  EXPECT_LT(ns, nw);
  EXPECT_LT(std::sqrt(ns), 1e-2);
  EXPECT_NEAR(strong.predict_proba(s.x.view().row(0)), 0.5, 1e-2);
}

TEST(GlmTest, SeparableWithLightPenalty) {
  const auto s = separable(100, 3, 6);
  const auto m = fit_glm(s.x.view(), s.y, 1e-4);
  EXPECT_DOUBLE_EQ(accuracy(m, s), 1.0);
}

TEST(GlmTest, ObjectiveDecreasesMonotonically) {
  Rng rng(12);
  for (int k = 0; k < 10; ++k) {
    const auto s = random_labels(100, 4, rng);
    const auto m = fit_glm(s.x.view(), s.y, 1e-2);
    EXPECT_TRUE(m.converged);
    ASSERT_GE(m.objective_history.size(), 2u);
    EXPECT_NEAR(m.objective_history.front(), std::log(2.0), 1e-12);
    for (std::size_t i = 1; i < m.objective_history.size(); ++i) {
      EXPECT_LE(m.objective_history[i], m.objective_history[i - 1]);
    }
  }
}

TEST(GlmTest, GridPicksOneOfTheCandidates) {
  const auto s = separable(90, 3, 7);
  const GlmParams p{.l2_grid = {1e-3, 1e-1, 10.0}};
  const auto m = fit_glm_grid(s.x.view(), s.y, p, 1);
  EXPECT_TRUE(m.l2 == 1e-3 || m.l2 == 1e-1 || m.l2 == 10.0);
  EXPECT_EQ(fit_glm_grid(s.x.view(), s.y, p, 1).weights, m.weights);
}

// ---------------------------------------------------------------- dense

TEST(MlpTest, LogisticHeadLearnsSeparableData) {
  const auto s = separable(100, 3, 8);
  MlpParams p;
  p.hidden = {};
  p.train.epochs = 30;
  const auto a = fit_mlp_head(s.x.view(), s.y, p, 4);
  EXPECT_DOUBLE_EQ(accuracy(a, s), 1.0);
  const auto b = fit_mlp_head(s.x.view(), s.y, p, 4);
  for (std::size_t i = 0; i < s.x.rows; ++i) {
    EXPECT_EQ(a.predict_proba(s.x.view().row(i)), b.predict_proba(s.x.view().row(i)));
  }
}

TEST(MlpTest, HiddenLayerLearnsXor) {
  const auto s = xor_data();
  MlpParams p;
  p.hidden = {16};
  p.train.epochs = 200;
  p.train.batch_size = 8;
  p.train.learning_rate = 0.05;
  EXPECT_DOUBLE_EQ(accuracy(fit_mlp_head(s.x.view(), s.y, p, 2), s), 1.0);
}

// ---------------------------------------------------------------- stacking

TEST(StackingTest, FoldsAreStratified) {
  std::vector<int> y(53, 0);
  for (std::size_t i = 0; i < 13; ++i) y[i * 4] = 1;
  const auto folds = stratified_folds(y, 5, 3);
  std::vector<int> pos(5, 0), all(5, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    ASSERT_LT(folds[i], 5u);
    ++all[folds[i]];
    pos[folds[i]] += y[i];
  }
  EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1);
  EXPECT_LE(*std::max_element(all.begin(), all.end()) - *std::min_element(all.begin(), all.end()), 2);
  EXPECT_EQ(stratified_folds(y, 5, 3), folds);
}

TEST(StackingTest, IdenticalPerfectBases) {
  const auto s = separable(100, 2, 9);
  const std::vector<HeadConfig> bases(3, HeadConfig{GlmParams{.l2 = 1e-4}, {}});
  const auto e = fit_stacked_ensemble(bases, s.x.view(), s.y, 5, 1);
  EXPECT_EQ(e.out_of_fold.rows, 100u);
  EXPECT_EQ(e.out_of_fold.cols, 3u);
  for (double v : e.out_of_fold.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(accuracy(e, s), 1.0);
}

TEST(StackingTest, ComplementaryBasesBeatEitherAlone) {
  // Half the rows carry the label in feature 0, the other half in feature 1.
  const std::size_t n = 200;
  Dataset s{Matrix(n, 2), std::vector<int>(n)};
  Rng rng(10);
  for (std::size_t i = 0; i < n; ++i) {
    s.y[i] = static_cast<int>(i % 2);
    const double v = (s.y[i] ? 1.0 : -1.0) * (1.0 + rng.uniform());
    s.x(i, (i / 2) % 2) = v;
  }
  const std::vector<HeadConfig> bases{{GlmParams{.l2 = 1e-4}, {0}}, {GlmParams{.l2 = 1e-4}, {1}}};
  double best_single = 0.0;
  for (const auto& b : bases) best_single = std::max(best_single, head_accuracy(fit_head(b, s.x.view(), s.y, 1), s));
  const auto stacked = fit_head({StackParams{bases, 5, 1e-3}, {}}, s.x.view(), s.y, 1);
  EXPECT_LT(best_single, 0.9);
  EXPECT_GT(head_accuracy(stacked, s), best_single);
  EXPECT_DOUBLE_EQ(head_accuracy(stacked, s), 1.0);
}

// ---------------------------------------------------------------- contract

TEST(HeadTest, DimensionMismatchThrows) {
  const auto s = separable(40, 3, 1);
  const auto h = fit_head({GlmParams{}, {}}, s.x.view(), s.y, 1);
  const std::vector<double> wrong(2, 0.0);
  EXPECT_THROW(predict_proba(h, wrong), ShapeError);
}

TEST(HeadTest, EveryFamilyRoundTripsThroughTheFile) {
  const auto s = separable(60, 3, 12);
  MlpParams mlp;
  mlp.hidden = {4};
  mlp.train.epochs = 3;
  const std::vector<HeadConfig> configs{
      {GbmParams{.rounds = 5}, {}},
      {ForestParams{.trees = 4, .mode = ForestMode::kExtraTrees}, {0, 2}},
      {GlmParams{.l2_grid = {1e-2, 1.0}}, {}},
      {mlp, {}},
      {StackParams{{{GlmParams{}, {}}, {GbmParams{.rounds = 3}, {1}}}, 3, 1e-3}, {}},
  };
  for (const auto& c : configs) {
    const auto h = fit_head(c, s.x.view(), s.y, 7);
    std::stringstream buf;
    const nlohmann::json extra{{"note", "x"}};
    save_head(buf, h, &extra);
    nlohmann::json back_extra;
    const auto back = load_head(buf, &back_extra);
    EXPECT_EQ(family_name(back), family_name(h));
    EXPECT_EQ(back_extra, extra);
    EXPECT_EQ(predict_proba(back, s.x.view()), predict_proba(h, s.x.view())) << family_name(h);

    HeadConfig parsed;
    from_json(nlohmann::json::parse(canonical_text(c)), parsed);
    EXPECT_EQ(parsed, c);
    EXPECT_EQ(canonical_text(parsed), canonical_text(c));
  }
}

TEST(HeadTest, CorruptFileIsADataError) {
  std::stringstream buf("NOPE-not-a-head");
  EXPECT_THROW(load_head(buf), DataError);
}

TEST(HeadTest, CanonicalTextDistinguishesHyperparameters) {
  std::set<std::string> seen;
  for (double lr : {0.1, 0.3}) seen.insert(canonical_text({GbmParams{.shrinkage = lr}, {}}));
  seen.insert(canonical_text({GbmParams{}, {1}}));
  EXPECT_EQ(seen.size(), 3u);
}
