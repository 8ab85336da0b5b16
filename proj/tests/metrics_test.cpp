#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "autohead/error.hpp"
#include "autohead/metrics.hpp"
#include "autohead/random.hpp"

using namespace autohead;
using namespace autohead::metrics;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(RocAuc, HandExamples) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, std::vector<int>{1, 1, 0, 0}), 0.75);
}

TEST(RocAuc, MatchesPairCountingWithTies) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8)) / 8.0;  // coarse grid forces ties
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(roc_auc(s, y), pair_count_auc(s, y), 1e-12);
  }
}

TEST(RocAuc, SingleClassOrNanThrows) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ConfigError);
  EXPECT_THROW(roc_auc(std::vector<double>{NAN, 0.2}, std::vector<int>{1, 0}), ConfigError);
}

TEST(ClassificationReport, HandConfusion) {
  const auto r = classification_report(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
  EXPECT_EQ(r.tpr, 0.5);
  EXPECT_EQ(r.tnr, 0.5);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
}

TEST(ClassificationReport, AllCorrect) {
  const std::vector<int> y{1, 0, 0, 1, 0};
  const auto r = classification_report(y, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.tpr, 1.0);
  EXPECT_EQ(r.tnr, 1.0);
  EXPECT_EQ(r.average_accuracy, 1.0);
}

TEST(Thresholds, BoundaryAndMonotone) {
  EXPECT_EQ(threshold_predictions(std::vector<double>{0.5})[0], 1);
  EXPECT_EQ(threshold_predictions(std::vector<double>{0.49})[0], 0);
  Rng rng(2);
  std::vector<double> s(100);
  for (auto& v : s) v = rng.uniform();
  int previous = 101;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto p = threshold_predictions(s, t);
    int positives = 0;
    for (int v : p) positives += v;
    EXPECT_LE(positives, previous);
    previous = positives;
  }
}

TEST(EvalReport, JsonRoundTrip) {
  const auto r = evaluate_scores(std::vector<double>{0.9, 0.2, 0.6, 0.4}, std::vector<int>{1, 0, 0, 1});
  ASSERT_TRUE(r.auc.has_value());
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<EvalReport>(), r);
  for (const char* key : {"accuracy", "auc", "tpr", "tnr", "average_accuracy"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(EvalReport, SingleClassTruthLeavesAucEmpty) {
  const auto r = evaluate_scores(std::vector<double>{0.9, 0.2}, std::vector<int>{0, 0});
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_TRUE(r.tpr_undefined);
}
