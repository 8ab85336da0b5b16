#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace autohead::metrics {

/// Mann-Whitney statistic as exact integers: AUC = twice_wins / (2 * pairs).
struct PairCounts {
  std::uint64_t twice_wins = 0;  // 2 per won pair, 1 per tie
  std::uint64_t pairs = 0;       // positives * negatives
};

/// O(n log n) pair counting by sorting. Labels must be 0 or 1.
PairCounts mann_whitney_counts(std::span<const double> scores, std::span<const int> labels);

/// Probability that a random positive outscores a random negative, ties counting half.
/// Throws ConfigError "AUC undefined" when only one class is present, or on NaN scores.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// label = 1 iff score >= threshold.
std::vector<int> threshold_predictions(std::span<const double> scores, double threshold = 0.5);

struct EvalReport {
  double accuracy = 0.0;
  std::optional<double> auc;  // absent when the report was built from hard labels only
  double tpr = 0.0;
  double tnr = 0.0;
  double average_accuracy = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t n_samples = 0;
  // A rate whose class is absent from the truth is reported as 1.0 and flagged here.
  bool tpr_undefined = false;
  bool tnr_undefined = false;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Confusion counts and rates from hard labels; `positive_class` marks defects.
EvalReport classification_report(std::span<const int> predicted, std::span<const int> truth, int positive_class = 1);

/// Thresholded report plus AUC of the raw scores (AUC left empty if truth is single-class).
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> truth, double threshold = 0.5);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

}  // namespace autohead::metrics
