#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autohead/metrics.hpp"

namespace autohead::report {

/// Fraction rendered as a percentage with one decimal ("100.0"); "-" when absent.
std::string percent(double fraction);
std::string percent(const std::optional<double>& fraction);

struct ExperimentReport {
  std::vector<std::string> problems;
  std::vector<std::string> methods;                    // individual networks, then CNN-Fusion, then Auto-Classifier
  std::vector<std::vector<metrics::EvalReport>> cells;  // [problem][method]
  std::vector<std::vector<char>> present;               // [problem][method]

  double mean_accuracy(std::size_t method) const;
  std::optional<double> mean_auc(std::size_t method) const;  // absent if any problem lacks an AUC
  double mean_tpr(std::size_t method) const;
  double mean_tnr(std::size_t method) const;
  /// (mean TPR + mean TNR) / 2.
  double mean_average_accuracy(std::size_t method) const;
};

/// Problem rows, then the mean row; an Acc and an AUC column per method.
std::string table1_csv(const ExperimentReport& r);
std::string table1_markdown(const ExperimentReport& r);
/// TPR section, TNR section (one row per problem each), then the average accuracy row; a column per method.
std::string table2_csv(const ExperimentReport& r);
std::string table2_markdown(const ExperimentReport& r);

}  // namespace autohead::report
