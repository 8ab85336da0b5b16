#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autohead/metrics.hpp"
#include "autohead/network.hpp"
#include "autohead/training.hpp"

namespace autohead::fusion {

/// Validation AUC per network.
struct ValidationScores {
  std::vector<double> v;
  std::vector<std::string> network_ids;

  /// Throws ConfigError unless n >= 1, ids align and every value is in [0, 1].
  void validate() const;
};

struct FusionWeights {
  std::vector<double> w;
  ValidationScores source;
};

/// c x n probabilities, P(i, j) = probability network j assigns to class i.
struct PredictionMatrix {
  std::size_t classes = 0;
  std::size_t networks = 0;
  std::vector<double> p;  // row-major c x n
  std::vector<std::string> class_labels;
  std::vector<std::string> network_ids;

  PredictionMatrix() = default;
  PredictionMatrix(std::size_t c, std::size_t n) : classes(c), networks(n), p(c * n, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return p[i * networks + j]; }
  double at(std::size_t i, std::size_t j) const { return p[i * networks + j]; }

  /// Throws ConfigError unless entries are in [0, 1] and every column sums to 1 within 1e-9.
  void validate() const;
};

struct FusedPrediction {
  std::size_t winner = 0;
  std::vector<double> scores;  // length c
};

/// w_i = V_i / sum_j V_j. Throws ConfigError "degenerate weights" if the sum is zero.
FusionWeights normalize_auc_weights(const ValidationScores& scores);

/// fused_i = sum_j P(i, j) * w_j (j ascending); winner = argmax, lowest index on ties.
FusedPrediction fuse_predictions(const PredictionMatrix& p, const FusionWeights& w);

struct FusionResult {
  FusionWeights weights;
  std::vector<int> predicted;            // 1 where the winner is the positive class
  std::vector<double> positive_scores;   // fused probability of the positive class
  metrics::EvalReport report;            // from `predicted`, AUC from `positive_scores`
};

/// Fuses every sample of `samples`; networks are ordered as given and share input shape and classes.
FusionResult fuse_dataset(std::span<const cnn::Network* const> networks, const ValidationScores& scores,
                          const cnn::SampleSet& samples, std::size_t positive_class = 1);

/// Weights taken from each trained network's validation AUC.
FusionResult fuse_dataset(std::span<const cnn::TrainedNetwork> networks, const cnn::SampleSet& samples,
                          std::size_t positive_class = 1);

ValidationScores validation_scores(std::span<const cnn::TrainedNetwork> networks);

struct TimingProfile {
  std::vector<double> t;  // per-network inference seconds
  double t_fusion = 0.0;
  double f_time_parallel = 0.0;  // max(t) + t_fusion
  double f_time_serial = 0.0;    // sum(t) + t_fusion
};

/// Throws ConfigError on negative or non-finite times or an empty t.
TimingProfile timing_profile(std::span<const double> t, double t_fusion);

void to_json(nlohmann::json& j, const FusionWeights& w);
void to_json(nlohmann::json& j, const TimingProfile& t);
void from_json(const nlohmann::json& j, TimingProfile& t);

}  // namespace autohead::fusion
