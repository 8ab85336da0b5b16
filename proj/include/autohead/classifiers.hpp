#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autohead/network.hpp"
#include "autohead/training.hpp"
#include "autohead/tree.hpp"

namespace autohead::ml {

double sigmoid(double z);

/// Mean binary log loss of probabilities; probabilities are floored at 1e-12.
double log_loss(std::span<const double> p, std::span<const int> y);

// ---------------------------------------------------------------- boosting

enum class GbmFlavor {
  kNewton,    // leaves sum(r) / (sum(h) + lambda), XGBoost-style
  kGradient,  // leaves mean(r), classic gradient boosting
};

struct GbmParams {
  std::size_t rounds = 50;
  double shrinkage = 0.3;
  int max_depth = 3;
  std::size_t min_samples_leaf = 1;
  double colsample = 1.0;  // fraction of features drawn per tree
  double lambda = 1.0;
  GbmFlavor flavor = GbmFlavor::kNewton;
  friend bool operator==(const GbmParams&, const GbmParams&) = default;
};

struct GbmModel {
  double init = 0.0;  // log-odds of the training base rate
  double shrinkage = 0.3;
  GbmFlavor flavor = GbmFlavor::kNewton;
  std::vector<DecisionTree> trees;
  std::vector<double> history;  // training log loss before round 1, then after each round

  double raw_score(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const { return sigmoid(raw_score(x)); }
};

/// Throws ConfigError if only one class is present.
GbmModel fit_gbm(MatrixView x, std::span<const int> y, const GbmParams& params, std::uint64_t seed);

// ---------------------------------------------------------------- forests

enum class ForestMode { kRandomForest, kExtraTrees };

struct ForestParams {
  std::size_t trees = 50;
  int max_depth = 20;
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> features_per_split;  // unset: floor(sqrt(d)); 0: all
  bool bootstrap = true;
  ForestMode mode = ForestMode::kRandomForest;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct ForestModel {
  ForestMode mode = ForestMode::kRandomForest;
  std::size_t features_per_split = 0;
  std::vector<char> bootstrapped;  // per tree
  std::vector<DecisionTree> trees;

  double predict_proba(std::span<const double> x) const;
};

/// Trees regress the 0/1 label; the forest averages leaf values. Needs N >= 2.
ForestModel fit_forest(MatrixView x, std::span<const int> y, const ForestParams& params, std::uint64_t seed);

// ---------------------------------------------------------------- linear

struct GlmParams {
  double l2 = 1e-2;
  std::size_t max_iters = 500;
  double tol = 1e-8;
  std::vector<double> l2_grid;  // more than one value: pick by stratified 3-fold CV AUC
  friend bool operator==(const GlmParams&, const GlmParams&) = default;
};

// L2-regularized logistic regression on standardized features:
//   J(w, b) = mean log loss + l2/2 * |w|^2   (bias unpenalized)
struct GlmModel {
  std::vector<double> weights;  // standardized space
  double bias = 0.0;
  std::vector<double> means;   // empty: identity standardization
  std::vector<double> scales;
  double l2 = 0.0;
  std::vector<double> objective_history;  // J at every accepted iterate, starting at w = 0
  std::size_t iterations = 0;
  bool converged = false;  // false: stopped at max_iters (warning)

  double predict_proba(std::span<const double> x) const;
};

/// Gradient descent with Armijo backtracking; stops when J improves by less than tol.
GlmModel fit_glm(MatrixView x, std::span<const int> y, double l2, std::size_t max_iters = 500, double tol = 1e-8);

/// Fits every grid value (or params.l2 alone) and returns the CV-selected model refit on all rows.
GlmModel fit_glm_grid(MatrixView x, std::span<const int> y, const GlmParams& params, std::uint64_t seed);

// ---------------------------------------------------------------- dense network

struct MlpParams {
  std::vector<std::size_t> hidden{64};
  cnn::TrainConfig train{10, 1e-2, 0.9, 20, 0};
  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.hidden == b.hidden && a.train.batch_size == b.train.batch_size &&
           a.train.learning_rate == b.train.learning_rate && a.train.momentum == b.train.momentum &&
           a.train.epochs == b.train.epochs;
  }
};


/// Dense network over standardized features; checkpoint chosen by training-set AUC.
struct MlpHead {
  cnn::Network network;
  std::vector<double> means;
  std::vector<double> scales;
  std::size_t selected_epoch = 0;

  double predict_proba(std::span<const double> x) const;
};

MlpHead fit_mlp_head(MatrixView x, std::span<const int> y, const MlpParams& params, std::uint64_t seed);

// ---------------------------------------------------------------- unified head contract

struct HeadConfig;

struct StackParams {
  std::vector<HeadConfig> bases;
  std::size_t k_folds = 5;
  double meta_l2 = 1e-3;
};

/// One classifier family with its hyperparameters, optionally restricted to a feature subset.
struct HeadConfig {
  std::variant<GbmParams, ForestParams, GlmParams, MlpParams, StackParams> params;
  std::vector<std::size_t> feature_subset;  // empty: all features
};

bool operator==(const StackParams& a, const StackParams& b);
bool operator==(const HeadConfig& a, const HeadConfig& b);

struct HeadModel;

struct StackedEnsemble {
  std::vector<HeadModel> bases;  // refit on all training rows
  GlmModel meta;                 // over base probabilities
  std::size_t k_folds = 5;
  Matrix out_of_fold;  // N x B meta inputs seen during fitting (not serialized)

  double predict_proba(std::span<const double> x) const;
};

struct HeadModel {
  std::variant<GbmModel, ForestModel, GlmModel, MlpHead, StackedEnsemble> model;
  std::size_t input_dim = 0;
  std::vector<std::size_t> feature_subset;
};

/// Fold id (0..k-1) per row: each class is shuffled and dealt round-robin.
std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed);

// Out-of-fold N x B base probabilities from k stratified folds feed a meta GLM; the
// bases are then refit on all rows. A fold whose complement holds a single class
// triggers one reshuffle, then SearchError.
StackedEnsemble fit_stacked_ensemble(std::span<const HeadConfig> bases, MatrixView x, std::span<const int> y,
                                     std::size_t k_folds, std::uint64_t seed, double meta_l2 = 1e-3);

HeadModel fit_head(const HeadConfig& config, MatrixView x, std::span<const int> y, std::uint64_t seed);

/// Positive-class probability in [0, 1]. Throws ShapeError on a dimension mismatch.
double predict_proba(const HeadModel& head, std::span<const double> x);
std::vector<double> predict_proba(const HeadModel& head, MatrixView x);

/// "gbm", "forest", "glm", "mlp" or "stacked".
std::string family_name(const HeadModel& head);

void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);
/// Sorted-key JSON, used for deduplication and the leaderboard CSV.
std::string canonical_text(const HeadConfig& c);

inline constexpr char kHeadMagic[] = "AHED";
inline constexpr std::uint32_t kHeadFormatVersion = 1;

/// `extra` is stored alongside the model description and returned by load_head.
void save_head(std::ostream& out, const HeadModel& head, const nlohmann::json* extra = nullptr);
HeadModel load_head(std::istream& in, nlohmann::json* extra = nullptr);

}  // namespace autohead::ml
