#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autohead/classifiers.hpp"
#include "autohead/features.hpp"
#include "autohead/metrics.hpp"

namespace autohead::search {

enum class Family {
  kXgbmPreset,
  kGlmGrid,
  kRandomForestDefault,
  kGbmPreset,
  kMlpDefault,
  kExtraTrees,
  kXgbmRandom,
  kGbmRandom,
  kMlpRandom,
  kStacked,
};

const char* family_tag(Family f);
Family parse_family(const std::string& tag);

struct CandidateSpec {
  Family family = Family::kXgbmPreset;
  ml::HeadConfig config;
  std::size_t index = 0;   // position in the candidate stream
  std::string provenance;  // "preset:<k>" or "draw:<index>"

  std::string id() const;  // "c007"; "stacked" for the ensemble
  friend bool operator==(const CandidateSpec& a, const CandidateSpec& b) {
    return a.family == b.family && a.config == b.config && a.index == b.index && a.provenance == b.provenance;
  }
};

struct CandidateSpecHash {
  std::size_t operator()(const CandidateSpec& s) const;
};

void to_json(nlohmann::json& j, const CandidateSpec& s);
void from_json(const nlohmann::json& j, CandidateSpec& s);

/// Documented ranges for the random part of the stream.
struct CandidateRanges {
  int depth_min = 2, depth_max = 8;
  std::size_t rounds_min = 20, rounds_max = 300;
  double shrinkage_min = 0.05, shrinkage_max = 0.5;
  std::size_t trees_min = 20, trees_max = 200;
  std::size_t width_min = 16, width_max = 256;
};
inline constexpr CandidateRanges kRanges{};

/// True if every tree count, depth, round count, shrinkage and hidden width lies within kRanges.
bool within_ranges(const CandidateSpec& spec);

inline constexpr std::size_t kFixedCandidates = 12;

// Deterministic candidate stream. Entries 0..11 are fixed: 3 boosted-tree presets
// (Newton leaves), the GLM grid l2 in {1e-4, 1e-2, 1}, a default random forest,
// 5 boosted-tree presets (gradient leaves), a default MLP (one hidden layer of 64)
// and a default extremely randomized forest. From index 12 on, draws cycle through
// xgbm_random, gbm_random and mlp_random, each seeded by (seed, index).
class CandidateStream {
 public:
  explicit CandidateStream(std::uint64_t seed) : seed_(seed) {}
  CandidateSpec at(std::size_t index) const;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

CandidateStream candidate_space(std::uint64_t seed);

struct SearchBudget {
  std::optional<double> max_wall_clock_seconds;
  std::optional<std::size_t> max_candidates;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t stack_top = 5;
  std::size_t stack_folds = 5;

  /// Throws ConfigError unless at least one limit is set and limits are positive.
  void validate() const;

  static SearchBudget desk(std::uint64_t seed) { return {120.0, 60, seed}; }
  static SearchBudget paper(std::uint64_t seed) { return {7200.0, std::nullopt, seed}; }
};

struct LeaderEntry {
  CandidateSpec spec;
  std::shared_ptr<const ml::HeadModel> model;
  double validation_auc = 0.0;
  double fit_seconds = 0.0;
  std::size_t completion = 0;  // commit order: stream index for base candidates, then the stacked entry
};

struct LeaderBoard {
  std::vector<LeaderEntry> entries;  // descending validation AUC, ties by earlier completion
  std::size_t base_candidates = 0;
  std::vector<std::string> failures;  // one line per candidate that failed to fit

  void sort();
  /// rank,spec_id,family,provenance,val_auc,hyperparameters (wall-clock free, deterministic).
  void write_csv(std::ostream& out) const;
  /// spec_id,fit_seconds.
  void write_timing_csv(std::ostream& out) const;
};

// Fits candidates from the stream until a budget limit trips (a candidate in flight
// when the clock runs out is completed), scores each by validation AUC, then fits
// one stacked ensemble over the top min(stack_top, entries) when at least 2 exist.
LeaderBoard run_search(const cnn::FeatureTable& train, const cnn::FeatureTable& val, const SearchBudget& budget);

/// Entry 0. Throws SearchError on an empty board.
const LeaderEntry& select_best(const LeaderBoard& board);

struct LeaderRow {
  std::string spec_id;
  std::string family;
  std::string hyperparameters;
  double validation_auc = 0.0;
  friend bool operator==(const LeaderRow&, const LeaderRow&) = default;
};

struct InferenceTiming {
  double extractor_seconds_mean = 0.0;
  double extractor_seconds_stddev = 0.0;
  double head_seconds_mean = 0.0;
  double head_seconds_stddev = 0.0;
  std::size_t samples = 0;
};

/// Truncated feature extractor followed by the selected head.
struct AutoClassifierModel {
  cnn::FeatureExtractor extractor;
  ml::HeadModel head;
  CandidateSpec spec;
  double validation_auc = 0.0;
  std::vector<LeaderRow> leaderboard;
  InferenceTiming timing;  // filled by evaluate_auto_classifier; not serialized

  double predict_proba(const Tensor& image) const;
  int predict(const Tensor& image) const { return predict_proba(image) >= 0.5 ? 1 : 0; }
};

/// Throws ShapeError unless the head's input dimension equals the extractor's output dimension.
AutoClassifierModel assemble_auto_classifier(cnn::FeatureExtractor extractor, ml::HeadModel head, CandidateSpec spec,
                                             double validation_auc = 0.0, std::vector<LeaderRow> leaderboard = {});

std::vector<LeaderRow> leaderboard_rows(const LeaderBoard& board);

struct AutoEvaluation {
  metrics::EvalReport report;
  std::vector<double> scores;
  InferenceTiming timing;
};

/// Thresholded report (0.5) plus AUC of the probabilities, with per-image timing of both stages.
AutoEvaluation evaluate_auto_classifier(AutoClassifierModel& model, const cnn::SampleSet& test,
                                        std::size_t positive_class = 1);

void save_auto_classifier(const std::filesystem::path& path, const AutoClassifierModel& model);
AutoClassifierModel load_auto_classifier(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const InferenceTiming& t);
void from_json(const nlohmann::json& j, InferenceTiming& t);

}  // namespace autohead::search
