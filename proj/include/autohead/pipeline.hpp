#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autohead/data.hpp"
#include "autohead/fusion.hpp"
#include "autohead/headsearch.hpp"
#include "autohead/metrics.hpp"
#include "autohead/report.hpp"
#include "autohead/training.hpp"

namespace autohead::pipeline {

// Everything a run needs. Keys accepted by apply_setting (config file sections map
// to the prefix, e.g. "[train] epochs = 30" is "train.epochs"):
//   seed, workers, out
//   data.root, data.contrast, data.noise, data.image_size, data.negatives, data.positives, data.problems
//   split.train, split.val, split.test
//   train.architectures (comma separated), train.epochs, train.batch_size, train.learning_rate, train.momentum
//   search.max_candidates, search.max_seconds ("none" lifts a limit), search.stack_top, search.stack_folds
//   bench.runs, bench.warmup
struct RunConfig {
  std::filesystem::path out = "run";
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::optional<std::filesystem::path> data_root;  // <root>/<problem>/{defect,no_defect}/*.png; synthetic if unset
  double contrast = 0.6;
  double noise = 0.1;
  std::size_t image_size = 32;
  std::size_t negatives = 1000;
  std::size_t positives = 150;
  std::size_t problems = 6;

  data::SplitFractions fractions;
  std::vector<std::string> architectures{"vgg-micro", "vgg-tiny"};
  cnn::TrainConfig train;
  search::SearchBudget budget = search::SearchBudget::desk(0);

  std::size_t bench_runs = 500;
  std::size_t bench_warmup = 10;

  /// Throws ConfigError on an unknown key or a malformed value.
  void apply_setting(const std::string& key, const std::string& value);
  static const std::vector<std::string>& setting_keys();

  /// Throws ConfigError if a field is out of range or an architecture name does not resolve.
  void validate() const;
};

// Holds <out>/.lock for the lifetime of the object; throws Error(kUsage) if the
// directory is already locked by another process.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& out);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct NetworkRow {
  std::string problem;
  std::string architecture;
  double validation_auc = 0.0;
  std::size_t selected_epoch = 0;
  metrics::EvalReport test;
  double train_seconds = 0.0;
};

struct FusionRow {
  std::string problem;
  fusion::FusionResult result;
  fusion::TimingProfile timing;
  double measured_serial_seconds = 0.0;  // per image, all networks then the fusion step
};

struct SearchRow {
  std::string problem;
  std::string network;                 // extractor source
  double best_network_validation_auc = 0.0;
  search::LeaderBoard board;
  double validation_auc = 0.0;         // selected head
  search::AutoEvaluation evaluation;   // on the test split
};

/// Writes the synthetic suite (or indexes data.root), the splits and manifest.json.
nlohmann::json cmd_gen_data(const RunConfig& config);
std::vector<NetworkRow> cmd_train_cnns(const RunConfig& config);
std::vector<FusionRow> cmd_fuse(const RunConfig& config);
std::vector<SearchRow> cmd_search_head(const RunConfig& config);
/// Renders stored evaluation reports under `run_dir` into reports/table{1,2}.{csv,md}.
report::ExperimentReport cmd_report(const std::filesystem::path& run_dir);
/// Per-model inference timings, written to timings/bench.json.
nlohmann::json cmd_bench(const RunConfig& config);

// Run directory layout.
std::filesystem::path manifest_path(const std::filesystem::path& out);
std::filesystem::path model_path(const std::filesystem::path& out, const std::string& problem, const std::string& arch);
std::filesystem::path auto_classifier_path(const std::filesystem::path& out, const std::string& problem);
std::filesystem::path report_path(const std::filesystem::path& out, const std::string& problem, const std::string& method);
std::filesystem::path leaderboard_path(const std::filesystem::path& out, const std::string& problem);

inline constexpr char kFusionMethod[] = "CNN-Fusion";
inline constexpr char kAutoMethod[] = "Auto-Classifier";

}  // namespace autohead::pipeline
