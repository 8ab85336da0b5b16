#include "autohead/headsearch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>

#include <nlohmann/json.hpp>

#include "autohead/error.hpp"
#include "autohead/parallel.hpp"

namespace autohead::search {

namespace {

constexpr const char* kFamilyTags[] = {"xgbm_preset", "glm_grid",   "random_forest_default", "gbm_preset",
                                       "mlp_default", "extra_trees", "xgbm_random",          "gbm_random",
                                       "mlp_random",  "stacked"};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ml::GbmParams boosted(int depth, std::size_t rounds, double shrinkage, ml::GbmFlavor flavor, std::size_t min_leaf = 1,
                      double colsample = 1.0) {
  ml::GbmParams p;
  p.max_depth = depth;
  p.rounds = rounds;
  p.shrinkage = shrinkage;
  p.flavor = flavor;
  p.min_samples_leaf = min_leaf;
  p.colsample = colsample;
  return p;
}

CandidateSpec preset(std::size_t index) {
  using ml::GbmFlavor;
  CandidateSpec s;
  s.index = index;
  s.provenance = "preset:" + std::to_string(index);
  switch (index) {
    case 0:
      s.family = Family::kXgbmPreset;
      s.config.params = boosted(6, 100, 0.3, GbmFlavor::kNewton, 1, 0.8);
      break;
    case 1:
      s.family = Family::kXgbmPreset;
      s.config.params = boosted(8, 100, 0.1, GbmFlavor::kNewton, 5);
      break;
    case 2:
      s.family = Family::kXgbmPreset;
      s.config.params = boosted(3, 200, 0.1, GbmFlavor::kNewton);
      break;
    case 3: {
      s.family = Family::kGlmGrid;
      ml::GlmParams g;
      g.l2_grid = {1e-4, 1e-2, 1.0};
      s.config.params = g;
      break;
    }
    case 4:
      s.family = Family::kRandomForestDefault;
      s.config.params = ml::ForestParams{};
      break;
    case 5:
    case 6:
    case 7:
      s.family = Family::kGbmPreset;
      s.config.params = boosted(static_cast<int>(index) + 1, 50, 0.1, GbmFlavor::kGradient, 10);
      break;
    case 8:
      s.family = Family::kGbmPreset;
      s.config.params = boosted(4, 100, 0.1, GbmFlavor::kGradient, 10);
      break;
    case 9:
      s.family = Family::kGbmPreset;
      s.config.params = boosted(5, 100, 0.05, GbmFlavor::kGradient, 10);
      break;
    case 10:
      s.family = Family::kMlpDefault;
      s.config.params = ml::MlpParams{};
      break;
    case 11: {
      s.family = Family::kExtraTrees;
      ml::ForestParams f;
      f.bootstrap = false;
      f.mode = ml::ForestMode::kExtraTrees;
      s.config.params = f;
      break;
    }
    default:
      throw ConfigError("no preset candidate at index " + std::to_string(index));
  }
  return s;
}

CandidateSpec draw(std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, {index}));
  CandidateSpec s;
  s.index = index;
  s.provenance = "draw:" + std::to_string(index);
  const auto& r = kRanges;
  auto depth = [&] { return static_cast<int>(rng.between(r.depth_min, r.depth_max)); };
  auto rounds = [&] {
    return static_cast<std::size_t>(rng.between(static_cast<long long>(r.rounds_min), static_cast<long long>(r.rounds_max)));
  };
  auto shrinkage = [&] { return rng.uniform(r.shrinkage_min, r.shrinkage_max); };
  switch ((index - kFixedCandidates) % 3) {
    case 0: {
      s.family = Family::kXgbmRandom;
      const int d = depth();
      const auto n = rounds();
      const double eta = shrinkage();
      const auto leaf = static_cast<std::size_t>(rng.between(1, 5));
      const double col = rng.uniform(0.5, 1.0);
      s.config.params = boosted(d, n, eta, ml::GbmFlavor::kNewton, leaf, col);
      break;
    }
    case 1: {
      s.family = Family::kGbmRandom;
      const int d = depth();
      const auto n = rounds();
      const double eta = shrinkage();
      const auto leaf = static_cast<std::size_t>(rng.between(1, 20));
      s.config.params = boosted(d, n, eta, ml::GbmFlavor::kGradient, leaf);
      break;
    }
    default: {
      s.family = Family::kMlpRandom;
      ml::MlpParams m;
      m.hidden.clear();
      const auto layers = rng.between(1, 2);
      for (long long l = 0; l < layers; ++l) {
        m.hidden.push_back(static_cast<std::size_t>(
            rng.between(static_cast<long long>(r.width_min), static_cast<long long>(r.width_max))));
      }
      s.config.params = m;
      break;
    }
  }
  return s;
}

bool has_both_classes(const std::vector<int>& y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(y.size());
}

ml::MatrixView view_of(const cnn::FeatureTable& t) { return {t.values.data(), t.rows(), t.dim}; }

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* family_tag(Family f) { return kFamilyTags[static_cast<std::size_t>(f)]; }

Family parse_family(const std::string& tag) {
  for (std::size_t i = 0; i < std::size(kFamilyTags); ++i) {
    if (tag == kFamilyTags[i]) return static_cast<Family>(i);
  }
  throw DataError("unknown candidate family '" + tag + "'");
}

std::string CandidateSpec::id() const {
  if (family == Family::kStacked) return "stacked";
  char buf[24];
  std::snprintf(buf, sizeof buf, "c%03zu", index);
  return buf;
}

std::size_t CandidateSpecHash::operator()(const CandidateSpec& s) const {
  return std::hash<std::string>{}(std::string(family_tag(s.family)) + "|" + ml::canonical_text(s.config));
}

void to_json(nlohmann::json& j, const CandidateSpec& s) {
  j = {{"id", s.id()},
       {"index", s.index},
       {"family", family_tag(s.family)},
       {"provenance", s.provenance},
       {"config", s.config}};
}

void from_json(const nlohmann::json& j, CandidateSpec& s) {
  s.index = j.at("index").get<std::size_t>();
  s.family = parse_family(j.at("family").get<std::string>());
  s.provenance = j.at("provenance").get<std::string>();
  s.config = j.at("config").get<ml::HeadConfig>();
}

bool within_ranges(const CandidateSpec& spec) {
  const auto& r = kRanges;
  return std::visit(
      [&](const auto& p) -> bool {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ml::GbmParams>) {
          return p.max_depth >= r.depth_min && p.max_depth <= r.depth_max && p.rounds >= r.rounds_min &&
                 p.rounds <= r.rounds_max && p.shrinkage >= r.shrinkage_min && p.shrinkage <= r.shrinkage_max;
        } else if constexpr (std::is_same_v<T, ml::ForestParams>) {
          return p.trees >= r.trees_min && p.trees <= r.trees_max;
        } else if constexpr (std::is_same_v<T, ml::MlpParams>) {
          if (p.hidden.empty() || p.hidden.size() > 2) return false;
          return std::all_of(p.hidden.begin(), p.hidden.end(),
                             [&](std::size_t w) { return w >= r.width_min && w <= r.width_max; });
        } else {
          return true;
        }
      },
      spec.config.params);
}

CandidateSpec CandidateStream::at(std::size_t index) const {
  return index < kFixedCandidates ? preset(index) : draw(seed_, index);
}

CandidateStream candidate_space(std::uint64_t seed) { return CandidateStream(seed); }

void SearchBudget::validate() const {
  if (!max_wall_clock_seconds && !max_candidates) throw ConfigError("search budget sets no limit");
  if (max_wall_clock_seconds && !(*max_wall_clock_seconds > 0.0)) {
    throw ConfigError("search wall-clock limit must be > 0");
  }
  if (max_candidates && *max_candidates == 0) throw ConfigError("search candidate limit must be >= 1");
  if (stack_folds < 2) throw ConfigError("stacking needs at least 2 folds");
}

void LeaderBoard::sort() {
  std::stable_sort(entries.begin(), entries.end(), [](const LeaderEntry& a, const LeaderEntry& b) {
    if (a.validation_auc != b.validation_auc) return a.validation_auc > b.validation_auc;
    return a.completion < b.completion;
  });
}

void LeaderBoard::write_csv(std::ostream& out) const {
  out << "rank,spec_id,family,provenance,val_auc,hyperparameters\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out << i + 1 << ',' << e.spec.id() << ',' << family_tag(e.spec.family) << ',' << e.spec.provenance << ','
        << exact(e.validation_auc) << ',' << csv_quote(ml::canonical_text(e.spec.config)) << '\n';
  }
}

void LeaderBoard::write_timing_csv(std::ostream& out) const {
  out << "spec_id,fit_seconds\n";
  for (const auto& e : entries) out << e.spec.id() << ',' << exact(e.fit_seconds) << '\n';
}

LeaderBoard run_search(const cnn::FeatureTable& train, const cnn::FeatureTable& val, const SearchBudget& budget) {
  budget.validate();
  train.validate();
  val.validate();
  if (train.dim != val.dim) {
    throw ShapeError("train features have dimension " + std::to_string(train.dim) + ", validation " +
                     std::to_string(val.dim));
  }
  if (train.dim == 0) throw ShapeError("feature dimension is zero");
  if (!has_both_classes(train.labels)) throw SearchError("training features contain a single class");
  if (!has_both_classes(val.labels)) throw SearchError("validation features contain a single class");

  const auto xt = view_of(train);
  const auto xv = view_of(val);
  const CandidateStream stream(budget.seed);
  const auto start = Clock::now();

  std::mutex mu;
  std::size_t next = 0;
  std::map<std::size_t, LeaderEntry> done;
  std::map<std::size_t, std::string> failed;

  run_workers(std::max<std::size_t>(1, budget.workers), [&](std::size_t) {
    for (;;) {
      std::size_t index;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (budget.max_candidates && next >= *budget.max_candidates) return;
        if (budget.max_wall_clock_seconds && seconds_since(start) >= *budget.max_wall_clock_seconds) return;
        index = next++;
      }
      const CandidateSpec spec = stream.at(index);
      const auto t0 = Clock::now();
      try {
        auto model = std::make_shared<const ml::HeadModel>(
            ml::fit_head(spec.config, xt, train.labels, derive_seed(budget.seed, {index})));
        const auto scores = ml::predict_proba(*model, xv);
        const double auc = metrics::roc_auc(scores, val.labels);
        std::lock_guard<std::mutex> lock(mu);
        done[index] = LeaderEntry{spec, std::move(model), auc, seconds_since(t0), index};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failed[index] = spec.id() + " " + family_tag(spec.family) + ": " + e.what();
      }
    }
  });

  LeaderBoard board;
  board.base_candidates = next;
  for (auto& [i, e] : done) board.entries.push_back(std::move(e));
  for (auto& [i, msg] : failed) board.failures.push_back(msg);
  if (board.entries.empty()) {
    std::string all;
    for (const auto& f : board.failures) all += (all.empty() ? "" : "; ") + f;
    throw SearchError("all " + std::to_string(board.base_candidates) + " candidates failed: " + all);
  }
  board.sort();

  const std::size_t top = std::min(budget.stack_top, board.entries.size());
  if (top >= 2) {
    ml::StackParams sp;
    sp.k_folds = budget.stack_folds;
    for (std::size_t i = 0; i < top; ++i) sp.bases.push_back(board.entries[i].spec.config);
    CandidateSpec spec;
    spec.family = Family::kStacked;
    spec.config.params = sp;
    spec.index = board.base_candidates;
    spec.provenance = "top:" + std::to_string(top);
    const auto t0 = Clock::now();
    try {
      auto model = std::make_shared<const ml::HeadModel>(
          ml::fit_head(spec.config, xt, train.labels, derive_seed(budget.seed, {0x57acc})));
      const double auc = metrics::roc_auc(ml::predict_proba(*model, xv), val.labels);
      board.entries.push_back(LeaderEntry{spec, std::move(model), auc, seconds_since(t0), board.base_candidates});
    } catch (const std::exception& e) {
      board.failures.push_back(std::string("stacked: ") + e.what());
    }
    board.sort();
  }
  return board;
}

const LeaderEntry& select_best(const LeaderBoard& board) {
  if (board.entries.empty()) throw SearchError("leaderboard is empty");
  return board.entries.front();
}

double AutoClassifierModel::predict_proba(const Tensor& image) const {
  return ml::predict_proba(head, extractor.extract(image));
}

AutoClassifierModel assemble_auto_classifier(cnn::FeatureExtractor extractor, ml::HeadModel head, CandidateSpec spec,
                                             double validation_auc, std::vector<LeaderRow> leaderboard) {
  if (head.input_dim != extractor.dim) {
    throw ShapeError("head expects " + std::to_string(head.input_dim) + " features but the extractor produces " +
                     std::to_string(extractor.dim));
  }
  AutoClassifierModel m;
  m.extractor = std::move(extractor);
  m.head = std::move(head);
  m.spec = std::move(spec);
  m.validation_auc = validation_auc;
  m.leaderboard = std::move(leaderboard);
  return m;
}

std::vector<LeaderRow> leaderboard_rows(const LeaderBoard& board) {
  std::vector<LeaderRow> rows;
  for (const auto& e : board.entries) {
    rows.push_back({e.spec.id(), family_tag(e.spec.family), ml::canonical_text(e.spec.config), e.validation_auc});
  }
  return rows;
}

namespace {

void mean_stddev(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  sd = std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AutoEvaluation evaluate_auto_classifier(AutoClassifierModel& model, const cnn::SampleSet& test,
                                        std::size_t positive_class) {
  if (test.size() == 0) throw DataError("test split is empty");
  AutoEvaluation ev;
  std::vector<int> truth;
  std::vector<double> te, th;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto t0 = Clock::now();
    const auto features = model.extractor.extract(test.inputs[i]);
    const auto t1 = Clock::now();
    const double p = ml::predict_proba(model.head, features);
    const auto t2 = Clock::now();
    te.push_back(std::chrono::duration<double>(t1 - t0).count());
    th.push_back(std::chrono::duration<double>(t2 - t1).count());
    ev.scores.push_back(p);
    truth.push_back(test.labels[i] == positive_class ? 1 : 0);
  }
  ev.report = metrics::evaluate_scores(ev.scores, truth, 0.5);
  mean_stddev(te, ev.timing.extractor_seconds_mean, ev.timing.extractor_seconds_stddev);
  mean_stddev(th, ev.timing.head_seconds_mean, ev.timing.head_seconds_stddev);
  ev.timing.samples = test.size();
  model.timing = ev.timing;
  return ev;
}

void save_auto_classifier(const std::filesystem::path& path, const AutoClassifierModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : model.leaderboard) {
    rows.push_back({{"spec_id", r.spec_id},
                    {"family", r.family},
                    {"hyperparameters", r.hyperparameters},
                    {"validation_auc", r.validation_auc}});
  }
  const nlohmann::json extra = {{"candidate", model.spec}, {"validation_auc", model.validation_auc}, {"leaderboard", rows}};
  cnn::save_extractor(out, model.extractor);
  ml::save_head(out, model.head, &extra);
  if (!out) throw DataError("failed writing " + path.string());
}

AutoClassifierModel load_auto_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  auto extractor = cnn::load_extractor(in);
  nlohmann::json extra;
  auto head = ml::load_head(in, &extra);
  try {
    std::vector<LeaderRow> rows;
    for (const auto& r : extra.at("leaderboard")) {
      rows.push_back({r.at("spec_id").get<std::string>(), r.at("family").get<std::string>(),
                      r.at("hyperparameters").get<std::string>(), r.at("validation_auc").get<double>()});
    }
    return assemble_auto_classifier(std::move(extractor), std::move(head), extra.at("candidate").get<CandidateSpec>(),
                                    extra.at("validation_auc").get<double>(), std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed auto-classifier " + path.string() + ": " + e.what());
  }
}

void to_json(nlohmann::json& j, const InferenceTiming& t) {
  j = {{"extractor_seconds_mean", t.extractor_seconds_mean},
       {"extractor_seconds_stddev", t.extractor_seconds_stddev},
       {"head_seconds_mean", t.head_seconds_mean},
       {"head_seconds_stddev", t.head_seconds_stddev},
       {"samples", t.samples}};
}

void from_json(const nlohmann::json& j, InferenceTiming& t) {
  t.extractor_seconds_mean = j.at("extractor_seconds_mean").get<double>();
  t.extractor_seconds_stddev = j.at("extractor_seconds_stddev").get<double>();
  t.head_seconds_mean = j.at("head_seconds_mean").get<double>();
  t.head_seconds_stddev = j.at("head_seconds_stddev").get<double>();
  t.samples = j.at("samples").get<std::size_t>();
}

}  // namespace autohead::search
