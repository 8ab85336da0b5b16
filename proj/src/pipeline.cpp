#include "autohead/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "autohead/container.hpp"
#include "autohead/error.hpp"
#include "autohead/features.hpp"
#include "autohead/network.hpp"
#include "autohead/parallel.hpp"
#include "autohead/random.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace autohead::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("setting '" + key + "' expects a number, got '" + value + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  if (!value.empty() && value.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(value);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + value + "'");
}

bool is_none(const std::string& value) { return value == "none" || value == "None" || value.empty(); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary file so a crash never leaves a half-written artifact.
void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <class E>
[[noreturn]] void rethrow_in(const std::string& stage, const Error& e, std::string_view prefix) {
  std::string message = e.what();
  if (message.starts_with(prefix)) message.erase(0, prefix.size());
  throw E(stage + ": " + message);
}

// Re-throws with the stage inserted after the category prefix, keeping the exception type.
template <class F>
auto staged(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ShapeError& e) {
    rethrow_in<ShapeError>(stage, e, "shape error: ");
  } catch (const ConfigError& e) {
    rethrow_in<ConfigError>(stage, e, "config error: ");
  } catch (const DataError& e) {
    rethrow_in<DataError>(stage, e, "data error: ");
  } catch (const TrainingError& e) {
    rethrow_in<TrainingError>(stage, e, "training error: ");
  } catch (const SearchError& e) {
    rethrow_in<SearchError>(stage, e, "search error: ");
  } catch (const Error& e) {
    throw Error(e.kind(), stage + ": " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError(stage + ": " + e.what());
  }
}

std::uint64_t name_key(const std::string& s) { return io::fnv1a64(s); }

json load_manifest(const fs::path& out) {
  const auto path = manifest_path(out);
  if (!fs::exists(path)) throw DataError("no manifest at " + path.string() + " (run gen-data first)");
  return read_json(path);
}

std::vector<std::string> manifest_problems(const json& manifest) {
  std::vector<std::string> names;
  for (const auto& p : manifest.at("problems")) names.push_back(p.at("name").get<std::string>());
  return names;
}

struct ProblemData {
  std::string name;
  data::ProblemDataset dataset;
  data::DatasetSplit split;
  cnn::SampleSet train, val, test;
};

ProblemData load_problem(const fs::path& out, const json& manifest, const std::string& name) {
  return staged("load " + name, [&] {
    ProblemData pd;
    pd.name = name;
    const fs::path root = manifest.at("source") == "synthetic" ? out / "data" : fs::path(manifest.at("data_root").get<std::string>());
    pd.dataset = data::load_problem_directory(root / name, manifest.at("image_size").get<std::size_t>());
    pd.dataset.name = name;
    pd.split = data::split_from_json(read_json(out / "splits" / (name + ".json")), pd.dataset);
    pd.train = cnn::samples_from_indices(pd.dataset, pd.split.train);
    pd.val = cnn::samples_from_indices(pd.dataset, pd.split.val);
    pd.test = cnn::samples_from_indices(pd.dataset, pd.split.test);
    return pd;
  });
}

std::vector<ProblemData> load_problems(const fs::path& out) {
  const auto manifest = load_manifest(out);
  std::vector<ProblemData> all;
  for (const auto& name : manifest_problems(manifest)) all.push_back(load_problem(out, manifest, name));
  return all;
}

// Hard labels come from the arg-max class, the same rule fusion applies.
metrics::EvalReport evaluate_network(const cnn::Network& net, const cnn::SampleSet& samples) {
  std::vector<int> predicted, truth = cnn::binary_labels(samples);
  std::vector<double> scores;
  for (const auto& x : samples.inputs) {
    const auto p = cnn::predict(net, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (p[i] > p[best]) best = i;
    }
    predicted.push_back(best == 1 ? 1 : 0);
    scores.push_back(p[1]);
  }
  auto report = metrics::classification_report(predicted, truth);
  const bool both = std::count(truth.begin(), truth.end(), 1) > 0 && std::count(truth.begin(), truth.end(), 0) > 0;
  if (both) report.auc = metrics::roc_auc(scores, truth);
  return report;
}

std::vector<cnn::TrainedNetwork> load_networks(const fs::path& out, const std::string& problem,
                                               const std::vector<std::string>& architectures) {
  std::vector<cnn::TrainedNetwork> nets;
  for (const auto& arch : architectures) {
    const auto path = model_path(out, problem, arch);
    if (!fs::exists(path)) throw DataError("missing model " + path.string() + " (run train-cnns first)");
    nets.push_back(cnn::load_trained_network(path));
  }
  return nets;
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
};

Stats stats_of(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

json stats_json(const Stats& s, std::size_t runs) { return {{"mean_seconds", s.mean}, {"stddev_seconds", s.stddev}, {"runs", runs}}; }

template <class F>
std::vector<double> time_calls(std::size_t runs, std::size_t warmup, F&& call) {
  std::vector<double> t;
  t.reserve(runs);
  for (std::size_t i = 0; i < warmup + runs; ++i) {
    const auto t0 = Clock::now();
    call(i);
    const double dt = seconds_since(t0);
    if (i >= warmup) t.push_back(dt);
  }
  return t;
}

struct FusionBench {
  std::vector<double> t;  // mean seconds per image and network
  double t_fusion = 0.0;
  double measured_serial = 0.0;
};

// Interleaves per-network timings, the fusion step alone and the full serial path,
// one image at a time, so all three see the same machine state.
FusionBench bench_fusion(const std::vector<cnn::TrainedNetwork>& nets, const fusion::FusionWeights& weights,
                         const std::vector<Tensor>& images, std::size_t runs, std::size_t warmup) {
  const std::size_t n = nets.size();
  FusionBench b;
  b.t.assign(n, 0.0);
  fusion::PredictionMatrix p(nets.front().network.spec().classes, n);
  volatile std::size_t sink = 0;
  for (std::size_t i = 0; i < warmup + runs; ++i) {
    const auto& x = images[i % images.size()];
    const bool keep = i >= warmup;
    for (std::size_t j = 0; j < n; ++j) {
      const auto t0 = Clock::now();
      const auto probs = cnn::predict(nets[j].network, x);
      const double dt = seconds_since(t0);
      for (std::size_t c = 0; c < p.classes; ++c) p.at(c, j) = probs[c];
      if (keep) b.t[j] += dt;
    }
    auto t0 = Clock::now();
    sink = sink + fusion::fuse_predictions(p, weights).winner;
    if (keep) b.t_fusion += seconds_since(t0);

    t0 = Clock::now();
    fusion::PredictionMatrix q(p.classes, n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto probs = cnn::predict(nets[j].network, x);
      for (std::size_t c = 0; c < q.classes; ++c) q.at(c, j) = probs[c];
    }
    sink = sink + fusion::fuse_predictions(q, weights).winner;
    if (keep) b.measured_serial += seconds_since(t0);
  }
  const double r = static_cast<double>(runs);
  for (auto& t : b.t) t /= r;
  b.t_fusion /= r;
  b.measured_serial /= r;
  return b;
}

json fusion_timing_json(const fusion::TimingProfile& profile, const FusionBench& b, const std::vector<std::string>& ids,
                        std::size_t runs) {
  json j = profile;
  j["network_ids"] = ids;
  j["measured_serial_seconds"] = b.measured_serial;
  j["runs"] = runs;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

const std::vector<std::string>& RunConfig::setting_keys() {
  static const std::vector<std::string> keys{
      "seed",          "workers",           "out",           "data.root",          "data.contrast",
      "data.noise",    "data.image_size",   "data.negatives", "data.positives",    "data.problems",
      "split.train",   "split.val",         "split.test",    "train.architectures", "train.epochs",
      "train.batch_size", "train.learning_rate", "train.momentum", "search.max_candidates", "search.max_seconds",
      "search.stack_top", "search.stack_folds", "bench.runs", "bench.warmup"};
  return keys;
}

void RunConfig::apply_setting(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  auto size = [&] { return static_cast<std::size_t>(parse_uint(key, value)); };
  auto real = [&] { return parse_double(key, value); };

  if (key == "seed") {
    seed = parse_uint(key, value);
  } else if (key == "workers") {
    workers = size();
  } else if (key == "out") {
    out = value;
  } else if (key == "data.root") {
    data_root = is_none(value) ? std::nullopt : std::optional<fs::path>(value);
  } else if (key == "data.contrast") {
    contrast = real();
  } else if (key == "data.noise") {
    noise = real();
  } else if (key == "data.image_size") {
    image_size = size();
  } else if (key == "data.negatives") {
    negatives = size();
  } else if (key == "data.positives") {
    positives = size();
  } else if (key == "data.problems") {
    problems = size();
  } else if (key == "split.train") {
    fractions.train = real();
  } else if (key == "split.val") {
    fractions.val = real();
  } else if (key == "split.test") {
    fractions.test = real();
  } else if (key == "train.architectures") {
    architectures.clear();
    std::stringstream ss(value);
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      if (!item.empty()) architectures.push_back(item);
    }
  } else if (key == "train.epochs") {
    train.epochs = size();
  } else if (key == "train.batch_size") {
    train.batch_size = size();
  } else if (key == "train.learning_rate") {
    train.learning_rate = real();
  } else if (key == "train.momentum") {
    train.momentum = real();
  } else if (key == "search.max_candidates") {
    budget.max_candidates = is_none(value) ? std::nullopt : std::optional<std::size_t>(size());
  } else if (key == "search.max_seconds") {
    budget.max_wall_clock_seconds = is_none(value) ? std::nullopt : std::optional<double>(real());
  } else if (key == "search.stack_top") {
    budget.stack_top = size();
  } else if (key == "search.stack_folds") {
    budget.stack_folds = size();
  } else if (key == "bench.runs") {
    bench_runs = size();
  } else if (key == "bench.warmup") {
    bench_warmup = size();
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

void RunConfig::validate() const {
  if (out.empty()) throw ConfigError("output directory is empty");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (architectures.empty()) throw ConfigError("no architectures listed");
  const Shape shape{1, image_size, image_size};
  for (const auto& a : architectures) cnn::architecture(a, shape);
  if (std::set<std::string>(architectures.begin(), architectures.end()).size() != architectures.size()) {
    throw ConfigError("architecture listed twice");
  }
  if (!data_root) {
    if (problems == 0 || problems > 6) throw ConfigError("data.problems must be in 1..6");
    if (negatives < 3 || positives < 3) throw ConfigError("each class needs at least 3 images");
    if (!(contrast >= 0.0) || !(noise >= 0.0)) throw ConfigError("contrast and noise must be non-negative");
  }
  const double total = fractions.train + fractions.val + fractions.test;
  if (!(fractions.train > 0.0) || !(fractions.val > 0.0) || !(fractions.test > 0.0) || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be positive and sum to 1");
  }
  train.validate();
  budget.validate();
  if (bench_runs < 2) throw ConfigError("bench.runs must be >= 2");
}

// ---------------------------------------------------------------------------
// Lock

RunLock::RunLock(const fs::path& out) : path_(out / ".lock") {
  fs::create_directories(out);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw Error(ErrorKind::kUsage, "run directory " + out.string() + " is locked (remove " + path_.string() +
                                       " if no other process is using it)");
  }
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Layout

fs::path manifest_path(const fs::path& out) { return out / "manifest.json"; }
fs::path model_path(const fs::path& out, const std::string& problem, const std::string& arch) {
  return out / "models" / problem / (arch + ".acnn");
}
fs::path auto_classifier_path(const fs::path& out, const std::string& problem) {
  return out / "models" / problem / "auto_classifier.bin";
}
fs::path report_path(const fs::path& out, const std::string& problem, const std::string& method) {
  return out / "reports" / problem / (method + ".json");
}
fs::path leaderboard_path(const fs::path& out, const std::string& problem) {
  return out / "leaderboards" / (problem + ".csv");
}

// ---------------------------------------------------------------------------
// Commands

json cmd_gen_data(const RunConfig& config) {
  config.validate();
  RunLock lock(config.out);
  return staged("gen-data", [&] {
    json manifest;
    manifest["image_size"] = config.image_size;
    manifest["split"] = {{"train", config.fractions.train}, {"val", config.fractions.val}, {"test", config.fractions.test}};
    manifest["seed"] = config.seed;
    json problems = json::array();
    auto add_split = [&](const data::ProblemDataset& ds, std::size_t index) {
      const auto split = data::stratified_split(ds, config.fractions, derive_seed(config.seed, {0x5b17, index}));
      write_json(config.out / "splits" / (ds.name + ".json"), data::split_to_json(split, ds));
    };
    if (config.data_root) {
      manifest["source"] = "directory";
      manifest["data_root"] = fs::absolute(*config.data_root).lexically_normal().string();
      std::vector<std::string> names;
      for (const auto& e : fs::directory_iterator(*config.data_root)) {
        if (e.is_directory()) names.push_back(e.path().filename().string());
      }
      std::sort(names.begin(), names.end());
      if (names.empty()) throw DataError("no problem directories under " + config.data_root->string());
      for (std::size_t i = 0; i < names.size(); ++i) {
        auto ds = data::load_problem_directory(*config.data_root / names[i], config.image_size);
        ds.name = names[i];
        add_split(ds, i);
        problems.push_back({{"name", ds.name},
                            {"counts", {{"defect", ds.count(data::kDefect)}, {"no_defect", ds.count(data::kNoDefect)}}}});
      }
    } else {
      manifest["source"] = "synthetic";
      auto suite = data::synthetic_suite(config.contrast, config.noise, config.image_size, config.negatives,
                                         config.positives, derive_seed(config.seed, {0xda7a}));
      suite.resize(config.problems);
      manifest["synthetic"] = suite;
      for (std::size_t i = 0; i < suite.size(); ++i) {
        const auto ds = data::generate_synthetic_problem(suite[i]);
        const fs::path dir = config.out / "data" / ds.name;
        fs::remove_all(dir);
        problems.push_back(data::write_problem_directory(ds, dir));
        // Split over the images as stored, so later commands see exactly what they load.
        auto stored = data::load_problem_directory(dir, config.image_size);
        stored.name = ds.name;
        add_split(stored, i);
      }
    }
    manifest["problems"] = std::move(problems);
    write_json(manifest_path(config.out), manifest);
    return manifest;
  });
}

std::vector<NetworkRow> cmd_train_cnns(const RunConfig& config) {
  config.validate();
  RunLock lock(config.out);
  const auto problems = staged("train-cnns", [&] { return load_problems(config.out); });

  struct Job {
    std::size_t problem, arch;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (std::size_t a = 0; a < config.architectures.size(); ++a) jobs.push_back({p, a});
  }
  std::vector<NetworkRow> rows(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t j) {
    const auto& pd = problems[jobs[j].problem];
    const auto& arch = config.architectures[jobs[j].arch];
    staged("train-cnns " + pd.name + "/" + arch, [&] {
      const auto key = name_key(arch);
      const auto spec = cnn::architecture(arch, pd.train.inputs.front().shape());
      auto net = cnn::build_network(spec, derive_seed(config.seed, {0x1417, jobs[j].problem, key}));
      auto tc = config.train;
      tc.seed = derive_seed(config.seed, {0x7a19, jobs[j].problem, key});
      const auto trained = cnn::train(std::move(net), pd.train, pd.val, tc);
      fs::create_directories(model_path(config.out, pd.name, arch).parent_path());
      cnn::save_trained_network(model_path(config.out, pd.name, arch), trained);

      NetworkRow row{pd.name, arch, trained.validation_auc, trained.selected_epoch,
                     evaluate_network(trained.network, pd.test), trained.train_seconds};
      json history = json::array();
      for (const auto& h : trained.history) {
        history.push_back({{"epoch", h.epoch}, {"validation_auc", h.validation_auc}, {"train_loss", h.train_loss}});
      }
      write_json(report_path(config.out, pd.name, arch), {{"method", arch},
                                                          {"problem", pd.name},
                                                          {"validation_auc", row.validation_auc},
                                                          {"selected_epoch", row.selected_epoch},
                                                          {"history", history},
                                                          {"test", row.test}});
      write_json(config.out / "timings" / "train" / pd.name / (arch + ".json"),
                 {{"train_seconds", row.train_seconds}, {"train_minutes", row.train_seconds / 60.0}});
      rows[j] = std::move(row);
    });
  });

  staged("train-cnns manifest", [&] {
    auto manifest = load_manifest(config.out);
    manifest["architectures"] = config.architectures;
    write_json(manifest_path(config.out), manifest);
  });
  return rows;
}

std::vector<FusionRow> cmd_fuse(const RunConfig& config) {
  config.validate();
  RunLock lock(config.out);
  const auto problems = staged("fuse", [&] { return load_problems(config.out); });
  std::vector<FusionRow> rows;
  for (const auto& pd : problems) {
    rows.push_back(staged("fuse " + pd.name, [&] {
      const auto nets = load_networks(config.out, pd.name, config.architectures);
      FusionRow row;
      row.problem = pd.name;
      row.result = fusion::fuse_dataset(std::span<const cnn::TrainedNetwork>(nets), pd.test);
      const auto b = bench_fusion(nets, row.result.weights, pd.test.inputs, config.bench_runs, config.bench_warmup);
      row.timing = fusion::timing_profile(b.t, b.t_fusion);
      row.measured_serial_seconds = b.measured_serial;
      write_json(report_path(config.out, pd.name, kFusionMethod),
                 {{"method", kFusionMethod}, {"problem", pd.name}, {"weights", row.result.weights}, {"test", row.result.report}});
      write_json(config.out / "timings" / "fusion" / (pd.name + ".json"),
                 fusion_timing_json(row.timing, b, config.architectures, config.bench_runs));
      return row;
    }));
  }
  return rows;
}

std::vector<SearchRow> cmd_search_head(const RunConfig& config) {
  config.validate();
  RunLock lock(config.out);
  const auto problems = staged("search-head", [&] { return load_problems(config.out); });
  std::vector<SearchRow> rows;
  for (std::size_t pi = 0; pi < problems.size(); ++pi) {
    const auto& pd = problems[pi];
    SearchRow row;
    row.problem = pd.name;

    const auto nets = staged("search-head " + pd.name + " select", [&] {
      return load_networks(config.out, pd.name, config.architectures);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < nets.size(); ++i) {
      if (nets[i].validation_auc > nets[best].validation_auc) best = i;
    }
    row.network = config.architectures[best];
    row.best_network_validation_auc = nets[best].validation_auc;

    auto extractor = staged("search-head " + pd.name + " truncate", [&] { return cnn::truncate_head(nets[best]); });
    const auto model_bytes = read_text(model_path(config.out, pd.name, row.network));
    extractor.network_id = row.network + "@" + io::hex64(io::fnv1a64(model_bytes));
    const std::string dataset_id = pd.name + "@" + io::hex64(io::fnv1a64(read_text(config.out / "splits" / (pd.name + ".json"))));

    std::map<std::string, cnn::FeatureTable> tables;
    staged("search-head " + pd.name + " features", [&] {
      for (const auto& [split, samples] : {std::pair{"train", &pd.train}, {"val", &pd.val}, {"test", &pd.test}}) {
        const cnn::FeatureProvenance prov{extractor.network_id, dataset_id, split};
        const fs::path cache = config.out / "features" / pd.name / (std::string(split) + ".aftb");
        if (fs::exists(cache)) {
          auto cached = cnn::load_feature_table(cache);
          if (cached.provenance == prov && cached.dim == extractor.dim) {
            tables[split] = std::move(cached);
            continue;
          }
        }
        tables[split] = cnn::extract_features(extractor, *samples, prov);
        fs::create_directories(cache.parent_path());
        cnn::save_feature_table(cache, tables[split]);
      }
    });

    auto budget = config.budget;
    budget.seed = derive_seed(config.seed, {0x5ea7c4, pi});
    budget.workers = config.workers;
    row.board = staged("search-head " + pd.name + " search",
                       [&] { return search::run_search(tables["train"], tables["val"], budget); });
    const auto& top = search::select_best(row.board);
    row.validation_auc = top.validation_auc;

    staged("search-head " + pd.name + " evaluate", [&] {
      std::ostringstream csv, timing;
      row.board.write_csv(csv);
      row.board.write_timing_csv(timing);
      write_text(leaderboard_path(config.out, pd.name), csv.str());
      write_text(config.out / "timings" / "search" / (pd.name + ".csv"), timing.str());

      auto model = search::assemble_auto_classifier(extractor, *top.model, top.spec, top.validation_auc,
                                                    search::leaderboard_rows(row.board));
      row.evaluation = search::evaluate_auto_classifier(model, pd.test);
      fs::create_directories(auto_classifier_path(config.out, pd.name).parent_path());
      search::save_auto_classifier(auto_classifier_path(config.out, pd.name), model);
      write_json(report_path(config.out, pd.name, kAutoMethod),
                 {{"method", kAutoMethod},
                  {"problem", pd.name},
                  {"network", row.network},
                  {"network_validation_auc", row.best_network_validation_auc},
                  {"candidate", top.spec},
                  {"validation_auc", row.validation_auc},
                  {"candidates_evaluated", row.board.entries.size()},
                  {"failures", row.board.failures},
                  {"feature_dim", extractor.dim},
                  {"extractor_warnings", extractor.warnings},
                  {"test", row.evaluation.report}});
      write_json(config.out / "timings" / "auto" / (pd.name + ".json"), row.evaluation.timing);
    });
    rows.push_back(std::move(row));
  }
  return rows;
}

report::ExperimentReport cmd_report(const fs::path& run_dir) {
  RunLock lock(run_dir);
  return staged("report", [&] {
    const auto manifest_file = manifest_path(run_dir);
    if (!fs::exists(manifest_file) || !fs::exists(run_dir / "reports")) {
      throw DataError("empty run directory " + run_dir.string() + " (no evaluation reports)");
    }
    const auto manifest = read_json(manifest_file);
    report::ExperimentReport r;
    r.problems = manifest_problems(manifest);
    if (manifest.contains("architectures")) r.methods = manifest.at("architectures").get<std::vector<std::string>>();
    r.methods.push_back(kFusionMethod);
    r.methods.push_back(kAutoMethod);

    std::size_t found = 0;
    r.cells.assign(r.problems.size(), std::vector<metrics::EvalReport>(r.methods.size()));
    r.present.assign(r.problems.size(), std::vector<char>(r.methods.size(), 0));
    for (std::size_t p = 0; p < r.problems.size(); ++p) {
      for (std::size_t m = 0; m < r.methods.size(); ++m) {
        const auto path = report_path(run_dir, r.problems[p], r.methods[m]);
        if (!fs::exists(path)) continue;
        r.cells[p][m] = read_json(path).at("test").get<metrics::EvalReport>();
        r.present[p][m] = 1;
        ++found;
      }
    }
    if (found == 0) throw DataError("empty run directory " + run_dir.string() + " (no evaluation reports)");

    // Drop methods with no report anywhere, so partial runs still render.
    for (std::size_t m = r.methods.size(); m-- > 0;) {
      bool any = false;
      for (std::size_t p = 0; p < r.problems.size(); ++p) any = any || r.present[p][m];
      if (any) continue;
      r.methods.erase(r.methods.begin() + static_cast<std::ptrdiff_t>(m));
      for (std::size_t p = 0; p < r.problems.size(); ++p) {
        r.cells[p].erase(r.cells[p].begin() + static_cast<std::ptrdiff_t>(m));
        r.present[p].erase(r.present[p].begin() + static_cast<std::ptrdiff_t>(m));
      }
    }

    write_text(run_dir / "reports" / "table1.csv", report::table1_csv(r));
    write_text(run_dir / "reports" / "table1.md", report::table1_markdown(r));
    write_text(run_dir / "reports" / "table2.csv", report::table2_csv(r));
    write_text(run_dir / "reports" / "table2.md", report::table2_markdown(r));

    // Wall-clock measurements render into timings/, away from the deterministic reports.
    const auto bench = run_dir / "timings" / "bench.json";
    if (fs::exists(bench)) {
      const auto j = read_json(bench);
      std::ostringstream md;
      md << "| Problem | Method | Mean (s) | Stddev (s) |\n| --- | --- | ---: | ---: |\n";
      char buf[64];
      auto line = [&](const std::string& problem, const std::string& method, const json& s) {
        std::snprintf(buf, sizeof buf, "%.6f | %.6f", s.at("mean_seconds").get<double>(), s.at("stddev_seconds").get<double>());
        md << "| " << problem << " | " << method << " | " << buf << " |\n";
      };
      for (const auto& [problem, pj] : j.at("problems").items()) {
        for (const auto& [arch, s] : pj.at("networks").items()) line(problem, arch, s);
        if (pj.contains("fusion")) {
          std::snprintf(buf, sizeof buf, "%.6f | %.6f", pj["fusion"].at("f_time_serial").get<double>(),
                        pj["fusion"].at("f_time_parallel").get<double>());
          md << "| " << problem << " | " << kFusionMethod << " (serial | parallel) | " << buf << " |\n";
        }
        if (pj.contains("auto_classifier")) {
          line(problem, std::string(kAutoMethod) + " extractor", pj["auto_classifier"].at("extractor"));
          line(problem, std::string(kAutoMethod) + " head", pj["auto_classifier"].at("head"));
        }
      }
      write_text(run_dir / "timings" / "bench.md", md.str());
    }
    return r;
  });
}

json cmd_bench(const RunConfig& config) {
  config.validate();
  RunLock lock(config.out);
  const auto manifest = staged("bench", [&] { return load_manifest(config.out); });
  json result;
  result["runs"] = config.bench_runs;
  result["warmup"] = config.bench_warmup;
  result["problems"] = json::object();
  for (const auto& name : manifest_problems(manifest)) {
    staged("bench " + name, [&] {
      const auto pd = load_problem(config.out, manifest, name);
      const auto& images = pd.test.inputs;
      const auto nets = load_networks(config.out, name, config.architectures);
      json pj;
      pj["networks"] = json::object();
      for (std::size_t a = 0; a < nets.size(); ++a) {
        const auto t = time_calls(config.bench_runs, config.bench_warmup,
                                  [&](std::size_t i) { (void)cnn::predict(nets[a].network, images[i % images.size()]); });
        pj["networks"][config.architectures[a]] = stats_json(stats_of(t), config.bench_runs);
      }
      const auto weights = fusion::normalize_auc_weights(fusion::validation_scores(nets));
      const auto b = bench_fusion(nets, weights, images, config.bench_runs, config.bench_warmup);
      pj["fusion"] = fusion_timing_json(fusion::timing_profile(b.t, b.t_fusion), b, config.architectures, config.bench_runs);

      const auto auto_path = auto_classifier_path(config.out, name);
      if (fs::exists(auto_path)) {
        const auto model = search::load_auto_classifier(auto_path);
        std::vector<std::vector<double>> features;
        for (const auto& x : images) features.push_back(model.extractor.extract(x));
        const auto te = time_calls(config.bench_runs, config.bench_warmup,
                                   [&](std::size_t i) { (void)model.extractor.extract(images[i % images.size()]); });
        const auto th = time_calls(config.bench_runs, config.bench_warmup, [&](std::size_t i) {
          (void)ml::predict_proba(model.head, features[i % features.size()]);
        });
        pj["auto_classifier"] = {{"extractor", stats_json(stats_of(te), config.bench_runs)},
                                 {"head", stats_json(stats_of(th), config.bench_runs)},
                                 {"family", ml::family_name(model.head)}};
      }
      result["problems"][name] = std::move(pj);
    });
  }
  staged("bench", [&] { write_json(config.out / "timings" / "bench.json", result); });
  return result;
}

}  // namespace autohead::pipeline
