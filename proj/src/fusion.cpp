#include "autohead/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "autohead/error.hpp"

namespace autohead::fusion {

void ValidationScores::validate() const {
  if (v.empty()) throw ConfigError("validation scores are empty");
  if (!network_ids.empty() && network_ids.size() != v.size()) {
    throw ConfigError("validation scores and network ids differ in length");
  }
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!(v[j] >= 0.0 && v[j] <= 1.0)) {
      throw ConfigError("validation AUC " + std::to_string(v[j]) + " of network " + std::to_string(j) +
                        " is outside [0, 1]");
    }
  }
}

void PredictionMatrix::validate() const {
  if (classes == 0 || networks == 0) throw ConfigError("prediction matrix is empty");
  if (p.size() != classes * networks) throw ShapeError("prediction matrix size does not match c x n");
  for (std::size_t j = 0; j < networks; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < classes; ++i) {
      const double x = at(i, j);
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("probability outside [0, 1] in column " + std::to_string(j));
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("column " + std::to_string(j) + " does not sum to 1");
  }
}

FusionWeights normalize_auc_weights(const ValidationScores& scores) {
  scores.validate();
  double total = 0.0;
  for (double v : scores.v) total += v;
  if (total <= 0.0) throw ConfigError("degenerate weights: validation AUCs sum to zero");
  FusionWeights w;
  w.source = scores;
  w.w.reserve(scores.v.size());
  for (double v : scores.v) w.w.push_back(v / total);
  return w;
}

FusedPrediction fuse_predictions(const PredictionMatrix& p, const FusionWeights& w) {
  if (w.w.size() != p.networks) {
    throw ShapeError("fusion weights have length " + std::to_string(w.w.size()) + " but the prediction matrix has " +
                     std::to_string(p.networks) + " networks");
  }
  if (p.classes == 0 || p.p.size() != p.classes * p.networks) throw ShapeError("prediction matrix is malformed");
  FusedPrediction out;
  out.scores.assign(p.classes, 0.0);
  for (std::size_t i = 0; i < p.classes; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.networks; ++j) s += p.at(i, j) * w.w[j];
    out.scores[i] = s;
  }
  for (std::size_t i = 1; i < p.classes; ++i) {
    if (out.scores[i] > out.scores[out.winner]) out.winner = i;
  }
  return out;
}

ValidationScores validation_scores(std::span<const cnn::TrainedNetwork> networks) {
  ValidationScores s;
  for (const auto& t : networks) {
    s.v.push_back(t.validation_auc);
    s.network_ids.push_back(t.network.spec().name);
  }
  return s;
}

FusionResult fuse_dataset(std::span<const cnn::Network* const> networks, const ValidationScores& scores,
                          const cnn::SampleSet& samples, std::size_t positive_class) {
  if (networks.empty()) throw ConfigError("fusion needs at least one network");
  if (scores.v.size() != networks.size()) throw ShapeError("one validation score per network is required");
  const auto& first = networks.front()->spec();
  for (const auto* n : networks) {
    if (n->spec().input_shape != first.input_shape || n->spec().classes != first.classes) {
      throw ConfigError("network '" + n->spec().name + "' does not share the input shape and classes of '" +
                        first.name + "'");
    }
  }
  if (positive_class >= first.classes) throw ConfigError("positive class out of range");

  FusionResult r;
  r.weights = normalize_auc_weights(scores);
  PredictionMatrix pm(first.classes, networks.size());
  pm.network_ids = scores.network_ids;
  std::vector<int> truth;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t j = 0; j < networks.size(); ++j) {
      const Tensor probs = networks[j]->predict(samples.inputs[s]);
      for (std::size_t i = 0; i < pm.classes; ++i) pm.at(i, j) = probs[i];
    }
    const auto fused = fuse_predictions(pm, r.weights);
    r.predicted.push_back(fused.winner == positive_class ? 1 : 0);
    r.positive_scores.push_back(fused.scores[positive_class]);
    truth.push_back(samples.labels[s] == positive_class ? 1 : 0);
  }
  r.report = metrics::classification_report(r.predicted, truth);
  const bool has_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
  const bool has_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (has_pos && has_neg) r.report.auc = metrics::roc_auc(r.positive_scores, truth);
  return r;
}

FusionResult fuse_dataset(std::span<const cnn::TrainedNetwork> networks, const cnn::SampleSet& samples,
                          std::size_t positive_class) {
  std::vector<const cnn::Network*> ptrs;
  for (const auto& t : networks) ptrs.push_back(&t.network);
  return fuse_dataset(ptrs, validation_scores(networks), samples, positive_class);
}

TimingProfile timing_profile(std::span<const double> t, double t_fusion) {
  if (t.empty()) throw ConfigError("timing profile needs at least one network time");
  auto check = [](double x, const char* what) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string(what) + " must be a non-negative time");
  };
  check(t_fusion, "t_fusion");
  TimingProfile p;
  p.t.assign(t.begin(), t.end());
  p.t_fusion = t_fusion;
  double mx = 0.0, sum = 0.0;
  for (double x : t) {
    check(x, "network inference time");
    mx = std::max(mx, x);
    sum += x;
  }
  p.f_time_parallel = mx + t_fusion;
  p.f_time_serial = sum + t_fusion;
  return p;
}

void to_json(nlohmann::json& j, const FusionWeights& w) {
  j = {{"network_ids", w.source.network_ids}, {"validation_auc", w.source.v}, {"weights", w.w}};
}

void to_json(nlohmann::json& j, const TimingProfile& t) {
  j = {{"t", t.t}, {"t_fusion", t.t_fusion}, {"f_time_parallel", t.f_time_parallel}, {"f_time_serial", t.f_time_serial}};
}

void from_json(const nlohmann::json& j, TimingProfile& t) {
  t.t = j.at("t").get<std::vector<double>>();
  t.t_fusion = j.at("t_fusion").get<double>();
  t.f_time_parallel = j.at("f_time_parallel").get<double>();
  t.f_time_serial = j.at("f_time_serial").get<double>();
}

}  // namespace autohead::fusion
