#include "autohead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "autohead/error.hpp"

namespace autohead::metrics {

PairCounts mann_whitney_counts(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_auc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                     " labels");
  }
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw ConfigError("roc_auc: NaN score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("roc_auc: labels must be 0 or 1");
    positives += static_cast<std::uint64_t>(labels[i]);
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw ConfigError("AUC undefined: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  PairCounts counts;
  counts.pairs = positives * negatives;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0, neg_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos_in_group : neg_in_group) += 1;
      ++j;
    }
    counts.twice_wins += 2 * pos_in_group * negatives_below + pos_in_group * neg_in_group;
    negatives_below += neg_in_group;
    i = j;
  }
  return counts;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const PairCounts c = mann_whitney_counts(scores, labels);
  return static_cast<double>(c.twice_wins) / static_cast<double>(2 * c.pairs);
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

EvalReport classification_report(std::span<const int> predicted, std::span<const int> truth, int positive_class) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("classification_report: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ConfigError("classification_report needs at least one sample");
  EvalReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i] == positive_class;
    const bool guess = predicted[i] == positive_class;
    if (actual && guess) ++r.tp;
    else if (actual) ++r.fn;
    else if (guess) ++r.fp;
    else ++r.tn;
  }
  r.n_samples = truth.size();
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n_samples);
  r.tpr_undefined = (r.tp + r.fn) == 0;
  r.tnr_undefined = (r.tn + r.fp) == 0;
  r.tpr = r.tpr_undefined ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.tnr = r.tnr_undefined ? 1.0 : static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
  r.average_accuracy = (r.tpr + r.tnr) / 2.0;
  return r;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> truth, double threshold) {
  const auto predicted = threshold_predictions(scores, threshold);
  EvalReport r = classification_report(predicted, truth);
  const bool has_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
  const bool has_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (has_pos && has_neg) r.auc = roc_auc(scores, truth);
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"accuracy", r.accuracy},
                     {"auc", r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr)},
                     {"tpr", r.tpr},
                     {"tnr", r.tnr},
                     {"average_accuracy", r.average_accuracy},
                     {"tp", r.tp},
                     {"fp", r.fp},
                     {"tn", r.tn},
                     {"fn", r.fn},
                     {"n_samples", r.n_samples},
                     {"tpr_undefined", r.tpr_undefined},
                     {"tnr_undefined", r.tnr_undefined}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.accuracy = j.at("accuracy").get<double>();
  r.auc = j.at("auc").is_null() ? std::nullopt : std::optional<double>(j.at("auc").get<double>());
  r.tpr = j.at("tpr").get<double>();
  r.tnr = j.at("tnr").get<double>();
  r.average_accuracy = j.at("average_accuracy").get<double>();
  r.tp = j.at("tp").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.tn = j.at("tn").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.tpr_undefined = j.value("tpr_undefined", false);
  r.tnr_undefined = j.value("tnr_undefined", false);
}

}  // namespace autohead::metrics
