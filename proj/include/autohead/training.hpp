#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autohead/network.hpp"
#include "autohead/tensor.hpp"

namespace autohead::cnn {

/// SGD with momentum. Defaults are the shared setting used for every network.
struct TrainConfig {
  std::size_t batch_size = 10;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inputs with aligned class labels (and optional ids for provenance checks).
struct SampleSet {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return inputs.size(); }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = initialization (only recorded when training for 0 epochs)
  double validation_auc = 0.0;
  double train_loss = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainedNetwork {
  Network network;  // parameters of the selected checkpoint
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
  double validation_auc = 0.0;  // max over history
  double train_seconds = 0.0;   // wall clock; not serialized with the model
};

/// v <- momentum * v - lr * g;  p <- p + v.
void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, std::span<Tensor> velocity,
                       double learning_rate, double momentum);

/// Index of the earliest maximum.
std::size_t select_checkpoint(std::span<const double> validation_aucs);

// Mini-batch SGD over seeded shuffled epochs with mean cross-entropy per batch.
// After every epoch the validation AUC of the positive-class probability is
// recorded; the returned parameters are those of the earliest best epoch.
// Throws TrainingError if either split is empty or single-class, or on a
// non-finite loss.
TrainedNetwork train(Network network, const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& config,
                     std::size_t positive_class = 1);

/// Softmax probabilities for one input.
Tensor predict(const Network& network, const Tensor& input);

/// Probability of `positive_class` for every sample, in order.
std::vector<double> positive_scores(const Network& network, const SampleSet& samples, std::size_t positive_class = 1);

/// 0/1 labels (1 = positive_class) for AUC and report computations.
std::vector<int> binary_labels(const SampleSet& samples, std::size_t positive_class = 1);

inline constexpr char kNetworkMagic[] = "ACNN";
inline constexpr std::uint32_t kNetworkFormatVersion = 1;

void save_trained_network(const std::filesystem::path& path, const TrainedNetwork& trained);
TrainedNetwork load_trained_network(const std::filesystem::path& path);

}  // namespace autohead::cnn
