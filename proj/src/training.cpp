#include "autohead/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "autohead/container.hpp"
#include "autohead/data.hpp"
#include "autohead/error.hpp"
#include "autohead/layers.hpp"
#include "autohead/metrics.hpp"

namespace autohead::cnn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, std::span<Tensor> velocity,
                       double learning_rate, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd step: parameter, gradient and velocity counts differ");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].shape() != grads[t].shape() || params[t].shape() != velocity[t].shape()) {
      throw ShapeError("sgd step: tensor " + std::to_string(t) + " shapes differ: " +
                       shape_to_string(params[t].shape()) + ", " + shape_to_string(grads[t].shape()) + ", " +
                       shape_to_string(velocity[t].shape()));
    }
    auto p = params[t].data();
    auto g = grads[t].data();
    auto v = velocity[t].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] - learning_rate * g[i];
      p[i] += v[i];
    }
  }
}

std::size_t select_checkpoint(std::span<const double> validation_aucs) {
  if (validation_aucs.empty()) throw ConfigError("no validation AUCs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < validation_aucs.size(); ++i) {
    if (validation_aucs[i] > validation_aucs[best]) best = i;
  }
  return best;
}

Tensor predict(const Network& network, const Tensor& input) { return network.predict(input); }

std::vector<double> positive_scores(const Network& network, const SampleSet& samples, std::size_t positive_class) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& x : samples.inputs) scores.push_back(network.predict(x).data()[positive_class]);
  return scores;
}

std::vector<int> binary_labels(const SampleSet& samples, std::size_t positive_class) {
  std::vector<int> out;
  out.reserve(samples.labels.size());
  for (auto l : samples.labels) out.push_back(l == positive_class ? 1 : 0);
  return out;
}

namespace {

void check_samples(const SampleSet& s, const char* which, std::size_t classes) {
  if (s.inputs.empty()) throw TrainingError(std::string(which) + " split is empty");
  if (s.inputs.size() != s.labels.size()) {
    throw TrainingError(std::string(which) + " split has " + std::to_string(s.inputs.size()) + " inputs and " +
                        std::to_string(s.labels.size()) + " labels");
  }
  for (auto l : s.labels) {
    if (l >= classes) throw TrainingError(std::string(which) + " label " + std::to_string(l) + " out of range");
  }
}

double validation_auc(const Network& net, const SampleSet& val, std::span<const int> val_labels,
                      std::size_t positive_class) {
  const auto scores = positive_scores(net, val, positive_class);
  return metrics::roc_auc(scores, val_labels);
}

}  // namespace

TrainedNetwork train(Network network, const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& config,
                     std::size_t positive_class) {
  config.validate();
  const std::string& name = network.spec().name;
  const std::size_t classes = network.spec().classes;
  check_samples(train_set, "training", classes);
  check_samples(val_set, "validation", classes);
  const auto val_labels = binary_labels(val_set, positive_class);
  {
    std::size_t pos = 0;
    for (int l : val_labels) pos += static_cast<std::size_t>(l);
    if (pos == 0 || pos == val_labels.size()) {
      throw TrainingError("network '" + name + "': AUC undefined, validation split contains a single class");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  TrainedNetwork result;
  LayerStack& stack = network.mutable_stack();
  const std::size_t n_layers = stack.layers().size();

  if (config.epochs == 0) {
    double loss = 0.0;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      loss += nn::cross_entropy(network.predict(train_set.inputs[i]), train_set.labels[i]);
    }
    const double auc = validation_auc(network, val_set, val_labels, positive_class);
    result.history.push_back({0, auc, loss / static_cast<double>(train_set.size())});
  }

  auto velocity = stack.zeros_like_params();
  std::vector<Tensor> best_params = stack.params();
  double best_auc = -1.0;
  ForwardTrace trace;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = data::epoch_batches(train_set.size(), config.batch_size, derive_seed(config.seed, {epoch}));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      auto grads = stack.zeros_like_params();
      Rng dropout_rng(derive_seed(config.seed, {epoch, b, 0xd7}));
      double batch_loss = 0.0;
      for (std::size_t idx : batches[b]) {
        const Tensor probs = stack.forward_train(train_set.inputs[idx], n_layers, trace, dropout_rng);
        const std::size_t label = train_set.labels[idx];
        batch_loss += nn::cross_entropy(probs, label);
        stack.backward(trace, n_layers - 1, nn::softmax_cross_entropy_grad(probs, label), grads);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "network '" << name << "': non-finite loss at epoch " << epoch << ", batch " << b << " (lr "
           << config.learning_rate << ", momentum " << config.momentum << ")";
        throw TrainingError(os.str());
      }
      loss_sum += batch_loss;
      const double scale = 1.0 / static_cast<double>(batches[b].size());
      for (auto& g : grads) {
        for (double& v : g.data()) v *= scale;
      }
      sgd_momentum_step(stack.mutable_params(), grads, velocity, config.learning_rate, config.momentum);
    }
    for (const auto& p : stack.params()) {
      if (!p.all_finite()) {
        throw TrainingError("network '" + name + "': parameters diverged at epoch " + std::to_string(epoch));
      }
    }
    const double auc = validation_auc(network, val_set, val_labels, positive_class);
    result.history.push_back({epoch, auc, loss_sum / static_cast<double>(train_set.size())});
    if (auc > best_auc) {
      best_auc = auc;
      best_params = stack.params();
    }
  }

  std::vector<double> aucs;
  for (const auto& r : result.history) aucs.push_back(r.validation_auc);
  const std::size_t best = select_checkpoint(aucs);
  result.selected_epoch = result.history[best].epoch;
  result.validation_auc = result.history[best].validation_auc;
  if (config.epochs > 0) stack.mutable_params() = std::move(best_params);
  result.network = std::move(network);
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void save_trained_network(const std::filesystem::path& path, const TrainedNetwork& trained) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : trained.history) {
    history.push_back({{"epoch", r.epoch}, {"validation_auc", r.validation_auc}, {"train_loss", r.train_loss}});
  }
  const nlohmann::json meta = {{"spec", trained.network.spec()},
                               {"history", history},
                               {"selected_epoch", trained.selected_epoch},
                               {"validation_auc", trained.validation_auc}};
  io::Container c{kNetworkMagic, kNetworkFormatVersion, meta.dump(), {}};
  for (const auto& p : trained.network.stack().params()) c.payload.insert(c.payload.end(), p.data().begin(), p.data().end());
  io::write_container_file(path, c);
}

TrainedNetwork load_trained_network(const std::filesystem::path& path) {
  const auto c = io::read_container_file(path, kNetworkMagic, kNetworkFormatVersion);
  TrainedNetwork t;
  try {
    const auto meta = nlohmann::json::parse(c.text);
    const auto spec = meta.at("spec").get<NetworkSpec>();
    for (const auto& r : meta.at("history")) {
      t.history.push_back({r.at("epoch").get<std::size_t>(), r.at("validation_auc").get<double>(),
                           r.at("train_loss").get<double>()});
    }
    t.selected_epoch = meta.at("selected_epoch").get<std::size_t>();
    t.validation_auc = meta.at("validation_auc").get<double>();
    // Parameter shapes come from a freshly initialized stack; values from the payload.
    auto stack = LayerStack::initialize(spec.input_shape, spec.layers, 0);
    io::PayloadReader reader(c.payload);
    auto params = stack.params();
    for (auto& p : params) {
      const auto values = reader.take(p.size());
      std::copy(values.begin(), values.end(), p.data().begin());
    }
    if (!reader.done()) throw DataError("trailing parameter values");
    t.network = Network(spec, LayerStack(spec.input_shape, spec.layers, std::move(params)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed network file " + path.string() + ": " + e.what());
  }
  return t;
}

}  // namespace autohead::cnn
