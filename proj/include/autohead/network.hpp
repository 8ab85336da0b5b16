#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autohead/layers.hpp"
#include "autohead/random.hpp"
#include "autohead/tensor.hpp"

namespace autohead::cnn {

struct Conv2d {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};
struct MaxPool2d {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};
struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct FullyConnected {
  std::size_t out_dim = 1;
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};
struct Dropout {
  double rate = 0.5;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

using LayerKind = std::variant<Conv2d, MaxPool2d, Relu, Flatten, FullyConnected, Dropout, Softmax>;

std::string describe(const LayerKind& layer);

/// True for layers allowed in the classification component (flatten/fc/relu/dropout/softmax).
bool is_head_layer(const LayerKind& layer);

/// Shape after each layer, starting from `input`. Throws ConfigError naming the offending layer.
std::vector<Shape> infer_shapes(const Shape& input, std::span<const LayerKind> layers);

/// A classifier: feature extraction layers followed by a classification component ending in fc(classes), softmax.
struct NetworkSpec {
  std::string name;
  std::vector<LayerKind> layers;
  Shape input_shape;  // C x H x W for images, {d} for feature vectors
  std::size_t classes = 2;

  /// Throws ConfigError if the shape chain or the head structure is invalid.
  void validate() const;

  /// Index of the first layer of the classification component (maximal head-layer suffix).
  std::size_t classification_start() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

void to_json(nlohmann::json& j, const LayerKind& layer);
void from_json(const nlohmann::json& j, LayerKind& layer);
void to_json(nlohmann::json& j, const NetworkSpec& spec);
void from_json(const nlohmann::json& j, NetworkSpec& spec);

/// Desk-scale VGG-style architectures on C x H x W inputs: "vgg-micro", "vgg-tiny", "vgg-small".
NetworkSpec architecture(std::string_view name, const Shape& input_shape, std::size_t classes = 2);
std::vector<std::string> architecture_names();

/// Fully connected classifier over length-d feature vectors: [fc(h), relu]* then fc(classes), softmax.
NetworkSpec mlp_spec(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes = 2);

/// Activations recorded by a training-mode forward pass.
struct ForwardTrace {
  std::vector<Tensor> inputs;  // input to layer i
  std::vector<Tensor> masks;   // dropout masks, indexed by layer (empty tensor elsewhere)
};

// Ordered layers with their parameters. Parametric layers (conv2d, fully_connected)
// own two consecutive parameter tensors: weights then bias.
class LayerStack {
 public:
  LayerStack() = default;
  /// Validates shapes and that `params` match the layers.
  LayerStack(Shape input_shape, std::vector<LayerKind> layers, std::vector<Tensor> params);

  /// He-style fan-in uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  static LayerStack initialize(Shape input_shape, std::vector<LayerKind> layers, std::uint64_t seed);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  const std::vector<LayerKind>& layers() const noexcept { return layers_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  std::vector<Tensor>& mutable_params() noexcept { return params_; }
  std::size_t parameter_count() const noexcept;

  /// Eval-mode forward pass over layers [0, end). Dropout is identity.
  Tensor forward(const Tensor& x) const { return forward(x, layers_.size()); }
  Tensor forward(const Tensor& x, std::size_t end) const;

  /// Train-mode forward pass over layers [0, end), recording inputs and dropout masks.
  Tensor forward_train(const Tensor& x, std::size_t end, ForwardTrace& trace, Rng& rng) const;

  /// Back-propagates `upstream` (gradient w.r.t. the output of layer end-1) through layers
  /// [0, end), adding parameter gradients into `grads` (shaped like params()).
  void backward(const ForwardTrace& trace, std::size_t end, Tensor upstream, std::vector<Tensor>& grads) const;

  /// Zero tensors shaped like params().
  std::vector<Tensor> zeros_like_params() const;

  /// First parameter slot of layer i, or npos if the layer has none.
  std::size_t param_slot(std::size_t layer) const { return slots_.at(layer); }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  void check_input(const Tensor& x) const;

  Shape input_shape_;
  std::vector<LayerKind> layers_;
  std::vector<Tensor> params_;
  std::vector<Shape> shapes_;       // shapes_[i] = input shape of layer i; back() = output
  std::vector<std::size_t> slots_;  // per layer
};

class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, LayerStack stack);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const LayerStack& stack() const noexcept { return stack_; }
  LayerStack& mutable_stack() noexcept { return stack_; }

  /// Class probabilities (eval mode).
  Tensor predict(const Tensor& input) const { return stack_.forward(input); }

 private:
  NetworkSpec spec_;
  LayerStack stack_;
};

/// Validates the spec and initializes parameters deterministically from `seed`.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace autohead::cnn
