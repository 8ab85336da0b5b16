#include "autohead/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "autohead/error.hpp"

namespace autohead::cnn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

bool has_params(const LayerKind& layer) {
  return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<FullyConnected>(layer);
}

Shape next_shape(const Shape& in, const LayerKind& layer, bool is_last) {
  return std::visit(
      overloaded{
          [&](const Conv2d& c) -> Shape {
            if (in.size() != 3) throw ConfigError("conv2d expects a C x H x W input, got " + shape_to_string(in));
            if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
              throw ConfigError("conv2d channels, kernel and stride must be >= 1");
            }
            return {c.out_channels, nn::window_output_extent(in[1], c.kernel, c.stride, c.padding),
                    nn::window_output_extent(in[2], c.kernel, c.stride, c.padding)};
          },
          [&](const MaxPool2d& p) -> Shape {
            if (in.size() != 3) throw ConfigError("maxpool2d expects a C x H x W input, got " + shape_to_string(in));
            return {in[0], nn::window_output_extent(in[1], p.window, p.stride, 0),
                    nn::window_output_extent(in[2], p.window, p.stride, 0)};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const FullyConnected& f) -> Shape {
            if (in.size() != 1) {
              throw ConfigError("fully_connected expects a flattened input, got " + shape_to_string(in));
            }
            if (f.out_dim == 0) throw ConfigError("fully_connected out_dim must be >= 1");
            return {f.out_dim};
          },
          [&](const Dropout& d) -> Shape {
            if (!(d.rate >= 0.0 && d.rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
            return in;
          },
          [&](const Softmax&) -> Shape {
            if (!is_last) throw ConfigError("softmax is only allowed as the final layer");
            if (in.size() != 1) throw ConfigError("softmax expects a vector input, got " + shape_to_string(in));
            return in;
          },
      },
      layer);
}

void add_into(Tensor& acc, const Tensor& g) {
  auto a = acc.data();
  auto b = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

std::string describe(const LayerKind& layer) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const Conv2d& c) {
                   os << "conv2d(" << c.out_channels << ", k=" << c.kernel << ", s=" << c.stride << ", p=" << c.padding
                      << ")";
                 },
                 [&](const MaxPool2d& p) { os << "maxpool2d(" << p.window << ", s=" << p.stride << ")"; },
                 [&](const Relu&) { os << "relu"; },
                 [&](const Flatten&) { os << "flatten"; },
                 [&](const FullyConnected& f) { os << "fully_connected(" << f.out_dim << ")"; },
                 [&](const Dropout& d) { os << "dropout(" << d.rate << ")"; },
                 [&](const Softmax&) { os << "softmax"; },
             },
             layer);
  return os.str();
}

bool is_head_layer(const LayerKind& layer) {
  return !std::holds_alternative<Conv2d>(layer) && !std::holds_alternative<MaxPool2d>(layer);
}

std::vector<Shape> infer_shapes(const Shape& input, std::span<const LayerKind> layers) {
  if (input.empty()) throw ConfigError("input shape is empty");
  for (auto d : input) {
    if (d == 0) throw ConfigError("input shape " + shape_to_string(input) + " has a zero dimension");
  }
  std::vector<Shape> shapes{input};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      shapes.push_back(next_shape(shapes.back(), layers[i], i + 1 == layers.size()));
    } catch (const Error& e) {
      throw ConfigError("layer " + std::to_string(i) + " " + describe(layers[i]) + ": " + e.what());
    }
  }
  return shapes;
}

void NetworkSpec::validate() const {
  if (classes < 2) throw ConfigError("network '" + name + "' needs at least 2 classes");
  if (layers.size() < 2) throw ConfigError("network '" + name + "' must end with fully_connected, softmax");
  const auto* last_fc = std::get_if<FullyConnected>(&layers[layers.size() - 2]);
  if (!last_fc || !std::holds_alternative<Softmax>(layers.back())) {
    throw ConfigError("network '" + name + "' must end with fully_connected(" + std::to_string(classes) +
                      "), softmax");
  }
  if (last_fc->out_dim != classes) {
    throw ConfigError("network '" + name + "' final fully_connected has " + std::to_string(last_fc->out_dim) +
                      " outputs for " + std::to_string(classes) + " classes");
  }
  try {
    infer_shapes(input_shape, layers);
  } catch (const Error& e) {
    throw ConfigError("network '" + name + "': " + e.what());
  }
}

std::size_t NetworkSpec::classification_start() const {
  std::size_t start = layers.size();
  while (start > 0 && is_head_layer(layers[start - 1])) --start;
  return start;
}

void to_json(nlohmann::json& j, const LayerKind& layer) {
  std::visit(overloaded{
                 [&](const Conv2d& c) {
                   j = {{"type", "conv2d"},
                        {"out_channels", c.out_channels},
                        {"kernel", c.kernel},
                        {"stride", c.stride},
                        {"padding", c.padding}};
                 },
                 [&](const MaxPool2d& p) { j = {{"type", "maxpool2d"}, {"window", p.window}, {"stride", p.stride}}; },
                 [&](const Relu&) { j = {{"type", "relu"}}; },
                 [&](const Flatten&) { j = {{"type", "flatten"}}; },
                 [&](const FullyConnected& f) { j = {{"type", "fully_connected"}, {"out_dim", f.out_dim}}; },
                 [&](const Dropout& d) { j = {{"type", "dropout"}, {"rate", d.rate}}; },
                 [&](const Softmax&) { j = {{"type", "softmax"}}; },
             },
             layer);
}

void from_json(const nlohmann::json& j, LayerKind& layer) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    layer = Conv2d{j.at("out_channels").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                   j.at("stride").get<std::size_t>(), j.at("padding").get<std::size_t>()};
  } else if (type == "maxpool2d") {
    layer = MaxPool2d{j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  } else if (type == "relu") {
    layer = Relu{};
  } else if (type == "flatten") {
    layer = Flatten{};
  } else if (type == "fully_connected") {
    layer = FullyConnected{j.at("out_dim").get<std::size_t>()};
  } else if (type == "dropout") {
    layer = Dropout{j.at("rate").get<double>()};
  } else if (type == "softmax") {
    layer = Softmax{};
  } else {
    throw DataError("unknown layer type '" + type + "'");
  }
}

void to_json(nlohmann::json& j, const NetworkSpec& spec) {
  j = {{"name", spec.name}, {"layers", spec.layers}, {"input_shape", spec.input_shape}, {"classes", spec.classes}};
}

void from_json(const nlohmann::json& j, NetworkSpec& spec) {
  spec.name = j.at("name").get<std::string>();
  spec.layers = j.at("layers").get<std::vector<LayerKind>>();
  spec.input_shape = j.at("input_shape").get<Shape>();
  spec.classes = j.at("classes").get<std::size_t>();
}

NetworkSpec architecture(std::string_view name, const Shape& input_shape, std::size_t classes) {
  NetworkSpec spec;
  spec.name = std::string(name);
  spec.input_shape = input_shape;
  spec.classes = classes;
  const auto names = architecture_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
  }
  if (input_shape.size() != 3) throw ConfigError("architecture '" + std::string(name) + "' expects a C x H x W input");
  std::size_t side = input_shape[1];
  auto conv = [&](std::size_t channels, std::size_t kernel) {
    spec.layers.push_back(Conv2d{channels, kernel, 1, kernel / 2});
    spec.layers.push_back(Relu{});
  };
  auto pool = [&](std::size_t window) {
    if (window == 0 || side % window != 0) {
      throw ConfigError("architecture '" + std::string(name) + "' needs an input side divisible by " +
                        std::to_string(window));
    }
    spec.layers.push_back(MaxPool2d{window, window});
    side /= window;
  };
  // Each stack ends in a global max pool so a defect is detected wherever it lies.
  if (name == "vgg-micro") {
    conv(8, 5);
    pool(4);
    conv(16, 3);
    pool(side);
    spec.layers.insert(spec.layers.end(), {Flatten{}, FullyConnected{32}, Relu{}, FullyConnected{16}, Relu{}});
  } else if (name == "vgg-tiny") {
    conv(8, 3);
    pool(2);
    conv(16, 3);
    pool(2);
    pool(side);
    spec.layers.insert(spec.layers.end(),
                       {Flatten{}, FullyConnected{32}, Relu{}, Dropout{0.25}, FullyConnected{16}, Relu{}});
  } else if (name == "vgg-small") {
    conv(8, 3);
    pool(2);
    conv(16, 3);
    pool(2);
    conv(32, 3);
    pool(2);
    pool(side);
    spec.layers.insert(spec.layers.end(),
                       {Flatten{}, FullyConnected{64}, Relu{}, Dropout{0.25}, FullyConnected{32}, Relu{}});
  }
  spec.layers.push_back(FullyConnected{classes});
  spec.layers.push_back(Softmax{});
  spec.validate();
  return spec;
}

std::vector<std::string> architecture_names() { return {"vgg-micro", "vgg-tiny", "vgg-small"}; }

NetworkSpec mlp_spec(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes) {
  NetworkSpec spec;
  spec.name = "mlp";
  for (auto h : hidden) spec.name += "-" + std::to_string(h);
  spec.input_shape = {input_dim};
  spec.classes = classes;
  for (auto h : hidden) {
    spec.layers.push_back(FullyConnected{h});
    spec.layers.push_back(Relu{});
  }
  spec.layers.push_back(FullyConnected{classes});
  spec.layers.push_back(Softmax{});
  spec.validate();
  return spec;
}

LayerStack::LayerStack(Shape input_shape, std::vector<LayerKind> layers, std::vector<Tensor> params)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), params_(std::move(params)) {
  shapes_ = infer_shapes(input_shape_, layers_);
  slots_.assign(layers_.size(), npos);
  std::size_t slot = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!has_params(layers_[i])) continue;
    slots_[i] = slot;
    Shape wshape, bshape;
    if (const auto* c = std::get_if<Conv2d>(&layers_[i])) {
      wshape = {c->out_channels, shapes_[i][0], c->kernel, c->kernel};
      bshape = {c->out_channels};
    } else {
      const auto& f = std::get<FullyConnected>(layers_[i]);
      wshape = {f.out_dim, shapes_[i][0]};
      bshape = {f.out_dim};
    }
    if (params_.size() < slot + 2 || params_[slot].shape() != wshape ||
        params_[slot + 1].shape() != bshape) {
      throw ShapeError("layer " + std::to_string(i) + " " + describe(layers_[i]) + " expects parameters " +
                       shape_to_string(wshape) + " and " + shape_to_string(bshape));
    }
    slot += 2;
  }
  if (slot != params_.size()) {
    throw ShapeError("layer stack has " + std::to_string(params_.size()) + " parameter tensors, expected " +
                     std::to_string(slot));
  }
}

LayerStack LayerStack::initialize(Shape input_shape, std::vector<LayerKind> layers, std::uint64_t seed) {
  const auto shapes = infer_shapes(input_shape, layers);
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Shape wshape;
    std::size_t fan_in = 0, out = 0;
    if (const auto* c = std::get_if<Conv2d>(&layers[i])) {
      wshape = {c->out_channels, shapes[i][0], c->kernel, c->kernel};
      fan_in = shapes[i][0] * c->kernel * c->kernel;
      out = c->out_channels;
    } else if (const auto* f = std::get_if<FullyConnected>(&layers[i])) {
      wshape = {f->out_dim, shapes[i][0]};
      fan_in = shapes[i][0];
      out = f->out_dim;
    } else {
      continue;
    }
    Rng rng(derive_seed(seed, {i}));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w(wshape);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    params.push_back(std::move(w));
    params.emplace_back(Shape{out});
  }
  return LayerStack(std::move(input_shape), std::move(layers), std::move(params));
}

std::size_t LayerStack::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

std::vector<Tensor> LayerStack::zeros_like_params() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.shape());
  return out;
}

void LayerStack::check_input(const Tensor& x) const {
  if (x.shape() != input_shape_) {
    throw ShapeError("input " + shape_to_string(x.shape()) + " does not match network input " +
                     shape_to_string(input_shape_));
  }
}

Tensor LayerStack::forward(const Tensor& x, std::size_t end) const {
  check_input(x);
  Tensor cur = x;
  for (std::size_t i = 0; i < end; ++i) {
    const std::size_t s = slots_[i];
    cur = std::visit(overloaded{
                         [&](const Conv2d& c) { return nn::conv2d(cur, params_[s], params_[s + 1], c.stride, c.padding); },
                         [&](const MaxPool2d& p) { return nn::maxpool2d(cur, p.window, p.stride); },
                         [&](const Relu&) { return nn::relu(cur); },
                         [&](const Flatten&) { return cur.reshaped({cur.size()}); },
                         [&](const FullyConnected&) { return nn::fully_connected(cur, params_[s], params_[s + 1]); },
                         [&](const Dropout&) { return cur; },
                         [&](const Softmax&) { return nn::softmax(cur); },
                     },
                     layers_[i]);
  }
  return cur;
}

Tensor LayerStack::forward_train(const Tensor& x, std::size_t end, ForwardTrace& trace, Rng& rng) const {
  check_input(x);
  trace.inputs.assign(end, Tensor{});
  trace.masks.assign(end, Tensor{});
  Tensor cur = x;
  for (std::size_t i = 0; i < end; ++i) {
    trace.inputs[i] = cur;
    const std::size_t s = slots_[i];
    cur = std::visit(overloaded{
                         [&](const Conv2d& c) { return nn::conv2d(cur, params_[s], params_[s + 1], c.stride, c.padding); },
                         [&](const MaxPool2d& p) { return nn::maxpool2d(cur, p.window, p.stride); },
                         [&](const Relu&) { return nn::relu(cur); },
                         [&](const Flatten&) { return cur.reshaped({cur.size()}); },
                         [&](const FullyConnected&) { return nn::fully_connected(cur, params_[s], params_[s + 1]); },
                         [&](const Dropout& d) {
                           if (d.rate == 0.0) return cur;
                           trace.masks[i] = nn::dropout_mask(cur.shape(), d.rate, rng);
                           return nn::multiply(cur, trace.masks[i]);
                         },
                         [&](const Softmax&) { return nn::softmax(cur); },
                     },
                     layers_[i]);
  }
  return cur;
}

void LayerStack::backward(const ForwardTrace& trace, std::size_t end, Tensor upstream,
                          std::vector<Tensor>& grads) const {
  if (grads.size() != params_.size()) throw ShapeError("gradient buffer does not match parameters");
  for (std::size_t i = end; i-- > 0;) {
    const Tensor& in = trace.inputs.at(i);
    const std::size_t s = slots_[i];
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                     auto g = nn::conv2d_backward(in, params_[s], c.stride, c.padding, upstream);
                     add_into(grads[s], g.kernels);
                     add_into(grads[s + 1], g.bias);
                     upstream = std::move(g.input);
                   },
                   [&](const MaxPool2d& p) { upstream = nn::maxpool2d_backward(in, p.window, p.stride, upstream); },
                   [&](const Relu&) { upstream = nn::relu_backward(in, upstream); },
                   [&](const Flatten&) { upstream = upstream.reshaped(in.shape()); },
                   [&](const FullyConnected&) {
                     auto g = nn::fully_connected_backward(in, params_[s], upstream);
                     add_into(grads[s], g.weights);
                     add_into(grads[s + 1], g.bias);
                     upstream = std::move(g.input);
                   },
                   [&](const Dropout&) {
                     if (!trace.masks[i].empty()) upstream = nn::multiply(upstream, trace.masks[i]);
                   },
                   [&](const Softmax&) {
                     // J^T u = p * (u - <u, p>)
                     const Tensor p = nn::softmax(in);
                     double dot = 0.0;
                     for (std::size_t k = 0; k < p.size(); ++k) dot += upstream[k] * p[k];
                     for (std::size_t k = 0; k < p.size(); ++k) upstream[k] = p[k] * (upstream[k] - dot);
                   },
               },
               layers_[i]);
  }
}

Network::Network(NetworkSpec spec, LayerStack stack) : spec_(std::move(spec)), stack_(std::move(stack)) {
  spec_.validate();
  if (stack_.layers() != spec_.layers || stack_.input_shape() != spec_.input_shape) {
    throw ShapeError("layer stack does not match network spec '" + spec_.name + "'");
  }
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  return Network(spec, LayerStack::initialize(spec.input_shape, spec.layers, seed));
}

}  // namespace autohead::cnn
