#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "autohead/error.hpp"
#include "autohead/layers.hpp"
#include "autohead/network.hpp"

using namespace autohead;
using namespace autohead::cnn;

namespace {

// 2 conv blocks -> FC64 -> FC2 on 1 x 16 x 16.
NetworkSpec two_block_spec() {
  NetworkSpec s;
  s.name = "two-block";
  s.input_shape = {1, 16, 16};
  s.layers = {Conv2d{4, 3, 1, 1}, Relu{}, MaxPool2d{2, 2}, Conv2d{8, 3, 1, 1}, Relu{}, MaxPool2d{2, 2},
              Flatten{},          FullyConnected{64},      Relu{},           FullyConnected{2}, Softmax{}};
  return s;
}

}  // namespace

TEST(NetworkSpec, HandCountedParameters) {
  const auto spec = two_block_spec();
  ASSERT_NO_THROW(spec.validate());
  const auto net = build_network(spec, 1);
  // conv1 4*1*9+4, conv2 8*4*9+8, fc 64*(8*4*4)+64, fc 2*64+2
  const std::size_t expected = (36 + 4) + (288 + 8) + (64 * 128 + 64) + (128 + 2);
  EXPECT_EQ(net.stack().parameter_count(), expected);
  EXPECT_EQ(spec.classification_start(), 6u);
}

TEST(NetworkSpec, SameSeedSameParameters) {
  const auto a = build_network(two_block_spec(), 42);
  const auto b = build_network(two_block_spec(), 42);
  const auto c = build_network(two_block_spec(), 43);
  EXPECT_EQ(a.stack().params(), b.stack().params());
  EXPECT_NE(a.stack().params(), c.stack().params());
}

TEST(NetworkSpec, FullyConnectedOnFeatureMapsIsRejected) {
  auto spec = two_block_spec();
  spec.layers.erase(spec.layers.begin() + 6);  // drop the flatten
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(NetworkSpec, FinalLayerMustMatchClasses) {
  auto spec = two_block_spec();
  spec.classes = 3;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = two_block_spec();
  spec.layers.pop_back();
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(NetworkSpec, JsonRoundTrip) {
  const auto spec = two_block_spec();
  const nlohmann::json j = spec;
  EXPECT_EQ(j.get<NetworkSpec>(), spec);
}

TEST(Architectures, AllValidateAndEndInAGlobalPool) {
  for (const auto& name : architecture_names()) {
    const auto spec = architecture(name, {1, 32, 32});
    const auto shapes = infer_shapes(spec.input_shape, spec.layers);
    const auto flat = shapes[spec.classification_start()];
    ASSERT_EQ(flat.size(), 3u) << name;
    EXPECT_EQ(flat[1], 1u) << name;
    EXPECT_EQ(flat[2], 1u) << name;
  }
  EXPECT_THROW(architecture("resnet-9000", {1, 32, 32}), ConfigError);
  EXPECT_THROW(architecture("vgg-micro", {1, 30, 30}), ConfigError);
}

TEST(LayerStack, ProbabilitiesSumToOne) {
  const auto net = build_network(architecture("vgg-tiny", {1, 16, 16}), 5);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    Tensor x({1, 16, 16});
    for (auto& v : x.data()) v = rng.uniform();
    const auto p = net.predict(x);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  }
}

TEST(LayerStack, BackwardMatchesCentralDifferencesOnParameters) {
  auto spec = two_block_spec();
  spec.input_shape = {1, 8, 8};
  spec.layers[7] = FullyConnected{6};
  auto net = build_network(spec, 9);
  Rng rng(10);
  Tensor x({1, 8, 8});
  for (auto& v : x.data()) v = rng.uniform();
  const std::size_t label = 1;
  const auto& stack = net.stack();
  const std::size_t n = stack.layers().size();

  ForwardTrace trace;
  Rng drop(0);
  const auto probs = stack.forward_train(x, n, trace, drop);
  auto grads = stack.zeros_like_params();
  stack.backward(trace, n - 1, nn::softmax_cross_entropy_grad(probs, label), grads);

  const double eps = 1e-5;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (std::size_t i = 0; i < grads[t].size(); i += 7) {
      auto& p = net.mutable_stack().mutable_params()[t][i];
      const double keep = p;
      p = keep + eps;
      const double lp = nn::cross_entropy(net.predict(x), label);
      p = keep - eps;
      const double lm = nn::cross_entropy(net.predict(x), label);
      p = keep;
      const double numeric = (lp - lm) / (2 * eps);
      const double a = grads[t][i];
      EXPECT_LE(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-7}), 1e-4)
          << "param " << t << " index " << i;
    }
  }
}

TEST(LayerStack, RejectsWrongInputShape) {
  const auto net = build_network(two_block_spec(), 1);
  EXPECT_THROW(net.predict(Tensor({1, 8, 8})), ShapeError);
}
