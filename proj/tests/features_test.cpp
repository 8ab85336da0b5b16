#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "autohead/error.hpp"
#include "autohead/features.hpp"

using namespace autohead;
using namespace autohead::cnn;

namespace {

TrainedNetwork untrained(std::vector<LayerKind> head, Shape input = {1, 4, 4}) {
  NetworkSpec s;
  s.name = "probe";
  s.input_shape = input;
  s.layers = {Conv2d{3, 3, 1, 1}, Relu{}, MaxPool2d{2, 2}};
  s.layers.insert(s.layers.end(), head.begin(), head.end());
  TrainedNetwork t;
  t.network = build_network(s, 17);
  return t;
}

Tensor image(Rng& rng, Shape shape = {1, 4, 4}) {
  Tensor x(shape);
  for (auto& v : x.data()) v = rng.uniform(-1, 1);
  return x;
}

SampleSet samples(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.inputs.push_back(image(rng));
    s.labels.push_back(i % 3 == 0 ? 1 : 0);
    s.ids.push_back("s" + std::to_string(i));
  }
  return s;
}

}  // namespace

TEST(TruncateHead, KeepsFirstFullyConnectedAndItsActivation) {
  const auto t = untrained({Flatten{}, FullyConnected{256}, Relu{}, FullyConnected{64}, Relu{}, FullyConnected{2}, Softmax{}});
  const auto ex = truncate_head(t);
  EXPECT_EQ(ex.dim, 256u);
  EXPECT_TRUE(ex.warnings.empty());
  ASSERT_EQ(ex.stack.layers().size(), 6u);
  EXPECT_TRUE(std::holds_alternative<Relu>(ex.stack.layers().back()));
  // Parameters come from the trained network unchanged.
  EXPECT_EQ(ex.stack.params()[2], t.network.stack().params()[2]);
}

TEST(TruncateHead, SingleFullyConnectedEndsAtFlattenWithWarning) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{2}, Softmax{}}));
  EXPECT_EQ(ex.dim, 3u * 2 * 2);
  EXPECT_EQ(ex.warnings.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<Flatten>(ex.stack.layers().back()));
}

TEST(TruncateHead, DropsDropoutAndSoftmax) {
  const auto ex = truncate_head(untrained({Flatten{}, Dropout{0.5}, FullyConnected{8}, Relu{}, Dropout{0.5}, FullyConnected{2}, Softmax{}}));
  for (const auto& l : ex.stack.layers()) {
    EXPECT_FALSE(std::holds_alternative<Dropout>(l));
    EXPECT_FALSE(std::holds_alternative<Softmax>(l));
  }
  EXPECT_EQ(ex.dim, 8u);
}

TEST(FeatureExtractor, ReluOutputsAreNonNegativeAndDeterministic) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{16}, Relu{}, FullyConnected{2}, Softmax{}}));
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto x = image(rng);
    const auto f = ex.extract(x);
    ASSERT_EQ(f.size(), ex.dim);
    for (double v : f) EXPECT_GE(v, 0.0);
    EXPECT_EQ(f, ex.extract(x));
  }
}

TEST(FeatureExtractor, MatchesPrefixOfFullNetwork) {
  const auto t = untrained({Flatten{}, FullyConnected{16}, Relu{}, FullyConnected{2}, Softmax{}});
  const auto ex = truncate_head(t);
  Rng rng(4);
  const auto x = image(rng);
  const auto prefix = t.network.stack().forward(x, 6);
  EXPECT_EQ(ex.extract(x), prefix.values());
}

TEST(ExtractFeatures, RowsAlignWithDirectCalls) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{5}, Relu{}, FullyConnected{2}, Softmax{}}));
  const auto s = samples(10, 5);
  const auto table = extract_features(ex, s, {"probe", "set", "train"});
  ASSERT_EQ(table.rows(), 10u);
  EXPECT_EQ(table.dim, 5u);
  const auto row3 = table.row(3);
  EXPECT_EQ(std::vector<double>(row3.begin(), row3.end()), ex.extract(s.inputs[3]));
  EXPECT_EQ(table.labels[3], 1);
  EXPECT_EQ(table.labels[4], 0);
  EXPECT_EQ(table.ids[3], "s3");
}

TEST(ExtractFeatures, EmptySplitKeepsDimension) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{5}, Relu{}, FullyConnected{2}, Softmax{}}));
  const auto table = extract_features(ex, SampleSet{}, {"probe", "set", "val"});
  EXPECT_EQ(table.rows(), 0u);
  EXPECT_EQ(table.dim, 5u);
}

TEST(ExtractFeatures, WrongImageShapeThrows) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{5}, Relu{}, FullyConnected{2}, Softmax{}}));
  SampleSet s;
  s.inputs.push_back(Tensor({1, 5, 5}));
  s.labels.push_back(0);
  EXPECT_THROW(extract_features(ex, s, {}), ShapeError);
}

TEST(FeatureCache, RoundTripIsBitIdentical) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{7}, Relu{}, FullyConnected{2}, Softmax{}}));
  const auto table = extract_features(ex, samples(12, 6), {"probe@1", "problem1@2", "test"});
  const auto path = std::filesystem::temp_directory_path() / "autohead_features_test.aftb";
  save_feature_table(path, table);
  EXPECT_EQ(load_feature_table(path), table);
  std::filesystem::remove(path);
}

TEST(FeatureCache, SelectRowsKeepsOrder) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{3}, Relu{}, FullyConnected{2}, Softmax{}}));
  const auto table = extract_features(ex, samples(6, 7), {});
  const std::vector<std::size_t> pick{4, 1};
  const auto sub = select_rows(table, pick);
  EXPECT_EQ(sub.ids, (std::vector<std::string>{"s4", "s1"}));
  EXPECT_EQ(std::vector<double>(sub.row(0).begin(), sub.row(0).end()),
            std::vector<double>(table.row(4).begin(), table.row(4).end()));
}

TEST(ExtractorFile, RoundTrip) {
  const auto ex = truncate_head(untrained({Flatten{}, FullyConnected{4}, Relu{}, FullyConnected{2}, Softmax{}}));
  std::stringstream ss;
  save_extractor(ss, ex);
  const auto back = load_extractor(ss);
  EXPECT_EQ(back.dim, ex.dim);
  EXPECT_EQ(back.stack.params(), ex.stack.params());
  EXPECT_EQ(back.stack.layers(), ex.stack.layers());
}
