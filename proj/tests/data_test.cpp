#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "autohead/data.hpp"
#include "autohead/error.hpp"
#include "oracles.hpp"

using namespace autohead;
using namespace autohead::data;
namespace fs = std::filesystem;

namespace {

ProblemDataset counted(std::size_t negatives, std::size_t positives) {
  ProblemDataset d;
  d.name = "counted";
  for (std::size_t i = 0; i < positives; ++i) d.images.push_back({"defect/" + std::to_string(i), Tensor({1, 2, 2}), kDefect});
  for (std::size_t i = 0; i < negatives; ++i) d.images.push_back({"no_defect/" + std::to_string(i), Tensor({1, 2, 2}), kNoDefect});
  return d;
}

std::size_t positives_in(const ProblemDataset& d, const std::vector<std::size_t>& idx) {
  std::size_t n = 0;
  for (auto i : idx) n += d.images[i].label == kDefect;
  return n;
}

double mean_intensity_auc(const ProblemDataset& d) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& im : d.images) {
    const auto& px = im.pixels.data();
    s.push_back(std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size()));
    y.push_back(im.label);
  }
  return oracle::pair_count_auc(s, y);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(SplitTest, PerClassFloorCounts) {
  const auto d = counted(1000, 150);
  const auto s = stratified_split(d, {}, 7);
  EXPECT_EQ(s.train.size(), 805u);
  EXPECT_EQ(s.val.size(), 172u);
  EXPECT_EQ(s.test.size(), 173u);
  EXPECT_EQ(positives_in(d, s.train), 105u);
  EXPECT_EQ(positives_in(d, s.val), 22u);
  EXPECT_EQ(positives_in(d, s.test), 23u);

  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), d.images.size());
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST(SplitTest, EverythingToTraining) {
  const auto d = counted(10, 5);
  const auto s = stratified_split(d, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train.size(), 15u);
  EXPECT_TRUE(s.val.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(SplitTest, SeedControlsTheAssignment) {
  const auto d = counted(100, 20);
  EXPECT_EQ(stratified_split(d, {}, 3).train, stratified_split(d, {}, 3).train);
  EXPECT_NE(stratified_split(d, {}, 3).train, stratified_split(d, {}, 4).train);
}

TEST(SplitTest, RejectsBadInputs) {
  EXPECT_THROW(stratified_split(counted(10, 2), {}, 1), DataError);
  EXPECT_THROW(stratified_split(counted(10, 5), {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST(SplitTest, JsonRoundTripById) {
  const auto d = counted(30, 6);
  const auto s = stratified_split(d, {}, 2);
  const auto back = split_from_json(split_to_json(s, d), d);
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.val, s.val);
  EXPECT_EQ(back.test, s.test);
  auto shrunk = d;
  shrunk.images.pop_back();
  EXPECT_THROW(split_from_json(split_to_json(s, d), shrunk), DataError);
}

TEST(SyntheticTest, DeterministicAndOrdered) {
  SyntheticProblemSpec spec;
  spec.negatives = 5;
  spec.positives = 3;
  spec.seed = 4;
  const auto a = generate_synthetic_problem(spec), b = generate_synthetic_problem(spec);
  ASSERT_EQ(a.images.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(a.images[i].id, b.images[i].id);
    EXPECT_TRUE(std::ranges::equal(a.images[i].pixels.data(), b.images[i].pixels.data()));
    EXPECT_EQ(a.images[i].label, i < 3 ? kDefect : kNoDefect);
    const auto [lo, hi] = std::minmax_element(a.images[i].pixels.data().begin(), a.images[i].pixels.data().end());
    EXPECT_GE(*lo, 0.0);
    EXPECT_LE(*hi, 1.0);
  }
}

TEST(SyntheticTest, ZeroContrastIsIndistinguishable) {
  for (auto kind : {DefectKind::kBlob, DefectKind::kScratch}) {
    SyntheticProblemSpec spec;
    spec.contrast = 0.0;
    spec.defect = kind;
    spec.negatives = 100;
    spec.positives = 100;
    spec.seed = 11;
    EXPECT_NEAR(mean_intensity_auc(generate_synthetic_problem(spec)), 0.5, 0.1);
  }
}

TEST(SyntheticTest, StrongDefectsShiftTheMean) {
  for (const auto& spec : synthetic_suite(0.8, 0.05, 32, 100, 100, 5)) {
    EXPECT_GE(mean_intensity_auc(generate_synthetic_problem(spec)), 0.99) << spec.name;
  }
}

TEST(SyntheticTest, SuiteHasSixDistinctProblems) {
  const auto suite = synthetic_suite(0.6, 0.1, 32, 10, 3, 0);
  ASSERT_EQ(suite.size(), 6u);
  std::set<std::string> names;
  for (const auto& s : suite) names.insert(s.name);
  EXPECT_EQ(names.size(), 6u);
  EXPECT_NE(suite[0].defect, suite[1].defect);
  nlohmann::json j = suite[2];
  EXPECT_EQ(j.get<SyntheticProblemSpec>().grating_frequency, suite[2].grating_frequency);
}

TEST(SyntheticTest, OversizedDefectIsRejected) {
  SyntheticProblemSpec spec;
  spec.image_size = 8;
  spec.defect_size = 10.0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(LoaderTest, ReadsClassFoldersSortedByName) {
  TempDir dir("autohead_loader_test");
  SyntheticProblemSpec spec;
  spec.image_size = 16;
  spec.negatives = 2;
  spec.positives = 3;
  const auto d = generate_synthetic_problem(spec);
  write_problem_directory(d, dir.path / "p");
  const auto back = load_problem_directory(dir.path / "p", 16);
  EXPECT_EQ(back.count(kDefect), 3u);
  EXPECT_EQ(back.count(kNoDefect), 2u);
  EXPECT_EQ(back.name, "p");
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    EXPECT_EQ(back.images[i].id, d.images[i].id);
    for (std::size_t k = 0; k < d.images[i].pixels.size(); ++k) {
      EXPECT_NEAR(back.images[i].pixels[k], d.images[i].pixels[k], 0.5 / 255.0 + 1e-12);
    }
  }
  const auto resized = load_problem_directory(dir.path / "p", 8);
  EXPECT_EQ(resized.images[0].pixels.shape(), (Shape{1, 8, 8}));
}

TEST(LoaderTest, EmptyOrMissingFolderIsADataError) {
  TempDir dir("autohead_loader_empty");
  fs::create_directories(dir.path / "p" / "defect");
  fs::create_directories(dir.path / "p" / "no_defect");
  EXPECT_THROW(load_problem_directory(dir.path / "p", 16), DataError);
  EXPECT_THROW(load_problem_directory(dir.path / "absent", 16), DataError);
}

TEST(PngTest, RoundTripQuantizesToEightBits) {
  TempDir dir("autohead_png_test");
  Tensor img({1, 3, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 14.0;
  write_png_gray(dir.path / "a.png", img);
  const auto back = read_png_gray(dir.path / "a.png");
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 0.5 / 255.0 + 1e-12);
  EXPECT_THROW(read_png_gray(dir.path / "missing.png"), DataError);
}

TEST(ResizeTest, ConstantImageStaysConstant) {
  Tensor img({1, 4, 6});
  for (auto& v : img.data()) v = 0.3;
  const auto r = resize_bilinear(img, 7, 3);
  EXPECT_EQ(r.shape(), (Shape{1, 7, 3}));
  for (double v : r.data()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(BatchTest, LastBatchIsPartial) {
  const auto b = epoch_batches(25, 10, 1);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 10u);
  EXPECT_EQ(b[1].size(), 10u);
  EXPECT_EQ(b[2].size(), 5u);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(25);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  EXPECT_EQ(all, expect);
  EXPECT_EQ(epoch_batches(25, 10, 1), b);
  EXPECT_NE(epoch_batches(25, 10, 2), b);
  EXPECT_THROW(epoch_batches(5, 0, 1), ConfigError);
}
