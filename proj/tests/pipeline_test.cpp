#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "autohead/error.hpp"
#include "autohead/pipeline.hpp"

using namespace autohead;
using namespace autohead::pipeline;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.out = out;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"data.problems", "1"},      {"data.negatives", "40"},     {"data.positives", "20"},
           {"data.image_size", "16"},   {"train.architectures", "vgg-micro"}, {"train.epochs", "4"},
           {"search.max_candidates", "3"}, {"search.max_seconds", "none"}, {"bench.runs", "3"},
           {"bench.warmup", "1"}}) {
    c.apply_setting(k, v);
  }
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(RunConfigTest, SettingsParse) {
  RunConfig c;
  c.apply_setting("train.architectures", "vgg-micro, vgg-small");
  EXPECT_EQ(c.architectures, (std::vector<std::string>{"vgg-micro", "vgg-small"}));
  c.apply_setting("search.max_seconds", "none");
  EXPECT_FALSE(c.budget.max_wall_clock_seconds.has_value());
  c.apply_setting("search.max_candidates", "7");
  EXPECT_EQ(c.budget.max_candidates, 7u);
  c.apply_setting("split.train", "0.6");
  c.apply_setting("split.val", "0.2");
  c.apply_setting("split.test", "0.2");
  EXPECT_NO_THROW(c.validate());
  for (const auto& key : RunConfig::setting_keys()) EXPECT_NE(key.find_first_not_of("abcdefghijklmnopqrstuvwxyz_."), 0u);
}

TEST(RunConfigTest, RejectsBadSettings) {
  RunConfig c;
  EXPECT_THROW(c.apply_setting("train.nope", "1"), ConfigError);
  EXPECT_THROW(c.apply_setting("train.epochs", "ten"), ConfigError);
  EXPECT_THROW(c.apply_setting("workers", "-2"), ConfigError);

  auto bad = [](const std::string& k, const std::string& v) {
    RunConfig r;
    r.apply_setting(k, v);
    return r;
  };
  EXPECT_THROW(bad("train.architectures", "vgg-huge").validate(), ConfigError);
  EXPECT_THROW(bad("train.architectures", "vgg-micro,vgg-micro").validate(), ConfigError);
  EXPECT_THROW(bad("data.problems", "7").validate(), ConfigError);
  EXPECT_THROW(bad("split.train", "0.9").validate(), ConfigError);
  EXPECT_THROW(bad("workers", "0").validate(), ConfigError);
  EXPECT_THROW(bad("bench.runs", "1").validate(), ConfigError);
  RunConfig unlimited;
  unlimited.apply_setting("search.max_seconds", "none");
  unlimited.apply_setting("search.max_candidates", "none");
  EXPECT_THROW(unlimited.validate(), ConfigError);
}

TEST(RunLockTest, SecondHolderIsRefused) {
  TempDir dir("autohead_lock_test");
  {
    RunLock a(dir.path);
    try {
      RunLock b(dir.path);
      FAIL() << "second lock acquired";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kUsage);
    }
  }
  EXPECT_FALSE(fs::exists(dir.path / ".lock"));
  EXPECT_NO_THROW(RunLock again(dir.path));
}

TEST(PipelineTest, CommandsBeforeDataAreDataErrors) {
  TempDir dir("autohead_pipeline_empty");
  const auto c = tiny(dir.path);
  EXPECT_THROW(cmd_train_cnns(c), DataError);
  EXPECT_THROW(cmd_report(dir.path), DataError);
  EXPECT_FALSE(fs::exists(dir.path / ".lock"));
}

TEST(PipelineTest, TinyRunEndToEnd) {
  TempDir dir("autohead_pipeline_tiny");
  const auto c = tiny(dir.path);
  const auto manifest = cmd_gen_data(c);
  ASSERT_EQ(manifest.at("problems").size(), 1u);
  const std::string problem = manifest.at("problems")[0].at("name");

  const auto nets = cmd_train_cnns(c);
  ASSERT_EQ(nets.size(), 1u);
  EXPECT_TRUE(fs::exists(model_path(dir.path, problem, "vgg-micro")));

  // With one network the weights are [1] and fusion reproduces that network exactly.
  const auto fused = cmd_fuse(c);
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_EQ(fused[0].result.weights.w, std::vector<double>{1.0});
  EXPECT_EQ(fused[0].result.report, nets[0].test);

  const auto searched = cmd_search_head(c);
  ASSERT_EQ(searched.size(), 1u);
  EXPECT_EQ(searched[0].board.base_candidates, 3u);
  EXPECT_TRUE(fs::exists(auto_classifier_path(dir.path, problem)));
  EXPECT_TRUE(fs::exists(leaderboard_path(dir.path, problem)));
  for (const auto& e : searched[0].board.entries) EXPECT_LE(e.validation_auc, searched[0].validation_auc);

  const auto report = cmd_report(dir.path);
  EXPECT_EQ(report.methods, (std::vector<std::string>{"vgg-micro", kFusionMethod, kAutoMethod}));
  const auto table1 = slurp(dir.path / "reports" / "table1.md");
  const auto table2 = slurp(dir.path / "reports" / "table2.csv");
  cmd_report(dir.path);
  EXPECT_EQ(slurp(dir.path / "reports" / "table1.md"), table1);
  EXPECT_EQ(slurp(dir.path / "reports" / "table2.csv"), table2);

  const auto bench = cmd_bench(c);
  EXPECT_TRUE(bench.at("problems").contains(problem));
  cmd_report(dir.path);
  EXPECT_TRUE(fs::exists(dir.path / "timings" / "bench.md"));
  EXPECT_FALSE(fs::exists(dir.path / ".lock"));
}
