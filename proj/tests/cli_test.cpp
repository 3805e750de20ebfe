#include <gtest/gtest.h>

#include <sstream>

#include "scrub/cli.hpp"
#include "support.hpp"

namespace scrub {
namespace {

using nlohmann::json;
using testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"corrupt"}).code, 1);
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("corrupt"), std::string::npos);
}

TEST(Cli, UnknownDatasetIsValidationError) {
  TempDir dir;
  const auto result = cli({"corrupt", "--dataset", "iris", "--out", (dir / "b").string()});
  EXPECT_EQ(result.code, 1);
  EXPECT_NE(result.err.find("iris"), std::string::npos);
}

TEST(Cli, CorruptBaselineRunReplayReport) {
  TempDir dir;
  const auto bundle = (dir / "bundle").string();
  auto corrupt = cli({"corrupt", "--dataset", "synthetic-default", "--out", bundle});
  ASSERT_EQ(corrupt.code, 0) << corrupt.err;
  EXPECT_GT(json::parse(corrupt.out)["corrupted_cells"].get<int>(), 0);
  for (const char* name : {"train_dirty.csv", "train_clean.csv", "test_clean.csv", "ground_truth_log.csv",
                           "recipe.json", "bundle.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "bundle" / name)) << name;
  }

  const auto baseline = cli({"baseline", "--bundle", bundle, "--out", (dir / "baseline.json").string()});
  ASSERT_EQ(baseline.code, 0) << baseline.err;
  const auto report = json::parse(baseline.out);
  EXPECT_GE(report["gap"].get<double>(), 0.05);
  EXPECT_EQ(testing::read_file(dir / "baseline.json"), baseline.out);

  auto config = run_config_to_json(testing::scripted_config("oracle"));
  config["repeats"] = 2;
  testing::write_file(dir / "run.json", config.dump(2));
  const auto episodes = (dir / "episodes").string();
  const auto run = cli({"run", "--bundle", bundle, "--config", (dir / "run.json").string(), "--episodes", episodes});
  ASSERT_EQ(run.code, 0) << run.err;
  const auto results = json::parse(run.out);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0]["improvement"].get<double>(), report["gap"].get<double>());

  const auto episode_dir = dir / "episodes" / results[0]["run_id"].get<std::string>();
  const auto replay = cli({"replay", episode_dir.string(), "--verify"});
  EXPECT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(replay.out, testing::read_file(episode_dir / "result.json"));

  testing::write_file(episode_dir / "result.json", "{}");
  EXPECT_EQ(cli({"replay", (episode_dir / "transcript.jsonl").string(), "--verify"}).code, 2);
  testing::write_file(episode_dir / "result.json", replay.out);

  const auto summary = cli({"report", "--episodes", episodes});
  ASSERT_EQ(summary.code, 0) << summary.err;
  EXPECT_EQ(summary.out.rfind("dataset,agent,hint_level,repeats", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "episodes" / "report" / "summary.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "episodes" / "report" / "toolmix.csv"));
}

TEST(Cli, SeedOverridesMasterSeed) {
  TempDir dir;
  ASSERT_EQ(cli({"corrupt", "--dataset", "synthetic-default", "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(cli({"corrupt", "--dataset", "synthetic-default", "--out", (dir / "b").string()}).code, 0);
  ASSERT_EQ(cli({"corrupt", "--dataset", "synthetic-default", "--seed", "99", "--out", (dir / "c").string()}).code, 0);
  EXPECT_EQ(testing::read_file(dir / "a" / "train_dirty.csv"), testing::read_file(dir / "b" / "train_dirty.csv"));
  EXPECT_NE(testing::read_file(dir / "a" / "train_dirty.csv"), testing::read_file(dir / "c" / "train_dirty.csv"));
  EXPECT_EQ(testing::read_file(dir / "a" / "train_clean.csv"), testing::read_file(dir / "c" / "train_clean.csv"));
}

TEST(Cli, RuntimeErrorsExitTwo) {
  TempDir dir;
  EXPECT_EQ(cli({"baseline", "--bundle", (dir / "missing").string()}).code, 2);
  EXPECT_EQ(cli({"replay", (dir / "missing").string()}).code, 2);
  testing::write_file(dir / "bad.json", R"({"token_budget": 0})");
  EXPECT_EQ(cli({"run", "--bundle", (dir / "missing").string(), "--config", (dir / "bad.json").string()}).code, 1);
}

TEST(Cli, DatasetNeedsConfigEntry) {
  TempDir dir;
  const auto result = cli({"corrupt", "--dataset", "meat_consumption", "--out", (dir / "m").string()});
  EXPECT_EQ(result.code, 1);
  EXPECT_NE(result.err.find("datasets config"), std::string::npos);
}

}  // namespace
}  // namespace scrub
