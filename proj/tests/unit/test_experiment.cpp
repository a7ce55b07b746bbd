#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nalab/errors.hpp"
#include "nalab/experiment.hpp"

using namespace nalab;

namespace {

KeyValueConfig tiny_grid(const std::string& id) {
  KeyValueConfig kv;
  kv.set("experiment.id", id);
  kv.set("experiment.eval_episodes", "6");
  for (const std::string phase : {"victim", "adversary"}) {
    kv.set(phase + ".episodes", "12");
    kv.set(phase + ".eval_interval", "12");
    kv.set(phase + ".eval_episodes", "4");
    kv.set(phase + ".competence_episodes", "4");
    kv.set(phase + ".warmup_episodes", "4");
    kv.set(phase + ".reward_batch", "4");
    kv.set(phase + ".qmix.hidden_units", "8");
    kv.set(phase + ".qmix.hidden_layers", "1");
    kv.set(phase + ".qmix.mixer_embed", "4");
    kv.set(phase + ".qmix.batch_size", "4");
  }
  return kv;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Experiment, PresetsDefineTheGrids) {
  const auto rq1 = ExperimentSpec::from_kv(tiny_grid("rq1"));
  ASSERT_EQ(rq1.envs.size(), 2u);
  EXPECT_EQ(rq1.envs[1].env.name(), "corridor");
  const auto rq2 = ExperimentSpec::from_kv(tiny_grid("rq2"));
  EXPECT_EQ(rq2.modes.size(), 3u);
  EXPECT_TRUE(rq2.adversary.victim_reward_access);
  const auto rq3 = ExperimentSpec::from_kv(tiny_grid("rq3"));
  EXPECT_EQ(rq3.adversary_counts, (std::vector<int>{1, 2, 3}));
  const auto rq4 = ExperimentSpec::from_kv(tiny_grid("rq4"));
  ASSERT_EQ(rq4.envs.size(), 3u);
  EXPECT_EQ(std::get<SkirmishConfig>(rq4.envs[2].env.model).opponents, 3);
  const auto rq5 = ExperimentSpec::from_kv(tiny_grid("rq5"));
  EXPECT_TRUE(rq5.defense);
  EXPECT_EQ(rq5.seeds.size(), 5u);
}

TEST(Experiment, FewerThanFiveSeedsIsRejected) {
  auto kv = tiny_grid("rq3");
  kv.set("experiment.seeds", "1,2,3");
  EXPECT_THROW(ExperimentSpec::from_kv(kv), ConfigError);
}

TEST(Experiment, TraditionalNeedsVictimRewardAccess) {
  auto kv = tiny_grid("custom");
  kv.set("experiment.modes", "traditional");
  EXPECT_THROW(ExperimentSpec::from_kv(kv), ConfigError);
  kv.set("adversary.victim_reward_access", "true");
  EXPECT_NO_THROW(ExperimentSpec::from_kv(kv));
}

TEST(Experiment, MissingCheckpointsAreAllListed) {
  auto kv = tiny_grid("rq3");
  kv.set("experiment.train", "false");
  kv.set("experiment.checkpoint_dir", "/nonexistent/ckpt");
  const auto spec = ExperimentSpec::from_kv(kv);
  try {
    run_experiment(spec, std::filesystem::temp_directory_path() / "nalab_missing");
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("small_seed5_victims.policy"), std::string::npos);
    EXPECT_NE(msg.find("small_estimation_based_adv3_seed5_adversaries.policy"), std::string::npos);
  }
}

TEST(Experiment, EmptyGridWritesEmptyTableAndWarns) {
  auto kv = tiny_grid("custom");
  kv.set("experiment.modes", "");
  const auto spec = ExperimentSpec::from_kv(kv);
  const auto dir = std::filesystem::temp_directory_path() / "nalab_empty_grid";
  std::filesystem::remove_all(dir);
  const auto res = run_experiment(spec, dir);
  EXPECT_EQ(res.warnings.size(), 1u);
  EXPECT_TRUE(res.table.rows.empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "table.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Experiment, TinyGridRunsAndReloadsFromCheckpoints) {
  const auto dir = std::filesystem::temp_directory_path() / "nalab_tiny_grid";
  std::filesystem::remove_all(dir);
  auto kv = tiny_grid("rq5");
  const auto spec = ExperimentSpec::from_kv(kv);
  const auto res = run_experiment(spec, dir);
  ASSERT_EQ(res.points.size(), 5u);
  ASSERT_EQ(res.table.rows.size(), 2u);
  const auto& row = res.table.rows[0];
  std::vector<double> red;
  for (const auto& p : res.points) red.push_back(p.no_attack - p.under_attack);
  EXPECT_NEAR(row.reduction, mean(red), 1e-12);
  for (const char* f : {"table.csv", "points.csv", "long.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "manifests"));

  kv.set("experiment.train", "false");
  kv.set("experiment.defense", "false");
  kv.set("experiment.checkpoint_dir", (dir / "checkpoints").string());
  const auto again = run_experiment(ExperimentSpec::from_kv(kv), dir / "reload");
  ASSERT_EQ(again.points.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(again.points[i].under_attack, res.points[i].under_attack);
    EXPECT_EQ(again.points[i].no_attack, res.points[i].no_attack);
  }
  EXPECT_FALSE(slurp(dir / "reload" / "table.csv").empty());
  std::filesystem::remove_all(dir);
}
