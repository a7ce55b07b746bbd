#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "nalab/manifest.hpp"

using namespace nalab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("nalab_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<std::string> quick_victim(const fs::path& out) {
  return {"train-victim", "--out", out.string(), "--seed", "4",
          "--set", "victim.episodes=20", "--set", "victim.eval_interval=10",
          "--set", "victim.eval_episodes=4", "--set", "victim.competence_episodes=4",
          "--set", "victim.qmix.hidden_units=8", "--set", "victim.qmix.hidden_layers=1",
          "--set", "victim.qmix.batch_size=4", "--set", "victim.competence_floor=0"};
}

}  // namespace

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = run({"fly"});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
  EXPECT_EQ(run({}).code, cli::kExitConfig);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  const auto dir = scratch("badkey");
  const auto r = run({"grad-check", "--out", dir.string(), "--set", "victim.epsiodes=3"});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("victim.epsiodes"), std::string::npos);

  fs::create_directories(dir);
  std::ofstream(dir / "c.cfg") << "seed = 3\nenv.skirmish.widht = 9\n";
  const auto f = run({"grad-check", "--config", (dir / "c.cfg").string(), "--out", dir.string()});
  EXPECT_EQ(f.code, cli::kExitConfig);
  EXPECT_NE(f.err.find("env.skirmish.widht"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, MissingVictimCheckpointIsADependencyError) {
  const auto dir = scratch("missing");
  EXPECT_EQ(run({"train-adversary", "--out", dir.string()}).code, cli::kExitDependency);
  const auto r = run({"evaluate", "--out", dir.string(), "--set",
                      "paths.victims=/nonexistent/victims.policy"});
  EXPECT_EQ(r.code, cli::kExitDependency);
  EXPECT_NE(r.err.find("/nonexistent/victims.policy"), std::string::npos);
  EXPECT_EQ(RunManifest::load(dir / "manifest.json").status, "dependency-error");
  fs::remove_all(dir);
}

TEST(Cli, TrainVictimWritesManifestAndArtifacts) {
  const auto dir = scratch("victim");
  const auto r = run(quick_victim(dir));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto m = RunManifest::load(dir / "manifest.json");
  EXPECT_EQ(m.status, "complete");
  EXPECT_EQ(m.command, "train-victim");
  EXPECT_EQ(m.seeds, (std::vector<std::uint64_t>{4}));
  EXPECT_TRUE(fs::exists(dir / "config.archived.cfg"));
  EXPECT_NE(std::find(m.artifacts.begin(), m.artifacts.end(), fs::path("victims_metrics.csv")),
            m.artifacts.end());

  // Evaluate and attack with the produced policy.
  const auto policy = (dir / "victims.policy").string();
  const auto e = run({"evaluate", "--out", (dir / "eval").string(), "--set",
                      "paths.victims=" + policy, "--set", "evaluation.episodes=4",
                      "--workers", "2"});
  EXPECT_EQ(e.code, cli::kExitOk) << e.err;
  EXPECT_TRUE(fs::exists(dir / "eval" / "evaluation.csv"));
  fs::remove_all(dir);
}

TEST(Cli, CompetenceFloorFailureExitsWithTrainingFault) {
  const auto dir = scratch("floor");
  auto args = quick_victim(dir);
  args.back() = "victim.competence_floor=1";
  args.push_back("--set");
  args.push_back("env.skirmish.horizon=2");
  const auto r = run(args);
  EXPECT_EQ(r.code, cli::kExitTraining);
  EXPECT_NE(r.err.find("competence"), std::string::npos);
  EXPECT_EQ(RunManifest::load(dir / "manifest.json").status, "training-fault");
  fs::remove_all(dir);
}

TEST(Cli, RerunFromArchivedConfigIsBitIdentical) {
  const auto dir = scratch("repro");
  ASSERT_EQ(run(quick_victim(dir / "a")).code, cli::kExitOk);
  const auto m = RunManifest::load(dir / "a" / "manifest.json");
  const auto r = run({m.command, "--config", (dir / "a" / m.archived_config).string(), "--out",
                      (dir / "b").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(slurp(dir / "a" / "victims_metrics.csv"), slurp(dir / "b" / "victims_metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "victims.policy"), slurp(dir / "b" / "victims.policy"));
  EXPECT_EQ(RunManifest::load(dir / "b" / "manifest.json").config_hash, m.config_hash);
  fs::remove_all(dir);
}

TEST(Cli, OracleAndGradChecksPass) {
  const auto dir = scratch("checks");
  const auto o = run({"oracle-check", "--out", (dir / "o").string(), "--set",
                      "oracle.fixtures=" + std::string(NALAB_SOURCE_DIR) + "/fixtures/oracle"});
  EXPECT_EQ(o.code, cli::kExitOk) << o.out << o.err;
  const auto g = run({"grad-check", "--out", (dir / "g").string(), "--set", "gradcheck.seeds=2"});
  EXPECT_EQ(g.code, cli::kExitOk) << g.out;
  EXPECT_NE(slurp(dir / "g" / "gradcheck.csv").find("mixer"), std::string::npos);
  const auto strict = run({"oracle-check", "--out", (dir / "s").string(), "--set",
                           "oracle.tolerance=0"});
  EXPECT_EQ(strict.code, cli::kExitCheckFailed);
  fs::remove_all(dir);
}

TEST(Cli, SchemaIncludesDynamicGridSections) {
  KeyValueConfig user;
  user.set("grid.tall.skirmish.height", "3");
  const auto schema = cli::config_schema(user);
  EXPECT_TRUE(schema.contains("grid.tall.skirmish.height"));
  EXPECT_TRUE(schema.contains("victim.qmix.gamma"));
  EXPECT_TRUE(schema.contains("experiment.seeds"));
}
