#pragma once

// Research-question grids: environments x reward modes x adversary counts x
// seeds, each point trained (or loaded) and evaluated, aggregated into win-rate
// tables with per-seed raw files next to them.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nalab/config.hpp"
#include "nalab/evaluation.hpp"
#include "nalab/training.hpp"

namespace nalab {

struct GridEnv {
  std::string label;
  EnvConfig env;
};

struct ExperimentSpec {
  std::string id = "custom";
  std::vector<GridEnv> envs;
  std::vector<RewardMode> modes;
  std::vector<int> adversary_counts;  // empty: each environment's own count
  std::vector<std::uint64_t> seeds;
  int eval_episodes = 200;
  TrainingConfig victim;
  TrainingConfig adversary;
  bool defense = false;  // retrain victims against the frozen adversaries
  bool train = true;     // false: load every policy from checkpoint_dir
  bool resume = false;   // train only the policies missing from checkpoint_dir
  std::filesystem::path checkpoint_dir;
  int workers = 1;

  bool empty() const { return envs.empty() || modes.empty() || seeds.empty(); }
  void validate() const;

  // Keys under "experiment." plus "env", "grid.<label>", "victim" and
  // "adversary" sections. Known ids (rq1..rq5) supply grid defaults.
  static ExperimentSpec from_kv(const KeyValueConfig& kv);
};

// Default-valued keys for one research question, overlaid by user config.
KeyValueConfig experiment_preset(const std::string& id);

struct PointResult {
  std::string label;
  RewardMode mode = RewardMode::EstimationBased;
  int adversaries = 0;
  std::uint64_t seed = 0;
  double victims_no_attack = 0.0;  // victims' own training condition
  double under_attack = 0.0;
  double no_attack = 0.0;
  double no_neutrals = 0.0;
  std::optional<int> episodes_to_half;
  // Defense grids only.
  double retrained_under_attack = 0.0;
  double retrained_no_attack = 0.0;
  double retrained_no_neutrals = 0.0;
};

struct ExperimentResult {
  WinRateTable table;
  std::vector<PointResult> points;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> artifacts;
};

std::string points_csv(const std::vector<PointResult>& points);

// Executes the grid and writes table.csv, points.csv, long.csv, curves/ and
// manifests/ below `out_dir`. DependencyError listing every missing
// checkpoint when training is disabled.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                                const std::function<void(const std::string&)>& log = {});

}  // namespace nalab
