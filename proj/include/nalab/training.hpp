#pragma once

// Two-phase pipeline: victims learn their task against randomly acting
// neutrals, then victims are frozen and the neutral party learns to make them
// fail. A defense phase retrains victims against frozen adversaries.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nalab/config.hpp"
#include "nalab/evaluation.hpp"
#include "nalab/qmix.hpp"
#include "nalab/reward.hpp"
#include "nalab/rollout.hpp"
#include "nalab/simulation.hpp"

namespace nalab {

struct TrainingConfig {
  int episodes = 3000;
  int updates_per_episode = 1;
  int eval_interval = 500;
  int eval_episodes = 200;
  double competence_floor = 0.8;
  int competence_episodes = 200;
  std::uint64_t seed = 1;

  RewardMode reward_mode = RewardMode::EstimationBased;
  bool victim_reward_access = false;
  std::vector<double> weights;  // empty: environment default
  double r_fail = 20.0;
  double estimate_clip = 5.0;
  int warmup_episodes = 50;
  int reward_hidden = 32;
  double reward_learning_rate = 1e-3;
  int reward_batch = 16;

  QmixConfig qmix;

  void validate() const;
  static TrainingConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
};

std::vector<double> default_weights(const EnvConfig& env);
WeightVector resolve_weights(const EnvConfig& env, const TrainingConfig& config);

struct MetricRow {
  int episode = 0;
  double win_rate = 0.0;
  double mean_episode_reward = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);

// Optional artifacts; an empty directory disables writing.
struct TrainingIo {
  std::filesystem::path dir;
  std::string tag = "run";
  std::function<void(const std::string&)> log;
};

struct VictimTrainingResult {
  FrozenPolicy policy;
  std::vector<MetricRow> metrics;
  WinRate no_attack;
  bool competent = false;
};

// Victims learn on their native reward with neutrals acting uniformly at
// random. TrainingFault when no episodes are configured.
VictimTrainingResult train_victims(const EnvConfig& env, const TrainingConfig& config,
                                   const TrainingIo& io = {});

// Throws TrainingFault naming the measured rate when below the floor.
void require_competent(const VictimTrainingResult& result, double floor);

struct AdversaryTrainingResult {
  FrozenPolicy policy;
  RewardModel reward_model;
  std::vector<MetricRow> metrics;
  WinRate under_attack;
  // First evaluation episode at which the win rate reached <= 0.5, if any.
  std::optional<int> episodes_to_half;
  std::uint64_t victim_checksum = 0;
};

// The learner only ever sees the victims through their greedy actions.
AdversaryTrainingResult train_adversaries(const EnvConfig& env, const FrozenPolicy& victims,
                                          const TrainingConfig& config,
                                          const TrainingIo& io = {});

struct DefenseResult {
  FrozenPolicy policy;
  std::vector<MetricRow> metrics;
  WinRate under_attack_before, under_attack_after;
  WinRate no_attack_before, no_attack_after;
  std::uint64_t adversary_checksum = 0;
};

// Retrains victims from scratch against frozen adversaries (random neutrals
// when `adversaries` is null) and compares with `original`.
DefenseResult retrain_victims_defense(const EnvConfig& env, const FrozenPolicy* adversaries,
                                      const FrozenPolicy& original, const TrainingConfig& config,
                                      const TrainingIo& io = {});

}  // namespace nalab
