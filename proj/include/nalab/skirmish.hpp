#pragma once

// Grid skirmish: a victim squad must eliminate a scripted opponent squad
// before the horizon while neutral units share the grid.
//
// Step resolution order (deterministic):
//   1. scripted opponents choose actions from the pre-step state;
//   2. movement, processed in AgentId order (adversaries, victims, opponents;
//      lower index first); a move succeeds if the target cell is in bounds
//      and free at that moment, otherwise the unit stays;
//   3. attacks, re-checked against post-movement positions (range and line of
//      fire); damage is applied simultaneously;
//   4. units at zero health are removed;
//   5. termination: all opponents dead -> success if a victim survives, all
//      victims dead or step_count == horizon -> failure.

#include <array>
#include <cstdint>
#include <vector>

#include "nalab/config.hpp"
#include "nalab/core.hpp"

namespace nalab {

struct SkirmishConfig {
  int width = 7;
  int height = 2;
  int victims = 2;
  int opponents = 2;
  int adversaries = 2;
  int unit_health = 5;
  int opponent_health = 3;
  int adversary_health = 5;
  int attack_range = 2;
  int attack_damage = 1;
  int sight_range = 3;
  int horizon = 60;
  int neutral_slots = 3;
  bool line_of_fire = true;
  bool adversaries_attack_opponents = false;
  bool victims_attack_neutrals = false;

  void validate() const;
  static SkirmishConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
};

struct SkirmishUnit {
  int x = 0;
  int y = 0;
  int health = 0;

  bool alive() const { return health > 0; }
  bool operator==(const SkirmishUnit&) const = default;
};

struct SkirmishState {
  std::vector<SkirmishUnit> victims;
  std::vector<SkirmishUnit> opponents;
  std::vector<SkirmishUnit> adversaries;
  int step_count = 0;
  bool terminal = false;
  bool victim_success = false;
  Rng rng;

  bool operator==(const SkirmishState&) const = default;
};

class Skirmish {
 public:
  // Action table. Victims: [no-op, N, S, E, W, attack opponent k...,
  // attack neutral k... (if enabled)]. Adversaries: [no-op, N, S, E, W,
  // attack opponent k... (if enabled)].
  static constexpr int kNoop = 0;
  static constexpr int kMoveCount = 4;
  static constexpr int kFirstAttack = 1 + kMoveCount;
  static constexpr std::array<std::array<int, 2>, 4> kMoves{{{0, -1}, {0, 1}, {1, 0}, {-1, 0}}};
  static constexpr int kUnitFeatures = 5;
  static constexpr int kSelfFeatures = 4;

  explicit Skirmish(SkirmishConfig config);

  const SkirmishConfig& config() const { return config_; }
  const EnvDescriptor& descriptor() const { return descriptor_; }

  SkirmishState reset(std::uint64_t seed) const;
  std::pair<SkirmishState, StepOutcome> step(const SkirmishState& state,
                                             const JointAction& action) const;
  Observation observe(const SkirmishState& state, const AgentId& agent) const;
  ActionMask available_actions(const SkirmishState& state, const AgentId& agent) const;
  FailureSignalVector failure_signals(const SkirmishState& prev, const JointAction& action,
                                      const SkirmishState& next) const;
  double native_reward(const SkirmishState& prev, const SkirmishState& next) const;
  std::vector<double> state_features(const SkirmishState& state) const;

  // Scripted opponent policy: attack the nearest attackable victim, else
  // advance toward the nearest victim.
  int opponent_action(const SkirmishState& state, int index) const;

  bool in_range(const SkirmishUnit& from, const SkirmishUnit& to,
                const SkirmishState& state) const;

 private:
  const SkirmishUnit* unit(const SkirmishState& state, const AgentId& id) const;
  bool occupied(const SkirmishState& state, int x, int y) const;
  void fill_slot(double* out, const SkirmishUnit& self, const SkirmishUnit& other, int max_health,
                 bool attackable) const;

  SkirmishConfig config_;
  EnvDescriptor descriptor_;
};

}  // namespace nalab
