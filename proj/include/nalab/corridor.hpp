#pragma once

// Multi-lane corridor: victim vehicles must reach the goal column before the
// horizon without colliding or breaking the traffic rule (never stand still
// on the carriageway). Background vehicles keep lane at constant speed.
//
// Each step: vehicles are processed front to back (descending column, then
// AgentId order). A vehicle first changes lane, then adjusts speed, then
// advances cell by cell. A victim that runs into an occupied cell collides;
// adversaries and background vehicles stop behind obstacles instead, so a
// neutral unit never initiates contact.

#include <cstdint>
#include <vector>

#include "nalab/config.hpp"
#include "nalab/core.hpp"

namespace nalab {

struct CorridorConfig {
  int lanes = 2;
  int length = 10;
  int victims = 1;
  int adversaries = 1;
  int other_vehicles = 2;
  int horizon = 40;
  int speed_levels = 3;
  int max_violations = 3;
  int sight_columns = 2;
  int neutral_slots = 3;

  void validate() const;
  static CorridorConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
};

struct Vehicle {
  int lane = 0;
  int col = 0;
  int speed = 0;
  bool active = true;  // still on the road
  bool crashed = false;

  bool operator==(const Vehicle&) const = default;
};

struct CorridorState {
  std::vector<Vehicle> victims;
  std::vector<Vehicle> adversaries;
  std::vector<Vehicle> others;
  std::vector<int> arrived;  // per victim, 1 once the goal column is reached
  int violations = 0;
  int step_count = 0;
  bool terminal = false;
  bool victim_success = false;
  Rng rng;

  bool operator==(const CorridorState&) const = default;
};

class Corridor {
 public:
  static constexpr int kIdle = 0;
  static constexpr int kFaster = 1;
  static constexpr int kSlower = 2;
  static constexpr int kLaneLeft = 3;
  static constexpr int kLaneRight = 4;
  static constexpr int kActionCount = 5;
  static constexpr int kUnitFeatures = 4;
  static constexpr int kSelfFeatures = 4;

  explicit Corridor(CorridorConfig config);

  const CorridorConfig& config() const { return config_; }
  const EnvDescriptor& descriptor() const { return descriptor_; }
  int goal_column() const { return config_.length - 1; }

  CorridorState reset(std::uint64_t seed) const;
  std::pair<CorridorState, StepOutcome> step(const CorridorState& state,
                                             const JointAction& action) const;
  Observation observe(const CorridorState& state, const AgentId& agent) const;
  ActionMask available_actions(const CorridorState& state, const AgentId& agent) const;
  FailureSignalVector failure_signals(const CorridorState& prev, const JointAction& action,
                                      const CorridorState& next) const;
  double native_reward(const CorridorState& prev, const CorridorState& next) const;
  std::vector<double> state_features(const CorridorState& state) const;

 private:
  const Vehicle& vehicle(const CorridorState& state, const AgentId& id) const;
  bool victim_at(const CorridorState& state, int lane, int col) const;

  CorridorConfig config_;
  EnvDescriptor descriptor_;
};

}  // namespace nalab
