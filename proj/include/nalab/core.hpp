#pragma once

// Shared vocabulary of the multi-party Dec-POMDP: parties, agents, joint
// actions, step outcomes and recorded episodes.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace nalab {

using Rng = std::mt19937_64;
using Observation = std::vector<double>;
using ActionMask = std::vector<bool>;
using FailureSignalVector = std::vector<double>;

enum class Party : std::uint8_t { Adversary = 0, Victim = 1, Third = 2 };

std::string to_string(Party party);

struct AgentId {
  Party party = Party::Victim;
  int index = 0;

  auto operator<=>(const AgentId&) const = default;
};

std::string to_string(const AgentId& id);

// Actions of the two controllable parties. Third-party units (scripted
// opponents, background traffic) are resolved inside the environment.
struct JointAction {
  std::vector<int> victims;
  std::vector<int> adversaries;

  int at(const AgentId& id) const;
};

struct StepOutcome {
  bool terminal = false;
  bool victim_success = false;
  bool victim_failed = false;
  FailureSignalVector failure_signals;
};

struct FailurePathDescriptor {
  int id = 0;
  std::string name;
  std::string description;
};

struct RoleLayout {
  int count = 0;
  int obs_size = 0;
  std::vector<std::string> action_names;

  int action_count() const { return static_cast<int>(action_names.size()); }
};

// Static metadata of an environment instance: feature layouts, action tables
// and the failure paths it reports.
struct EnvDescriptor {
  std::string name;
  int horizon = 0;
  RoleLayout victims;
  RoleLayout adversaries;
  int third_count = 0;
  int state_size = 0;
  std::vector<FailurePathDescriptor> failure_paths;

  int failure_path_count() const { return static_cast<int>(failure_paths.size()); }
};

struct PartyStep {
  std::vector<Observation> obs;
  std::vector<ActionMask> masks;
  std::vector<int> actions;
};

struct StepRecord {
  PartyStep victims;
  PartyStep adversaries;
  std::vector<double> state;  // global features; oracle and ablation use only
  FailureSignalVector signals;
  double native_reward = 0.0;    // victims' own task reward for this step
  double reward_estimate = 0.0;  // adversary reward used at rollout time
  bool terminal = false;
};

struct EpisodeTrajectory {
  std::vector<StepRecord> records;
  StepOutcome final_outcome;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(records.size()); }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

// Checks length, shapes, masks and terminal placement of a recorded episode.
// Throws ContractViolation for an empty trajectory.
ValidationReport validate_trajectory(const EpisodeTrajectory& traj, const EnvDescriptor& env);

// Line-delimited JSON: one object per record, in order, then a final summary
// line {"outcome":..., "seed":..., "length":...}. Field order is fixed.
void write_trajectory(std::ostream& out, const EpisodeTrajectory& traj);
EpisodeTrajectory read_trajectory(std::istream& in);

// Counter-based seed derivation (splitmix64 over master ^ mixed counter).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter);

// Uniform index among the true entries of a mask. Mask must have one.
int sample_available(const ActionMask& mask, Rng& rng);

}  // namespace nalab
