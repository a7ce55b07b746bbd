#pragma once

// Party controllers and the episode roller that records both controllable
// parties step by step.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "nalab/core.hpp"
#include "nalab/qmix.hpp"
#include "nalab/reward.hpp"
#include "nalab/simulation.hpp"

namespace nalab {

// Immutable greedy snapshot of a team's agent networks.
class FrozenPolicy {
 public:
  FrozenPolicy() = default;
  FrozenPolicy(std::vector<AgentQNet> nets, TeamSpec team, bool stack_frames);
  static FrozenPolicy from_learner(const QmixLearner& learner);

  const TeamSpec& team() const { return team_; }
  bool stack_frames() const { return stack_frames_; }
  int agents() const { return static_cast<int>(nets_.size()); }

  // Greedy action for one agent given its network input.
  int act(int agent, const Vector& input, const ActionMask& mask) const;
  Vector q_values(int agent, const Vector& input, const ActionMask& mask) const;

  ConstParamRefs params() const;
  std::uint64_t checksum() const;

  void save(std::ostream& out) const;
  static FrozenPolicy load(std::istream& in);

 private:
  std::vector<AgentQNet> nets_;
  TeamSpec team_;
  bool stack_frames_ = false;
};

// Chooses a party's joint action each step. Controllers carry per-episode
// history (previous action, previous observation) and are reset per episode.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode() = 0;
  virtual std::vector<int> act(const std::vector<Observation>& obs,
                               const std::vector<ActionMask>& masks, Rng& rng) = 0;
};

class RandomController final : public Controller {
 public:
  void begin_episode() override {}
  std::vector<int> act(const std::vector<Observation>& obs, const std::vector<ActionMask>& masks,
                       Rng& rng) override;
};

// Acts on Q-values from either a frozen snapshot or a live learner.
class QController final : public Controller {
 public:
  QController(const FrozenPolicy& policy, double epsilon = 0.0);
  QController(const QmixLearner& learner, double epsilon);

  void set_epsilon(double epsilon) { epsilon_ = epsilon; }
  void begin_episode() override;
  std::vector<int> act(const std::vector<Observation>& obs, const std::vector<ActionMask>& masks,
                       Rng& rng) override;

 private:
  Vector q_for(int agent, const Vector& input, const ActionMask& mask) const;

  const FrozenPolicy* policy_ = nullptr;
  const QmixLearner* learner_ = nullptr;
  TeamSpec team_;
  bool stack_frames_ = false;
  double epsilon_ = 0.0;
  std::vector<int> last_actions_;
  std::vector<Observation> last_obs_;
};

struct RolloutOptions {
  // When set, each record's reward_estimate holds the model's running estimate.
  const RewardModel* reward_model = nullptr;
  bool record_state = true;
};

// Resets `sim` with `seed`, plays to termination and returns the recording.
// Action sampling draws from a generator derived from `seed`. `adversaries`
// may be null only when the environment has no adversaries.
EpisodeTrajectory rollout_episode(Simulation& sim, Controller& victims, Controller* adversaries,
                                  std::uint64_t seed, const RolloutOptions& options = {});

TeamSpec victim_team(const EnvDescriptor& env);
TeamSpec adversary_team(const EnvDescriptor& env);

}  // namespace nalab
