#pragma once

// Adversary rewards built from victim failure paths: weighted signal vectors,
// the outcome rules for terminal/immediate rewards and a recurrent model that
// learns to spread an episode's outcome reward over its steps.

#include <string>
#include <utility>
#include <vector>

#include "nalab/core.hpp"
#include "nalab/neural.hpp"

namespace nalab {

class WeightVector {
 public:
  WeightVector() = default;
  // Throws ValidationError for negative, non-finite or all-zero weights.
  explicit WeightVector(std::vector<double> weights);

  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }

 private:
  std::vector<double> weights_;
};

// Dot product; StructuralError on length mismatch.
double weighted_reward(const WeightVector& w, const FailureSignalVector& r);

enum class OutcomeSource { VictimSuccess, VictimFailure };

struct GroundTruthReward {
  double value = 0.0;
  OutcomeSource source = OutcomeSource::VictimSuccess;
};

// 0 when the victims completed their task, r_fail otherwise. ContractViolation
// for a non-terminal outcome.
GroundTruthReward rule_based_terminal_reward(const StepOutcome& outcome, double r_fail);

// Immediate rewards when the rules serve as ground truth: zero everywhere
// except the terminal step, which carries the outcome reward.
std::vector<double> ground_truth_step_rewards(const EpisodeTrajectory& traj, double r_fail);

// Whether the caller may read the global state (failure signals need it).
enum class StateAccess { Oracle, Deployment };

// Baseline immediate reward: W . failure_signals(prev, action, next).
// ModeError unless access is Oracle.
double rule_based_immediate_reward(const FailureSignalVector& signals, const WeightVector& w,
                                   StateAccess access);

template <class Model, class State>
double rule_based_immediate_reward(const Model& model, const State& prev,
                                   const JointAction& action, const State& next,
                                   const WeightVector& w, StateAccess access) {
  if (access != StateAccess::Oracle) {
    return rule_based_immediate_reward(FailureSignalVector{}, w, access);
  }
  return rule_based_immediate_reward(model.failure_signals(prev, action, next), w, access);
}

// Reward-model input for one step: adversary observations concatenated in
// adversary index order.
Vector adversary_party_input(const StepRecord& record);
std::vector<Vector> adversary_party_inputs(const EpisodeTrajectory& traj);

class RewardModel {
 public:
  RewardModel() = default;
  RewardModel(int input_size, int hidden_size, Rng& rng);

  int input_size() const { return cell_.input_size(); }
  int hidden_size() const { return cell_.hidden_size(); }
  RecurrentState initial_state() const { return RecurrentState::zeros(hidden_size()); }

  // One recurrent step; StructuralError when the input layout does not match.
  std::pair<double, RecurrentState> estimate_step(const Vector& input,
                                                  const RecurrentState& state) const;
  std::vector<double> estimate_episode(const std::vector<Vector>& inputs) const;

  // (target - sum of estimates)^2 for one episode; when `backward` is set the
  // gradient scaled by `scale` is accumulated through the full unroll.
  double episode_loss(const std::vector<Vector>& inputs, double target, bool backward,
                      double scale = 1.0);

  // Mean over the batch of the squared episode-sum error, then one optimizer
  // step. TrainingFault on a non-finite loss.
  double update(const std::vector<std::vector<Vector>>& episodes,
                const std::vector<double>& targets, Adam& optimizer);

  LstmCell& cell() { return cell_; }
  const LstmCell& cell() const { return cell_; }
  ParamRefs params() { return cell_.params(); }
  ConstParamRefs params() const { return cell_.params(); }

 private:
  LstmCell cell_;
};

// Reward-model update from recorded episodes and their outcome rewards.
double reward_model_update(RewardModel& model, const std::vector<const EpisodeTrajectory*>& batch,
                           const std::vector<GroundTruthReward>& ground_truths, Adam& optimizer);

enum class RewardMode { Traditional, RuleBasedImmediate, EstimationBased };

std::string to_string(RewardMode mode);
// Accepts "traditional", "rule", "rule_based_immediate", "estimation",
// "estimation_based"; ConfigError otherwise.
RewardMode parse_reward_mode(const std::string& text);

struct AdversaryRewardSettings {
  WeightVector weights;
  double r_fail = 20.0;
  double estimate_clip = 5.0;
  // Traditional mode reads the victims' own reward; that is only legitimate
  // for the baseline and must be switched on explicitly.
  bool victim_reward_access = false;
};

// Per-step learner rewards for one episode. Estimation mode uses clipped model
// estimates, or terminal-only outcome rewards while `warm_up` is set.
std::vector<double> adversary_step_rewards(const EpisodeTrajectory& traj, RewardMode mode,
                                           const AdversaryRewardSettings& settings,
                                           const RewardModel* model, bool warm_up);

}  // namespace nalab
