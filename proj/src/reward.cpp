#include "nalab/reward.hpp"

#include <algorithm>
#include <cmath>

#include "nalab/errors.hpp"

namespace nalab {

WeightVector::WeightVector(std::vector<double> weights) : weights_(std::move(weights)) {
  bool positive = false;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("weight vector entries must be finite and non-negative");
    }
    positive = positive || w > 0.0;
  }
  if (!positive) throw ValidationError("weight vector needs at least one positive entry");
}

double weighted_reward(const WeightVector& w, const FailureSignalVector& r) {
  if (w.size() != r.size()) {
    throw StructuralError("weighted_reward: " + std::to_string(w.size()) + " weights for " +
                          std::to_string(r.size()) + " failure signals");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) sum += w.weights()[i] * r[i];
  return sum;
}

GroundTruthReward rule_based_terminal_reward(const StepOutcome& outcome, double r_fail) {
  if (!outcome.terminal) {
    throw ContractViolation("outcome reward requested for a non-terminal step");
  }
  if (outcome.victim_success) return {0.0, OutcomeSource::VictimSuccess};
  return {r_fail, OutcomeSource::VictimFailure};
}

std::vector<double> ground_truth_step_rewards(const EpisodeTrajectory& traj, double r_fail) {
  std::vector<double> out(traj.records.size(), 0.0);
  if (out.empty()) throw ContractViolation("empty trajectory");
  out.back() = rule_based_terminal_reward(traj.final_outcome, r_fail).value;
  return out;
}

double rule_based_immediate_reward(const FailureSignalVector& signals, const WeightVector& w,
                                   StateAccess access) {
  if (access != StateAccess::Oracle) {
    throw ModeError("rule-based immediate rewards need the global state (oracle access)");
  }
  return weighted_reward(w, signals);
}

Vector adversary_party_input(const StepRecord& record) {
  std::size_t total = 0;
  for (const auto& o : record.adversaries.obs) total += o.size();
  Vector x(static_cast<Eigen::Index>(total));
  Eigen::Index k = 0;
  for (const auto& o : record.adversaries.obs) {
    for (double v : o) x(k++) = v;
  }
  return x;
}

std::vector<Vector> adversary_party_inputs(const EpisodeTrajectory& traj) {
  std::vector<Vector> out;
  out.reserve(traj.records.size());
  for (const auto& r : traj.records) out.push_back(adversary_party_input(r));
  return out;
}

RewardModel::RewardModel(int input_size, int hidden_size, Rng& rng)
    : cell_("reward_model", input_size, hidden_size, rng) {}

std::pair<double, RecurrentState> RewardModel::estimate_step(const Vector& input,
                                                             const RecurrentState& state) const {
  auto r = cell_.step(input, state);
  return {r.output, std::move(r.next)};
}

std::vector<double> RewardModel::estimate_episode(const std::vector<Vector>& inputs) const {
  std::vector<double> out;
  out.reserve(inputs.size());
  RecurrentState s = initial_state();
  for (const auto& x : inputs) {
    auto [m, next] = estimate_step(x, s);
    out.push_back(m);
    s = std::move(next);
  }
  return out;
}

double RewardModel::episode_loss(const std::vector<Vector>& inputs, double target, bool backward,
                                 double scale) {
  std::vector<LstmStepCache> caches;
  caches.reserve(inputs.size());
  RecurrentState s = initial_state();
  double sum = 0.0;
  for (const auto& x : inputs) {
    auto r = cell_.step(x, s);
    sum += r.output;
    s = std::move(r.next);
    caches.push_back(std::move(r.cache));
  }
  const double err = target - sum;
  if (backward) {
    // Every step's estimate enters the sum with weight one.
    const double d_out = -2.0 * err * scale;
    RecurrentState d_next = RecurrentState::zeros(hidden_size());
    for (auto it = caches.rbegin(); it != caches.rend(); ++it) {
      d_next = cell_.backward_step(*it, d_out, d_next).second;
    }
  }
  return err * err;
}

double RewardModel::update(const std::vector<std::vector<Vector>>& episodes,
                           const std::vector<double>& targets, Adam& optimizer) {
  if (episodes.size() != targets.size()) {
    throw StructuralError("reward model update: episodes and targets misaligned");
  }
  if (episodes.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(episodes.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < episodes.size(); ++b) {
    loss += episode_loss(episodes[b], targets[b], true, scale);
  }
  loss *= scale;
  if (!std::isfinite(loss)) {
    zero_grad(params());
    throw TrainingFault("reward model: non-finite loss");
  }
  optimizer.update(params());
  return loss;
}

double reward_model_update(RewardModel& model, const std::vector<const EpisodeTrajectory*>& batch,
                           const std::vector<GroundTruthReward>& ground_truths, Adam& optimizer) {
  if (batch.size() != ground_truths.size()) {
    throw StructuralError("reward model update: one ground truth per episode required");
  }
  std::vector<std::vector<Vector>> episodes;
  std::vector<double> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    episodes.push_back(adversary_party_inputs(*batch[i]));
    targets.push_back(ground_truths[i].value);
  }
  return model.update(episodes, targets, optimizer);
}

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::Traditional: return "traditional";
    case RewardMode::RuleBasedImmediate: return "rule_based_immediate";
    case RewardMode::EstimationBased: return "estimation_based";
  }
  return "unknown";
}

RewardMode parse_reward_mode(const std::string& text) {
  if (text == "traditional") return RewardMode::Traditional;
  if (text == "rule" || text == "rule_based_immediate") return RewardMode::RuleBasedImmediate;
  if (text == "estimation" || text == "estimation_based") return RewardMode::EstimationBased;
  throw ConfigError("unknown reward mode: " + text);
}

std::vector<double> adversary_step_rewards(const EpisodeTrajectory& traj, RewardMode mode,
                                           const AdversaryRewardSettings& settings,
                                           const RewardModel* model, bool warm_up) {
  const std::size_t T = traj.records.size();
  if (T == 0) throw ContractViolation("empty trajectory");
  std::vector<double> out(T, 0.0);
  switch (mode) {
    case RewardMode::Traditional:
      if (!settings.victim_reward_access) {
        throw ModeError("traditional reward needs victim reward access (baseline only)");
      }
      for (std::size_t t = 0; t < T; ++t) out[t] = -traj.records[t].native_reward;
      break;
    case RewardMode::RuleBasedImmediate:
      for (std::size_t t = 0; t < T; ++t) {
        out[t] = rule_based_immediate_reward(traj.records[t].signals, settings.weights,
                                             StateAccess::Oracle);
      }
      out.back() += rule_based_terminal_reward(traj.final_outcome, settings.r_fail).value;
      break;
    case RewardMode::EstimationBased:
      if (warm_up) return ground_truth_step_rewards(traj, settings.r_fail);
      if (!model) throw ContractViolation("estimation mode needs a reward model");
      out = model->estimate_episode(adversary_party_inputs(traj));
      for (double& r : out) r = std::clamp(r, -settings.estimate_clip, settings.estimate_clip);
      break;
  }
  return out;
}

}  // namespace nalab
