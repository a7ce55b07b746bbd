#include "nalab/rollout.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "nalab/errors.hpp"

namespace nalab {

FrozenPolicy::FrozenPolicy(std::vector<AgentQNet> nets, TeamSpec team, bool stack_frames)
    : nets_(std::move(nets)), team_(team), stack_frames_(stack_frames) {
  if (static_cast<int>(nets_.size()) != team_.agents) {
    throw StructuralError("frozen policy: network count does not match team size");
  }
}

FrozenPolicy FrozenPolicy::from_learner(const QmixLearner& learner) {
  return FrozenPolicy(learner.agents(), learner.team(), learner.config().stack_frames);
}

Vector FrozenPolicy::q_values(int agent, const Vector& input, const ActionMask& mask) const {
  if (agent < 0 || agent >= agents()) {
    throw LookupError("frozen policy: no agent " + std::to_string(agent));
  }
  return agent_q_values(nets_[static_cast<std::size_t>(agent)], input, mask);
}

int FrozenPolicy::act(int agent, const Vector& input, const ActionMask& mask) const {
  Rng unused(0);
  return select_action(q_values(agent, input, mask), 0.0, unused);
}

ConstParamRefs FrozenPolicy::params() const {
  ConstParamRefs out;
  for (const auto& n : nets_) {
    for (const auto* p : n.net.params()) out.push_back(p);
  }
  return out;
}

std::uint64_t FrozenPolicy::checksum() const { return nalab::checksum(params()); }

void FrozenPolicy::save(std::ostream& out) const {
  out << "frozen-policy agents " << team_.agents << " obs " << team_.obs_size << " actions "
      << team_.actions << " state " << team_.state_size << " stack " << (stack_frames_ ? 1 : 0)
      << " layers";
  const auto& layers = nets_.front().net.layers();
  out << ' ' << layers.size();
  for (const auto& l : layers) out << ' ' << l.out();
  out << '\n';
  save_checkpoint(out, params(), nullptr);
}

FrozenPolicy FrozenPolicy::load(std::istream& in) {
  std::string tag, k_agents, k_obs, k_actions, k_state, k_stack, k_layers;
  TeamSpec team;
  int stack = 0;
  std::size_t n_layers = 0;
  in >> tag >> k_agents >> team.agents >> k_obs >> team.obs_size >> k_actions >> team.actions >>
      k_state >> team.state_size >> k_stack >> stack >> k_layers >> n_layers;
  if (!in || tag != "frozen-policy" || n_layers == 0 || team.agents <= 0) {
    throw StructuralError("frozen policy: malformed header");
  }
  std::vector<int> widths(n_layers);
  for (auto& w : widths) in >> w;
  if (!in) throw StructuralError("frozen policy: malformed layer list");
  QmixConfig shape;
  shape.stack_frames = stack != 0;
  std::vector<int> sizes{agent_input_size(team, shape.stack_frames)};
  sizes.insert(sizes.end(), widths.begin(), widths.end());
  Rng rng(0);
  std::vector<AgentQNet> nets;
  for (int i = 0; i < team.agents; ++i) {
    AgentQNet net;
    net.net = Mlp("agent" + std::to_string(i), sizes, rng);
    nets.push_back(std::move(net));
  }
  ParamRefs refs;
  for (auto& n : nets) {
    for (auto* p : n.net.params()) refs.push_back(p);
  }
  load_checkpoint(in, refs, nullptr);
  return FrozenPolicy(std::move(nets), team, shape.stack_frames);
}

std::vector<int> RandomController::act(const std::vector<Observation>&,
                                       const std::vector<ActionMask>& masks, Rng& rng) {
  std::vector<int> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(sample_available(m, rng));
  return out;
}

QController::QController(const FrozenPolicy& policy, double epsilon)
    : policy_(&policy),
      team_(policy.team()),
      stack_frames_(policy.stack_frames()),
      epsilon_(epsilon) {}

QController::QController(const QmixLearner& learner, double epsilon)
    : learner_(&learner),
      team_(learner.team()),
      stack_frames_(learner.config().stack_frames),
      epsilon_(epsilon) {}

void QController::begin_episode() {
  last_actions_.assign(static_cast<std::size_t>(team_.agents), -1);
  last_obs_.assign(static_cast<std::size_t>(team_.agents),
                   Observation(static_cast<std::size_t>(team_.obs_size), 0.0));
}

Vector QController::q_for(int agent, const Vector& input, const ActionMask& mask) const {
  return policy_ ? policy_->q_values(agent, input, mask) : learner_->q_values(agent, input, mask);
}

std::vector<int> QController::act(const std::vector<Observation>& obs,
                                  const std::vector<ActionMask>& masks, Rng& rng) {
  if (static_cast<int>(obs.size()) != team_.agents || masks.size() != obs.size()) {
    throw StructuralError("controller: observation count does not match team size");
  }
  if (last_actions_.size() != obs.size()) begin_episode();
  std::vector<int> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Vector input = agent_input(obs[i], last_actions_[i], team_.actions,
                                     stack_frames_ ? &last_obs_[i] : nullptr);
    out[i] = select_action(q_for(static_cast<int>(i), input, masks[i]), epsilon_, rng);
  }
  last_actions_ = out;
  last_obs_ = obs;
  return out;
}

namespace {

PartyStep observe_party(const Simulation& sim, Party party, int count) {
  PartyStep step;
  for (int i = 0; i < count; ++i) {
    const AgentId id{party, i};
    step.obs.push_back(sim.observe(id));
    step.masks.push_back(sim.available_actions(id));
  }
  return step;
}

}  // namespace

EpisodeTrajectory rollout_episode(Simulation& sim, Controller& victims, Controller* adversaries,
                                  std::uint64_t seed, const RolloutOptions& options) {
  const EnvDescriptor& env = sim.descriptor();
  if (!adversaries && env.adversaries.count > 0) {
    throw ContractViolation("rollout: environment has adversaries but no controller was given");
  }
  sim.reset(seed);
  Rng rng(derive_seed(seed, 0x61637473ULL));
  victims.begin_episode();
  if (adversaries) adversaries->begin_episode();
  RecurrentState model_state;
  if (options.reward_model) model_state = options.reward_model->initial_state();

  EpisodeTrajectory traj;
  traj.seed = seed;
  while (!sim.terminal()) {
    StepRecord rec;
    rec.victims = observe_party(sim, Party::Victim, env.victims.count);
    rec.adversaries = observe_party(sim, Party::Adversary, env.adversaries.count);
    if (options.record_state) rec.state = sim.state_features();
    rec.victims.actions = victims.act(rec.victims.obs, rec.victims.masks, rng);
    if (env.adversaries.count > 0) {
      rec.adversaries.actions = adversaries->act(rec.adversaries.obs, rec.adversaries.masks, rng);
    }
    if (options.reward_model) {
      auto [m, next] = options.reward_model->estimate_step(adversary_party_input(rec), model_state);
      rec.reward_estimate = m;
      model_state = std::move(next);
    }
    const StepOutcome outcome = sim.step({rec.victims.actions, rec.adversaries.actions});
    rec.signals = outcome.failure_signals;
    rec.native_reward = sim.last_native_reward();
    rec.terminal = outcome.terminal;
    traj.records.push_back(std::move(rec));
    if (outcome.terminal) traj.final_outcome = outcome;
  }
  return traj;
}

TeamSpec victim_team(const EnvDescriptor& env) {
  return {env.victims.count, env.victims.obs_size, env.victims.action_count(), env.state_size};
}

TeamSpec adversary_team(const EnvDescriptor& env) {
  return {env.adversaries.count, env.adversaries.obs_size, env.adversaries.action_count(),
          env.state_size};
}

}  // namespace nalab
