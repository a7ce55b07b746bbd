#include "nalab/qmix.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <utility>

#include "nalab/errors.hpp"

namespace nalab {

void QmixConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("qmix config: " + what);
  };
  require(hidden_units > 0 && hidden_layers >= 0, "invalid hidden layout");
  require(mixer_embed > 0, "mixer_embed must be positive");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size > 0 && buffer_capacity > 0 && target_sync_interval > 0,
          "batch, buffer and sync interval must be positive");
  require(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
              epsilon_end <= 1.0,
          "epsilon bounds must lie in [0, 1]");
  require(epsilon_anneal_fraction >= 0.0, "epsilon_anneal_fraction must be non-negative");
}

QmixConfig QmixConfig::from_kv(const KeyValueConfig& kv) {
  QmixConfig c;
  auto geti = [&](const char* key, int& field) {
    if (kv.contains(key)) field = static_cast<int>(kv.get_int(key));
  };
  auto getd = [&](const char* key, double& field) {
    if (kv.contains(key)) field = kv.get_double(key);
  };
  auto getb = [&](const char* key, bool& field) {
    if (kv.contains(key)) field = kv.get_bool(key);
  };
  geti("hidden_units", c.hidden_units);
  geti("hidden_layers", c.hidden_layers);
  geti("mixer_embed", c.mixer_embed);
  getd("gamma", c.gamma);
  getd("learning_rate", c.learning_rate);
  geti("batch_size", c.batch_size);
  geti("buffer_capacity", c.buffer_capacity);
  geti("target_sync_interval", c.target_sync_interval);
  getd("epsilon_start", c.epsilon_start);
  getd("epsilon_end", c.epsilon_end);
  getd("epsilon_anneal_fraction", c.epsilon_anneal_fraction);
  getb("stack_frames", c.stack_frames);
  getb("global_state_conditioning", c.global_state_conditioning);
  c.validate();
  return c;
}

KeyValueConfig QmixConfig::to_kv() const {
  KeyValueConfig kv;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("hidden_units", std::to_string(hidden_units));
  kv.set("hidden_layers", std::to_string(hidden_layers));
  kv.set("mixer_embed", std::to_string(mixer_embed));
  kv.set("gamma", format_double(gamma));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("buffer_capacity", std::to_string(buffer_capacity));
  kv.set("target_sync_interval", std::to_string(target_sync_interval));
  kv.set("epsilon_start", format_double(epsilon_start));
  kv.set("epsilon_end", format_double(epsilon_end));
  kv.set("epsilon_anneal_fraction", format_double(epsilon_anneal_fraction));
  kv.set("stack_frames", b(stack_frames));
  kv.set("global_state_conditioning", b(global_state_conditioning));
  return kv;
}

double QmixConfig::epsilon(int episode, int total_episodes) const {
  const double span = epsilon_anneal_fraction * total_episodes;
  if (span <= 0.0) return epsilon_end;
  const double frac = std::min(1.0, episode / span);
  return epsilon_start + frac * (epsilon_end - epsilon_start);
}

int agent_input_size(const TeamSpec& team, bool stack_frames) {
  return team.obs_size * (stack_frames ? 2 : 1) + team.actions;
}

Vector agent_input(const Observation& obs, int last_action, int actions,
                   const Observation* prev_obs) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  Vector x = Vector::Zero(n * (prev_obs ? 2 : 1) + actions);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = obs[static_cast<std::size_t>(i)];
  if (last_action >= 0) x(n + last_action) = 1.0;
  if (prev_obs) {
    if (prev_obs->size() != obs.size()) throw StructuralError("agent_input: frame size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      x(n + actions + i) = (*prev_obs)[static_cast<std::size_t>(i)];
    }
  }
  return x;
}

AgentQNet::AgentQNet(const std::string& name, int input_size, int actions,
                     const QmixConfig& config, Rng& rng) {
  std::vector<int> sizes{input_size};
  for (int l = 0; l < config.hidden_layers; ++l) sizes.push_back(config.hidden_units);
  sizes.push_back(actions);
  net = Mlp(name, sizes, rng);
}

Vector agent_q_values(const AgentQNet& net, const Vector& input, const ActionMask& mask) {
  if (static_cast<int>(mask.size()) != net.actions()) {
    throw StructuralError("agent_q_values: mask length does not match action count");
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ContractViolation("agent_q_values: no available action");
  }
  Vector q = net.net.forward(input);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) q(static_cast<Eigen::Index>(a)) = kMaskedQ;
  }
  return q;
}

int select_action(const Vector& q, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && uniform01(rng) < epsilon) {
    ActionMask mask(static_cast<std::size_t>(q.size()));
    for (Eigen::Index a = 0; a < q.size(); ++a) {
      mask[static_cast<std::size_t>(a)] = q(a) > kMaskedQ;
    }
    return sample_available(mask, rng);
  }
  int best = -1;
  for (Eigen::Index a = 0; a < q.size(); ++a) {
    if (q(a) <= kMaskedQ) continue;
    if (best < 0 || q(a) > q(best)) best = static_cast<int>(a);
  }
  if (best < 0) throw ContractViolation("select_action: every action is masked");
  return best;
}

// ---------------------------------------------------------------------------

MonotonicMixer::MonotonicMixer(const std::string& name, int agents, int cond_size, int embed,
                               Rng& rng)
    : hyper_w1(name + ".hyper_w1", cond_size, agents * embed, rng),
      hyper_b1(name + ".hyper_b1", cond_size, embed, rng),
      hyper_w2(name + ".hyper_w2", cond_size, embed, rng),
      value(name + ".value", {cond_size, embed, 1}, rng),
      agents_(agents),
      embed_(embed) {}

Vector MonotonicMixer::forward(const Matrix& q, const Matrix& cond, MixerCache* cache) const {
  if (q.cols() != agents_ || cond.cols() != cond_size() || q.rows() != cond.rows()) {
    throw StructuralError("mixer: expected q (B x " + std::to_string(agents_) + ") and cond (B x " +
                          std::to_string(cond_size()) + ")");
  }
  const Eigen::Index B = q.rows();
  const int E = embed_;
  Matrix w1_raw = hyper_w1.forward(cond);
  Matrix b1 = hyper_b1.forward(cond);
  Matrix w2_raw = hyper_w2.forward(cond);
  MlpCache vcache;
  Matrix v = value.forward(cond, cache ? &vcache : nullptr);

  Matrix pre = b1;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int i = 0; i < agents_; ++i) {
      const double qi = q(b, i);
      for (int e = 0; e < E; ++e) pre(b, e) += qi * std::abs(w1_raw(b, i * E + e));
    }
  }
  Matrix hidden = pre.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  Vector out(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    out(b) = hidden.row(b).dot(w2_raw.row(b).cwiseAbs()) + v(b, 0);
  }
  if (cache) {
    cache->q = q;
    cache->cond = cond;
    cache->w1_raw = std::move(w1_raw);
    cache->b1 = std::move(b1);
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->w2_raw = std::move(w2_raw);
    cache->value_cache = std::move(vcache);
  }
  return out;
}

double MonotonicMixer::forward_one(const Vector& q, const Vector& cond) const {
  return forward(Matrix(q.transpose()), Matrix(cond.transpose()))(0);
}

Matrix MonotonicMixer::backward(const MixerCache& c, const Vector& d_qtot) {
  const Eigen::Index B = c.q.rows();
  const int E = embed_;
  if (d_qtot.size() != B) throw StructuralError("mixer: upstream gradient length mismatch");
  auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };

  Matrix d_w2_raw(B, E);
  Matrix d_pre(B, E);
  Matrix d_w1_raw(B, agents_ * E);
  Matrix d_q(B, agents_);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double g = d_qtot(b);
    for (int e = 0; e < E; ++e) {
      const double w2 = c.w2_raw(b, e);
      d_w2_raw(b, e) = g * c.hidden(b, e) * sgn(w2);
      const double x = c.hidden_pre(b, e);
      d_pre(b, e) = g * std::abs(w2) * (x > 0.0 ? 1.0 : std::exp(x));
    }
    for (int i = 0; i < agents_; ++i) {
      double dq = 0.0;
      for (int e = 0; e < E; ++e) {
        const double raw = c.w1_raw(b, i * E + e);
        dq += std::abs(raw) * d_pre(b, e);
        d_w1_raw(b, i * E + e) = c.q(b, i) * d_pre(b, e) * sgn(raw);
      }
      d_q(b, i) = dq;
    }
  }
  hyper_w1.backward(c.cond, d_w1_raw);
  hyper_b1.backward(c.cond, d_pre);
  hyper_w2.backward(c.cond, d_w2_raw);
  value.backward(c.value_cache, Matrix(d_qtot));
  return d_q;
}

Matrix MonotonicMixer::effective_w1(const Vector& cond) const {
  const Matrix raw = hyper_w1.forward(Matrix(cond.transpose()));
  Matrix w(agents_, embed_);
  for (int i = 0; i < agents_; ++i) {
    for (int e = 0; e < embed_; ++e) w(i, e) = std::abs(raw(0, i * embed_ + e));
  }
  return w;
}

ParamRefs MonotonicMixer::params() {
  ParamRefs out;
  hyper_w1.collect(out);
  hyper_b1.collect(out);
  hyper_w2.collect(out);
  for (auto* p : value.params()) out.push_back(p);
  return out;
}

ConstParamRefs MonotonicMixer::params() const {
  ConstParamRefs out;
  hyper_w1.collect(out);
  hyper_b1.collect(out);
  hyper_w2.collect(out);
  for (const auto* p : value.params()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------

QmixEpisode make_team_episode(const EpisodeTrajectory& traj, Party party, const TeamSpec& team,
                              const QmixConfig& config) {
  if (party == Party::Third) throw ContractViolation("make_team_episode: third party is scripted");
  QmixEpisode ep;
  const int T = traj.length();
  const int D = agent_input_size(team, config.stack_frames);
  const int C = config.global_state_conditioning ? team.state_size : team.agents * team.obs_size;
  ep.inputs.assign(static_cast<std::size_t>(team.agents), Matrix(T, D));
  ep.masks.assign(static_cast<std::size_t>(team.agents), {});
  ep.actions.assign(static_cast<std::size_t>(team.agents), {});
  ep.cond = Matrix(T, C);
  for (int t = 0; t < T; ++t) {
    const auto& rec = traj.records[static_cast<std::size_t>(t)];
    const PartyStep& step = party == Party::Victim ? rec.victims : rec.adversaries;
    const PartyStep* prev =
        t > 0 ? (party == Party::Victim ? &traj.records[static_cast<std::size_t>(t - 1)].victims
                                        : &traj.records[static_cast<std::size_t>(t - 1)].adversaries)
              : nullptr;
    if (static_cast<int>(step.obs.size()) != team.agents) {
      throw StructuralError("make_team_episode: team size mismatch at step " + std::to_string(t));
    }
    for (int i = 0; i < team.agents; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const Observation zeros(step.obs[ui].size(), 0.0);
      const Observation* prev_obs =
          config.stack_frames ? (prev ? &prev->obs[ui] : &zeros) : nullptr;
      const int last = prev ? prev->actions[ui] : -1;
      ep.inputs[ui].row(t) = agent_input(step.obs[ui], last, team.actions, prev_obs).transpose();
      ep.masks[ui].push_back(step.masks[ui]);
      ep.actions[ui].push_back(step.actions[ui]);
    }
    if (config.global_state_conditioning) {
      if (static_cast<int>(rec.state.size()) != C) {
        throw StructuralError("make_team_episode: global state missing or mis-sized");
      }
      for (int k = 0; k < C; ++k) ep.cond(t, k) = rec.state[static_cast<std::size_t>(k)];
    } else {
      for (int i = 0; i < team.agents; ++i) {
        for (int k = 0; k < team.obs_size; ++k) {
          ep.cond(t, i * team.obs_size + k) =
              step.obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
      }
    }
    ep.terminal.push_back(rec.terminal);
  }
  return ep;
}

std::vector<double> td_targets(const std::vector<double>& rewards,
                               const std::vector<bool>& terminal,
                               const std::vector<double>& next_qtot, double gamma) {
  if (rewards.size() != terminal.size() || rewards.size() != next_qtot.size()) {
    throw StructuralError("td_targets: rewards, terminal flags and bootstrap values misaligned");
  }
  std::vector<double> y(rewards.size());
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    y[t] = rewards[t] + (terminal[t] ? 0.0 : gamma * next_qtot[t]);
  }
  return y;
}

// ---------------------------------------------------------------------------

QmixLearner::QmixLearner(TeamSpec team, QmixConfig config, std::uint64_t seed)
    : team_(team), config_(config) {
  config_.validate();
  if (team_.agents <= 0 || team_.obs_size <= 0 || team_.actions <= 0) {
    throw ConfigError("qmix: team needs agents, observations and actions");
  }
  Rng rng(seed);
  input_size_ = agent_input_size(team_, config_.stack_frames);
  cond_size_ = config_.global_state_conditioning ? team_.state_size : team_.agents * team_.obs_size;
  for (int i = 0; i < team_.agents; ++i) {
    agents_.emplace_back("agent" + std::to_string(i), input_size_, team_.actions, config_, rng);
  }
  mixer_ = MonotonicMixer("mixer", team_.agents, cond_size_, config_.mixer_embed, rng);
  target_agents_ = agents_;
  target_mixer_ = mixer_;
  adam_ = Adam(AdamConfig{config_.learning_rate, 0.9, 0.999, 1e-8}, std::as_const(*this).params());
}

Vector QmixLearner::q_values(int agent, const Vector& input, const ActionMask& mask) const {
  return agent_q_values(agents_.at(static_cast<std::size_t>(agent)), input, mask);
}

Matrix QmixLearner::next_greedy_q(const QmixEpisode& ep, int agent) const {
  // Row t holds max over available actions at t+1 (row T-1 unused: terminal).
  const auto ua = static_cast<std::size_t>(agent);
  const int T = ep.length();
  Matrix out = Matrix::Zero(T, 1);
  if (T < 2) return out;
  const Matrix q = target_agents_[ua].net.forward(Matrix(ep.inputs[ua].bottomRows(T - 1)));
  for (int t = 0; t + 1 < T; ++t) {
    const auto& mask = ep.masks[ua][static_cast<std::size_t>(t + 1)];
    double best = kMaskedQ;
    bool any = false;
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      if (!mask[static_cast<std::size_t>(a)]) continue;
      if (!any || q(t, a) > best) best = q(t, a);
      any = true;
    }
    if (!any) throw ContractViolation("td target: no available action at next step");
    out(t, 0) = best;
  }
  return out;
}

std::vector<double> QmixLearner::td_targets(const QmixEpisode& ep,
                                            const std::vector<double>& rewards) const {
  const int T = ep.length();
  if (static_cast<int>(rewards.size()) != T) {
    throw StructuralError("td_targets: " + std::to_string(rewards.size()) + " rewards for " +
                          std::to_string(T) + " steps");
  }
  std::vector<double> next(static_cast<std::size_t>(T), 0.0);
  if (T >= 2) {
    Matrix q_next(T - 1, team_.agents);
    for (int i = 0; i < team_.agents; ++i) {
      q_next.col(i) = next_greedy_q(ep, i).topRows(T - 1);
    }
    const Vector v = target_mixer_.forward(q_next, ep.cond.bottomRows(T - 1));
    for (int t = 0; t + 1 < T; ++t) next[static_cast<std::size_t>(t)] = v(t);
  }
  return nalab::td_targets(rewards, ep.terminal, next, config_.gamma);
}

std::vector<double> QmixLearner::chosen_qtot(const QmixEpisode& ep) const {
  const int T = ep.length();
  Matrix q(T, team_.agents);
  for (int i = 0; i < team_.agents; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Matrix all = agents_[ui].net.forward(ep.inputs[ui]);
    for (int t = 0; t < T; ++t) q(t, i) = all(t, ep.actions[ui][static_cast<std::size_t>(t)]);
  }
  const Vector v = mixer_.forward(q, ep.cond);
  return {v.data(), v.data() + v.size()};
}

double QmixLearner::learner_step(const std::vector<const QmixEpisode*>& batch,
                                 const std::vector<std::vector<double>>& rewards) {
  if (batch.empty()) throw ContractViolation("learner_step: empty batch");
  if (rewards.size() != batch.size()) throw StructuralError("learner_step: reward batch mismatch");

  Eigen::Index N = 0;
  for (const auto* ep : batch) N += ep->length();
  const int n = team_.agents;

  std::vector<double> targets;
  targets.reserve(static_cast<std::size_t>(N));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto y = td_targets(*batch[b], rewards[b]);
    targets.insert(targets.end(), y.begin(), y.end());
  }

  Matrix cond(N, cond_size_);
  std::vector<Matrix> inputs(static_cast<std::size_t>(n), Matrix(N, input_size_));
  std::vector<std::vector<int>> actions(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (const auto* ep : batch) {
    const int T = ep->length();
    cond.middleRows(row, T) = ep->cond;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      inputs[ui].middleRows(row, T) = ep->inputs[ui];
      actions[ui].insert(actions[ui].end(), ep->actions[ui].begin(), ep->actions[ui].end());
    }
    row += T;
  }

  std::vector<MlpCache> caches(static_cast<std::size_t>(n));
  std::vector<Matrix> q_all(static_cast<std::size_t>(n));
  Matrix q_taken(N, n);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    q_all[ui] = agents_[ui].net.forward(inputs[ui], &caches[ui]);
    for (Eigen::Index r = 0; r < N; ++r) {
      q_taken(r, i) = q_all[ui](r, actions[ui][static_cast<std::size_t>(r)]);
    }
  }
  MixerCache mcache;
  const Vector qtot = mixer_.forward(q_taken, cond, &mcache);

  double loss = 0.0;
  Vector d_qtot(N);
  for (Eigen::Index r = 0; r < N; ++r) {
    const double err = targets[static_cast<std::size_t>(r)] - qtot(r);
    loss += err * err;
    d_qtot(r) = -2.0 * err;
  }
  if (!std::isfinite(loss)) throw TrainingFault("qmix: non-finite TD loss");

  const Matrix d_q = mixer_.backward(mcache, d_qtot);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    Matrix upstream = Matrix::Zero(N, team_.actions);
    for (Eigen::Index r = 0; r < N; ++r) {
      upstream(r, actions[ui][static_cast<std::size_t>(r)]) = d_q(r, i);
    }
    agents_[ui].net.backward(caches[ui], upstream);
  }
  adam_.update(params());

  ++metrics_.learner_steps;
  metrics_.last_loss = loss;
  if (metrics_.learner_steps % static_cast<std::uint64_t>(config_.target_sync_interval) == 0) {
    sync_target();
  }
  return loss;
}

void QmixLearner::sync_target() {
  for (std::size_t i = 0; i < agents_.size(); ++i) target_agents_[i] = agents_[i];
  target_mixer_ = mixer_;
  ++metrics_.target_syncs;
}

ParamRefs QmixLearner::params() {
  ParamRefs out;
  for (auto& a : agents_) {
    for (auto* p : a.net.params()) out.push_back(p);
  }
  for (auto* p : mixer_.params()) out.push_back(p);
  return out;
}

ConstParamRefs QmixLearner::params() const {
  ConstParamRefs out;
  for (const auto& a : agents_) {
    for (const auto* p : a.net.params()) out.push_back(p);
  }
  for (const auto* p : mixer_.params()) out.push_back(p);
  return out;
}

ConstParamRefs QmixLearner::target_params() const {
  ConstParamRefs out;
  for (const auto& a : target_agents_) {
    for (const auto* p : a.net.params()) out.push_back(p);
  }
  for (const auto* p : target_mixer_.params()) out.push_back(p);
  return out;
}

void QmixLearner::save(std::ostream& out) const {
  out << "learner_steps " << metrics_.learner_steps << " target_syncs " << metrics_.target_syncs
      << '\n';
  save_checkpoint(out, params(), &adam_.state());
  save_checkpoint(out, target_params(), nullptr);
}

void QmixLearner::load(std::istream& in) {
  std::string a, b;
  in >> a >> metrics_.learner_steps >> b >> metrics_.target_syncs;
  if (a != "learner_steps" || b != "target_syncs") {
    throw StructuralError("qmix checkpoint: missing learner header");
  }
  OptimizerState opt;
  load_checkpoint(in, params(), &opt);
  if (opt.first_moment.size() == adam_.state().first_moment.size()) adam_.state() = opt;
  ParamRefs target;
  for (auto& ag : target_agents_) {
    for (auto* p : ag.net.params()) target.push_back(p);
  }
  for (auto* p : target_mixer_.params()) target.push_back(p);
  load_checkpoint(in, target, nullptr);
}

}  // namespace nalab
