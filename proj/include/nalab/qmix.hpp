#pragma once

// Value-decomposition learner: one Q-network per agent, a monotonic mixing
// network conditioned on the team's concatenated observations (or the global
// state, for ablation), epsilon-greedy acting and the squared TD loss with a
// periodically synchronised target copy.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nalab/config.hpp"
#include "nalab/core.hpp"
#include "nalab/neural.hpp"

namespace nalab {

inline constexpr double kMaskedQ = -1e9;

struct QmixConfig {
  int hidden_units = 64;
  int hidden_layers = 2;
  int mixer_embed = 32;
  double gamma = 0.99;
  double learning_rate = 5e-4;
  int batch_size = 16;
  int buffer_capacity = 1000;
  int target_sync_interval = 200;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_anneal_fraction = 0.2;
  bool stack_frames = false;
  bool global_state_conditioning = false;

  void validate() const;
  static QmixConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;

  // Linear anneal from epsilon_start to epsilon_end over the first
  // epsilon_anneal_fraction of `total_episodes`.
  double epsilon(int episode, int total_episodes) const;
};

struct TeamSpec {
  int agents = 0;
  int obs_size = 0;
  int actions = 0;
  int state_size = 0;
};

// Agent network input: observation, one-hot of the previous action (zeros at
// the first step) and, when stacking, the previous observation.
int agent_input_size(const TeamSpec& team, bool stack_frames);
Vector agent_input(const Observation& obs, int last_action, int actions,
                   const Observation* prev_obs);

class AgentQNet {
 public:
  AgentQNet() = default;
  AgentQNet(const std::string& name, int input_size, int actions, const QmixConfig& config,
            Rng& rng);

  int actions() const { return net.output_size(); }

  Mlp net;
};

// Per-action values with unavailable actions set to kMaskedQ.
// Throws ContractViolation for an all-false mask.
Vector agent_q_values(const AgentQNet& net, const Vector& input, const ActionMask& mask);

// Greedy over non-sentinel entries (ties -> lowest index) with probability
// 1 - epsilon, otherwise uniform over non-sentinel entries.
int select_action(const Vector& q_values, double epsilon, Rng& rng);

struct MixerCache {
  Matrix q;
  Matrix cond;
  Matrix w1_raw;      // B x (n*E)
  Matrix b1;          // B x E
  Matrix hidden_pre;  // B x E
  Matrix hidden;      // B x E
  Matrix w2_raw;      // B x E
  MlpCache value_cache;
};

// Q_tot = |W2(c)| . elu(q |W1(c)| + b1(c)) + V(c). The absolute value on the
// hypernetwork outputs keeps every effective weight non-negative.
class MonotonicMixer {
 public:
  MonotonicMixer() = default;
  MonotonicMixer(const std::string& name, int agents, int cond_size, int embed, Rng& rng);

  int agents() const { return agents_; }
  int embed() const { return embed_; }
  int cond_size() const { return static_cast<int>(hyper_w1.in()); }

  Vector forward(const Matrix& q, const Matrix& cond, MixerCache* cache = nullptr) const;
  double forward_one(const Vector& q, const Vector& cond) const;
  // Accumulates parameter grads; returns d(loss)/dq (B x n).
  Matrix backward(const MixerCache& cache, const Vector& d_qtot);

  // Effective (non-negative) first-layer weights for one conditioning row.
  Matrix effective_w1(const Vector& cond) const;

  ParamRefs params();
  ConstParamRefs params() const;

  Linear hyper_w1;
  Linear hyper_b1;
  Linear hyper_w2;
  Mlp value;

 private:
  int agents_ = 0;
  int embed_ = 0;
};

// One episode of team data laid out for learning. Row t of every matrix
// belongs to step t.
struct QmixEpisode {
  std::vector<Matrix> inputs;                    // per agent, T x input
  std::vector<std::vector<ActionMask>> masks;    // per agent, per step
  std::vector<std::vector<int>> actions;         // per agent, per step
  Matrix cond;                                   // T x cond
  std::vector<bool> terminal;                    // per step

  int length() const { return static_cast<int>(terminal.size()); }
};

QmixEpisode make_team_episode(const EpisodeTrajectory& traj, Party party, const TeamSpec& team,
                              const QmixConfig& config);

// y_t = r_t + gamma * (terminal_t ? 0 : next_qtot_t).
std::vector<double> td_targets(const std::vector<double>& rewards,
                               const std::vector<bool>& terminal,
                               const std::vector<double>& next_qtot, double gamma);

struct LearnerMetrics {
  std::uint64_t learner_steps = 0;
  std::uint64_t target_syncs = 0;
  double last_loss = 0.0;
};

class QmixLearner {
 public:
  QmixLearner(TeamSpec team, QmixConfig config, std::uint64_t seed);

  const TeamSpec& team() const { return team_; }
  const QmixConfig& config() const { return config_; }
  int input_size() const { return input_size_; }
  int cond_size() const { return cond_size_; }

  Vector q_values(int agent, const Vector& input, const ActionMask& mask) const;

  // Targets for every step of `episode` using the target networks and the
  // decentralised per-agent argmax composed through the target mixer.
  std::vector<double> td_targets(const QmixEpisode& episode,
                                 const std::vector<double>& rewards) const;
  // Online Q_tot of the taken joint actions.
  std::vector<double> chosen_qtot(const QmixEpisode& episode) const;

  // One gradient step on sum_t (y_t - Q_tot_t)^2 over the batch. Returns the
  // loss. Throws TrainingFault on a non-finite loss.
  double learner_step(const std::vector<const QmixEpisode*>& batch,
                      const std::vector<std::vector<double>>& rewards);

  void sync_target();

  std::vector<AgentQNet>& agents() { return agents_; }
  const std::vector<AgentQNet>& agents() const { return agents_; }
  MonotonicMixer& mixer() { return mixer_; }
  const MonotonicMixer& mixer() const { return mixer_; }

  ParamRefs params();
  ConstParamRefs params() const;
  ConstParamRefs target_params() const;
  const LearnerMetrics& metrics() const { return metrics_; }
  Adam& optimizer() { return adam_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  Matrix next_greedy_q(const QmixEpisode& episode, int agent) const;

  TeamSpec team_;
  QmixConfig config_;
  int input_size_ = 0;
  int cond_size_ = 0;
  std::vector<AgentQNet> agents_;
  std::vector<AgentQNet> target_agents_;
  MonotonicMixer mixer_;
  MonotonicMixer target_mixer_;
  Adam adam_;
  LearnerMetrics metrics_;
};

// Fixed-capacity ring of items with uniform sampling without replacement.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& at(std::size_t i) const { return items_.at(i); }

  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    count = std::min(count, idx.size());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<T> items_;
};

}  // namespace nalab
