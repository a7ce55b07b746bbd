#include "nalab/training.hpp"

#include <cmath>
#include <sstream>

#include "nalab/errors.hpp"
#include "nalab/manifest.hpp"

namespace nalab {

namespace {

// Seed domains keep the streams of different phases apart.
enum : std::uint64_t {
  kVictimDomain = 0x100,
  kAdversaryDomain = 0x200,
  kDefenseDomain = 0x300,
  kLearnerSeed = 1,
  kEpisodeSeeds = 2,
  kEvalSeeds = 3,
  kReplaySeed = 4,
  kRewardModelSeed = 5,
  kFinalEvalSeed = 6,
};

std::uint64_t stream(std::uint64_t master, std::uint64_t domain, std::uint64_t which) {
  return derive_seed(derive_seed(master, domain), which);
}

void say(const TrainingIo& io, const std::string& msg) {
  if (io.log) io.log(msg);
}

std::string learner_text(const QmixLearner& learner) {
  std::ostringstream out;
  learner.save(out);
  return out.str();
}

std::string policy_text(const FrozenPolicy& policy) {
  std::ostringstream out;
  policy.save(out);
  return out.str();
}

struct Transition {
  QmixEpisode episode;
  std::vector<double> rewards;        // fixed rewards (victim training)
  EpisodeTrajectory trajectory;       // kept for reward recomputation
};

double run_updates(QmixLearner& learner, const ReplayBuffer<Transition>& buffer, Rng& rng,
                   const TrainingConfig& config,
                   const std::function<std::vector<double>(const Transition&)>& rewards_of) {
  double loss = 0.0;
  if (static_cast<int>(buffer.size()) < config.qmix.batch_size) return loss;
  for (int u = 0; u < config.updates_per_episode; ++u) {
    const auto idx = buffer.sample_indices(static_cast<std::size_t>(config.qmix.batch_size), rng);
    std::vector<const QmixEpisode*> batch;
    std::vector<std::vector<double>> rewards;
    for (auto i : idx) {
      batch.push_back(&buffer.at(i).episode);
      rewards.push_back(rewards_of(buffer.at(i)));
    }
    loss = learner.learner_step(batch, rewards);
  }
  return loss;
}

// Victims learn on native rewards; neutrals follow `adversaries`.
struct VictimLoopResult {
  FrozenPolicy policy;
  std::vector<MetricRow> metrics;
};

VictimLoopResult victim_loop(const EnvConfig& env, const AdversarySetting& adversaries,
                             const TrainingConfig& config, std::uint64_t domain,
                             const TrainingIo& io) {
  config.validate();
  if (config.episodes <= 0) {
    throw TrainingFault("victim training: no training episodes, competence floor unmet");
  }
  auto sim = make_simulation(env);
  const EnvDescriptor& desc = sim->descriptor();
  const TeamSpec team = victim_team(desc);
  QmixLearner learner(team, config.qmix, stream(config.seed, domain, kLearnerSeed));
  QController ctrl(learner, config.qmix.epsilon_start);
  RandomController random;
  std::unique_ptr<QController> frozen_adv;
  Controller* adv = &random;
  if (adversaries.kind == AdversarySetting::Kind::Policy) {
    frozen_adv = std::make_unique<QController>(*adversaries.policy, 0.0);
    adv = frozen_adv.get();
  }
  const std::uint64_t adv_checksum =
      adversaries.policy ? adversaries.policy->checksum() : 0;

  ReplayBuffer<Transition> buffer(static_cast<std::size_t>(config.qmix.buffer_capacity));
  Rng replay_rng(stream(config.seed, domain, kReplaySeed));
  const std::uint64_t episode_seeds = stream(config.seed, domain, kEpisodeSeeds);
  std::vector<MetricRow> metrics;
  double reward_sum = 0.0;
  int reward_count = 0;
  double loss = 0.0;
  const auto fixed = [](const Transition& t) { return t.rewards; };

  for (int k = 0; k < config.episodes; ++k) {
    const double eps = config.qmix.epsilon(k, config.episodes);
    ctrl.set_epsilon(eps);
    RolloutOptions opts;
    opts.record_state = config.qmix.global_state_conditioning;
    Transition tr;
    tr.trajectory =
        rollout_episode(*sim, ctrl, adv, derive_seed(episode_seeds, static_cast<std::uint64_t>(k)),
                        opts);
    for (const auto& rec : tr.trajectory.records) tr.rewards.push_back(rec.native_reward);
    for (double r : tr.rewards) reward_sum += r;
    ++reward_count;
    tr.episode = make_team_episode(tr.trajectory, Party::Victim, team, config.qmix);
    tr.trajectory = {};
    buffer.push(std::move(tr));
    try {
      loss = run_updates(learner, buffer, replay_rng, config, fixed);
    } catch (const TrainingFault&) {
      if (!io.dir.empty()) write_file_atomic(io.dir / (io.tag + "_fault.ckpt"), learner_text(learner));
      throw;
    }

    if ((k + 1) % config.eval_interval == 0 || k + 1 == config.episodes) {
      if (adversaries.policy && adversaries.policy->checksum() != adv_checksum) {
        throw TrainingFault("phase separation: frozen adversary parameters changed");
      }
      const FrozenPolicy snapshot = FrozenPolicy::from_learner(learner);
      const WinRate w = evaluate_win_rate(
          env, snapshot, adversaries, config.eval_episodes,
          derive_seed(stream(config.seed, domain, kEvalSeeds), static_cast<std::uint64_t>(k)));
      metrics.push_back({k + 1, w.rate, reward_count ? reward_sum / reward_count : 0.0, loss, eps});
      say(io, io.tag + " episode " + std::to_string(k + 1) + " win_rate " + format_double(w.rate));
      reward_sum = 0.0;
      reward_count = 0;
      if (!io.dir.empty()) {
        write_file_atomic(io.dir / (io.tag + "_latest.ckpt"), learner_text(learner));
      }
    }
  }
  return {FrozenPolicy::from_learner(learner), std::move(metrics)};
}

}  // namespace

void TrainingConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("training config: " + what);
  };
  require(episodes >= 0, "episodes must be non-negative");
  require(updates_per_episode > 0, "updates_per_episode must be positive");
  require(eval_interval > 0 && eval_episodes > 0, "evaluation cadence must be positive");
  require(competence_floor >= 0.0 && competence_floor <= 1.0, "competence_floor in [0, 1]");
  require(competence_episodes > 0, "competence_episodes must be positive");
  require(r_fail > 0.0, "r_fail must be positive");
  require(estimate_clip > 0.0, "estimate_clip must be positive");
  require(warmup_episodes >= 0, "warmup_episodes must be non-negative");
  require(reward_hidden > 0 && reward_batch > 0, "reward model sizes must be positive");
  require(reward_learning_rate > 0.0, "reward_learning_rate must be positive");
  if (reward_mode == RewardMode::Traditional && !victim_reward_access) {
    throw ConfigError(
        "training config: traditional reward mode needs victim_reward_access = true");
  }
  qmix.validate();
}

TrainingConfig TrainingConfig::from_kv(const KeyValueConfig& kv) {
  TrainingConfig c;
  auto geti = [&](const char* key, int& field) {
    if (kv.contains(key)) field = static_cast<int>(kv.get_int(key));
  };
  auto getd = [&](const char* key, double& field) {
    if (kv.contains(key)) field = kv.get_double(key);
  };
  geti("episodes", c.episodes);
  geti("updates_per_episode", c.updates_per_episode);
  geti("eval_interval", c.eval_interval);
  geti("eval_episodes", c.eval_episodes);
  getd("competence_floor", c.competence_floor);
  geti("competence_episodes", c.competence_episodes);
  if (kv.contains("reward_mode")) c.reward_mode = parse_reward_mode(kv.get_string("reward_mode"));
  if (kv.contains("victim_reward_access")) c.victim_reward_access = kv.get_bool("victim_reward_access");
  if (kv.contains("weights")) c.weights = kv.get_double_list("weights");
  getd("r_fail", c.r_fail);
  getd("estimate_clip", c.estimate_clip);
  geti("warmup_episodes", c.warmup_episodes);
  geti("reward_hidden", c.reward_hidden);
  getd("reward_learning_rate", c.reward_learning_rate);
  geti("reward_batch", c.reward_batch);
  c.qmix = QmixConfig::from_kv(kv.section("qmix"));
  c.validate();
  return c;
}

KeyValueConfig TrainingConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("episodes", std::to_string(episodes));
  kv.set("updates_per_episode", std::to_string(updates_per_episode));
  kv.set("eval_interval", std::to_string(eval_interval));
  kv.set("eval_episodes", std::to_string(eval_episodes));
  kv.set("competence_floor", format_double(competence_floor));
  kv.set("competence_episodes", std::to_string(competence_episodes));
  kv.set("reward_mode", to_string(reward_mode));
  kv.set("victim_reward_access", victim_reward_access ? "true" : "false");
  std::string w;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    w += (i ? "," : "") + format_double(weights[i]);
  }
  kv.set("weights", w);
  kv.set("r_fail", format_double(r_fail));
  kv.set("estimate_clip", format_double(estimate_clip));
  kv.set("warmup_episodes", std::to_string(warmup_episodes));
  kv.set("reward_hidden", std::to_string(reward_hidden));
  kv.set("reward_learning_rate", format_double(reward_learning_rate));
  kv.set("reward_batch", std::to_string(reward_batch));
  kv.merge_section("qmix", qmix.to_kv());
  return kv;
}

std::vector<double> default_weights(const EnvConfig& env) {
  if (env.name() == "skirmish") return {0.7, 0.3};
  return {0.5, 0.3, 0.2};
}

WeightVector resolve_weights(const EnvConfig& env, const TrainingConfig& config) {
  WeightVector w(config.weights.empty() ? default_weights(env) : config.weights);
  const int paths = describe(env).failure_path_count();
  if (static_cast<int>(w.size()) != paths) {
    throw ConfigError("weights: " + std::to_string(w.size()) + " entries for " +
                      std::to_string(paths) + " failure paths");
  }
  return w;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "episode,win_rate,mean_episode_reward,loss,epsilon\n";
  for (const auto& r : rows) {
    out << r.episode << ',' << format_double(r.win_rate) << ','
        << format_double(r.mean_episode_reward) << ',' << format_double(r.loss) << ','
        << format_double(r.epsilon) << '\n';
  }
  return out.str();
}

VictimTrainingResult train_victims(const EnvConfig& env, const TrainingConfig& config,
                                   const TrainingIo& io) {
  VictimLoopResult loop = victim_loop(env, AdversarySetting::random(), config, kVictimDomain, io);
  VictimTrainingResult out;
  out.no_attack = evaluate_win_rate(env, loop.policy, AdversarySetting::random(),
                                    config.competence_episodes,
                                    stream(config.seed, kVictimDomain, kFinalEvalSeed));
  out.competent = out.no_attack.rate >= config.competence_floor;
  out.policy = std::move(loop.policy);
  out.metrics = std::move(loop.metrics);
  if (!io.dir.empty()) {
    write_file_atomic(io.dir / (io.tag + "_victims.policy"), policy_text(out.policy));
    write_file_atomic(io.dir / (io.tag + "_metrics.csv"), metrics_csv(out.metrics));
  }
  return out;
}

void require_competent(const VictimTrainingResult& result, double floor) {
  if (!result.competent || result.no_attack.rate < floor) {
    throw TrainingFault("victim training failed: no-attack win rate " +
                        format_double(result.no_attack.rate) + " below competence floor " +
                        format_double(floor));
  }
}

AdversaryTrainingResult train_adversaries(const EnvConfig& env, const FrozenPolicy& victims,
                                          const TrainingConfig& config, const TrainingIo& io) {
  config.validate();
  if (config.episodes <= 0) throw ConfigError("adversary training needs episodes > 0");
  auto sim = make_simulation(env);
  const EnvDescriptor& desc = sim->descriptor();
  if (desc.adversaries.count <= 0) throw ConfigError("adversary training needs adversaries > 0");
  if (victims.team().agents != desc.victims.count || victims.team().obs_size != desc.victims.obs_size ||
      victims.team().actions != desc.victims.action_count()) {
    throw StructuralError("frozen victims do not match the environment's victim layout");
  }

  AdversaryRewardSettings settings;
  settings.weights = resolve_weights(env, config);
  settings.r_fail = config.r_fail;
  settings.estimate_clip = config.estimate_clip;
  settings.victim_reward_access = config.victim_reward_access;
  const RewardMode mode = config.reward_mode;
  const bool estimation = mode == RewardMode::EstimationBased;

  const TeamSpec team = adversary_team(desc);
  QmixLearner learner(team, config.qmix, stream(config.seed, kAdversaryDomain, kLearnerSeed));
  QController ctrl(learner, config.qmix.epsilon_start);
  QController victim_ctrl(victims, 0.0);

  Rng model_rng(stream(config.seed, kAdversaryDomain, kRewardModelSeed));
  RewardModel model(desc.adversaries.obs_size * desc.adversaries.count, config.reward_hidden,
                    model_rng);
  Adam model_opt(AdamConfig{config.reward_learning_rate, 0.9, 0.999, 1e-8},
                 std::as_const(model).params());

  const std::uint64_t victim_checksum = victims.checksum();
  ReplayBuffer<Transition> buffer(static_cast<std::size_t>(config.qmix.buffer_capacity));
  Rng replay_rng(stream(config.seed, kAdversaryDomain, kReplaySeed));
  Rng model_batch_rng(derive_seed(stream(config.seed, kAdversaryDomain, kReplaySeed), 1));
  const std::uint64_t episode_seeds = stream(config.seed, kAdversaryDomain, kEpisodeSeeds);

  AdversaryTrainingResult out;
  double reward_sum = 0.0;
  int reward_count = 0;
  double loss = 0.0;

  for (int k = 0; k < config.episodes; ++k) {
    const bool warm = estimation && k < config.warmup_episodes;
    const double eps = config.qmix.epsilon(k, config.episodes);
    ctrl.set_epsilon(eps);
    RolloutOptions opts;
    opts.reward_model = estimation && !warm ? &model : nullptr;
    opts.record_state = config.qmix.global_state_conditioning;
    Transition tr;
    tr.trajectory = rollout_episode(*sim, victim_ctrl, &ctrl,
                                    derive_seed(episode_seeds, static_cast<std::uint64_t>(k)), opts);
    tr.episode = make_team_episode(tr.trajectory, Party::Adversary, team, config.qmix);
    if (!estimation) tr.rewards = adversary_step_rewards(tr.trajectory, mode, settings, nullptr, false);
    {
      const auto r = estimation ? adversary_step_rewards(tr.trajectory, mode, settings, &model, warm)
                                : tr.rewards;
      for (double v : r) reward_sum += v;
      ++reward_count;
    }
    if (!estimation) tr.trajectory = {};
    buffer.push(std::move(tr));

    try {
      if (estimation) {
        const auto idx = buffer.sample_indices(static_cast<std::size_t>(config.reward_batch),
                                               model_batch_rng);
        std::vector<const EpisodeTrajectory*> batch;
        std::vector<GroundTruthReward> truths;
        for (auto i : idx) {
          const auto& t = buffer.at(i).trajectory;
          batch.push_back(&t);
          truths.push_back(rule_based_terminal_reward(t.final_outcome, config.r_fail));
        }
        reward_model_update(model, batch, truths, model_opt);
      }
      // Estimates are recomputed with the current model at update time.
      const bool warm_now = estimation && k + 1 < config.warmup_episodes;
      loss = run_updates(learner, buffer, replay_rng, config, [&](const Transition& t) {
        return estimation ? adversary_step_rewards(t.trajectory, mode, settings, &model, warm_now)
                          : t.rewards;
      });
    } catch (const TrainingFault&) {
      if (!io.dir.empty()) write_file_atomic(io.dir / (io.tag + "_fault.ckpt"), learner_text(learner));
      throw;
    }

    if ((k + 1) % config.eval_interval == 0 || k + 1 == config.episodes) {
      if (victims.checksum() != victim_checksum) {
        throw TrainingFault("phase separation: frozen victim parameters changed");
      }
      const FrozenPolicy snapshot = FrozenPolicy::from_learner(learner);
      const WinRate w = evaluate_win_rate(
          env, victims, AdversarySetting::frozen(snapshot), config.eval_episodes,
          derive_seed(stream(config.seed, kAdversaryDomain, kEvalSeeds), static_cast<std::uint64_t>(k)));
      out.metrics.push_back(
          {k + 1, w.rate, reward_count ? reward_sum / reward_count : 0.0, loss, eps});
      if (!out.episodes_to_half && w.rate <= 0.5) out.episodes_to_half = k + 1;
      say(io, io.tag + " episode " + std::to_string(k + 1) + " victim win_rate " +
                  format_double(w.rate));
      reward_sum = 0.0;
      reward_count = 0;
      if (!io.dir.empty()) {
        write_file_atomic(io.dir / (io.tag + "_latest.ckpt"), learner_text(learner));
      }
    }
  }

  out.policy = FrozenPolicy::from_learner(learner);
  out.reward_model = model;
  out.victim_checksum = victim_checksum;
  out.under_attack = evaluate_win_rate(env, victims, AdversarySetting::frozen(out.policy),
                                       config.competence_episodes,
                                       stream(config.seed, kAdversaryDomain, kFinalEvalSeed));
  if (!io.dir.empty()) {
    write_file_atomic(io.dir / (io.tag + "_adversaries.policy"), policy_text(out.policy));
    write_file_atomic(io.dir / (io.tag + "_metrics.csv"), metrics_csv(out.metrics));
    std::ostringstream rm;
    save_checkpoint(rm, std::as_const(out.reward_model).params(), nullptr);
    write_file_atomic(io.dir / (io.tag + "_reward_model.ckpt"), rm.str());
  }
  return out;
}

DefenseResult retrain_victims_defense(const EnvConfig& env, const FrozenPolicy* adversaries,
                                      const FrozenPolicy& original, const TrainingConfig& config,
                                      const TrainingIo& io) {
  const AdversarySetting attack =
      adversaries ? AdversarySetting::frozen(*adversaries) : AdversarySetting::random();
  DefenseResult out;
  out.adversary_checksum = adversaries ? adversaries->checksum() : 0;
  VictimLoopResult loop = victim_loop(env, attack, config, kDefenseDomain, io);
  if (adversaries && adversaries->checksum() != out.adversary_checksum) {
    throw TrainingFault("phase separation: frozen adversary parameters changed");
  }
  const std::uint64_t eval_seed = stream(config.seed, kDefenseDomain, kFinalEvalSeed);
  const int n = config.competence_episodes;
  out.under_attack_before = evaluate_win_rate(env, original, attack, n, eval_seed);
  out.under_attack_after = evaluate_win_rate(env, loop.policy, attack, n, eval_seed);
  out.no_attack_before = evaluate_win_rate(env, original, AdversarySetting::random(), n, eval_seed);
  out.no_attack_after =
      evaluate_win_rate(env, loop.policy, AdversarySetting::random(), n, eval_seed);
  out.policy = std::move(loop.policy);
  out.metrics = std::move(loop.metrics);
  if (!io.dir.empty()) {
    write_file_atomic(io.dir / (io.tag + "_victims.policy"), policy_text(out.policy));
    write_file_atomic(io.dir / (io.tag + "_metrics.csv"), metrics_csv(out.metrics));
  }
  return out;
}

}  // namespace nalab
