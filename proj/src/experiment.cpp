#include "nalab/experiment.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "nalab/errors.hpp"
#include "nalab/manifest.hpp"

namespace nalab {

namespace {

std::string point_name(const std::string& label, RewardMode mode, int adversaries,
                       std::uint64_t seed) {
  return label + "_" + to_string(mode) + "_adv" + std::to_string(adversaries) + "_seed" +
         std::to_string(seed);
}

std::string victim_name(const std::string& label, std::uint64_t seed) {
  return label + "_seed" + std::to_string(seed);
}

FrozenPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing checkpoint: " + path.string());
  return FrozenPolicy::load(in);
}

std::string policy_text(const FrozenPolicy& p) {
  std::ostringstream out;
  p.save(out);
  return out.str();
}

// Seeds for the phases of one grid seed; evaluation uses its own stream so it
// never overlaps a training episode.
std::uint64_t victim_seed(std::uint64_t seed) { return derive_seed(seed, 0x7669); }
std::uint64_t adversary_seed(std::uint64_t seed) { return derive_seed(seed, 0x6164); }
std::uint64_t defense_seed(std::uint64_t seed) { return derive_seed(seed, 0x6466); }
std::uint64_t eval_seed(std::uint64_t seed) { return derive_seed(seed, 0x6576); }

}  // namespace

KeyValueConfig experiment_preset(const std::string& id) {
  KeyValueConfig kv;
  kv.set("experiment.grid", "small");
  kv.set("experiment.modes", "estimation_based");
  kv.set("experiment.adversaries", "");
  kv.set("experiment.seeds", "1,2,3,4,5");
  kv.set("experiment.eval_episodes", "200");
  kv.set("experiment.defense", "false");
  if (id == "rq1") {
    kv.set("experiment.grid", "small,corridor");
    kv.set("grid.corridor.name", "corridor");
  } else if (id == "rq2") {
    kv.set("experiment.modes", "traditional,rule_based_immediate,estimation_based");
    kv.set("adversary.victim_reward_access", "true");
  } else if (id == "rq3") {
    kv.set("experiment.adversaries", "1,2,3");
  } else if (id == "rq4") {
    kv.set("experiment.grid", "small,even,hard");
    kv.set("grid.even.skirmish.opponent_health", "5");
    kv.set("grid.hard.skirmish.opponents", "3");
  } else if (id == "rq5") {
    kv.set("experiment.adversaries", "2");
    kv.set("experiment.defense", "true");
  }
  return kv;
}

void ExperimentSpec::validate() const {
  if (empty()) return;
  if (seeds.size() < 5) throw ConfigError("experiment: at least 5 seeds per grid point");
  if (eval_episodes <= 0) throw ConfigError("experiment: eval_episodes must be positive");
  for (int k : adversary_counts) {
    if (k <= 0) throw ConfigError("experiment: adversary counts must be positive");
  }
  if (!train && checkpoint_dir.empty()) {
    throw ConfigError("experiment: train = false needs a checkpoint_dir");
  }
  victim.validate();
  for (RewardMode m : modes) {
    if (m == RewardMode::Traditional && !adversary.victim_reward_access) {
      throw ConfigError("experiment: traditional mode needs adversary.victim_reward_access = true");
    }
  }
}

ExperimentSpec ExperimentSpec::from_kv(const KeyValueConfig& user) {
  const std::string id =
      user.contains("experiment.id") ? user.get_string("experiment.id") : std::string("custom");
  KeyValueConfig kv = experiment_preset(id);
  for (const auto& [k, v] : user.entries()) kv.set(k, v);

  ExperimentSpec spec;
  spec.id = id;
  const KeyValueConfig base_env = kv.section("env");
  for (const auto& label : kv.get_string_list("experiment.grid")) {
    KeyValueConfig env_kv = base_env;
    const KeyValueConfig section = kv.section("grid." + label);
    for (const auto& [k, v] : section.entries()) env_kv.set(k, v);
    spec.envs.push_back({label, EnvConfig::from_kv(env_kv)});
  }
  for (const auto& m : kv.get_string_list("experiment.modes")) {
    spec.modes.push_back(parse_reward_mode(m));
  }
  for (long long k : kv.get_int_list("experiment.adversaries")) {
    spec.adversary_counts.push_back(static_cast<int>(k));
  }
  for (long long s : kv.get_int_list("experiment.seeds")) {
    spec.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  spec.eval_episodes = static_cast<int>(kv.get_int("experiment.eval_episodes"));
  spec.defense = kv.get_bool("experiment.defense");
  if (kv.contains("experiment.train")) spec.train = kv.get_bool("experiment.train");
  if (kv.contains("experiment.resume")) spec.resume = kv.get_bool("experiment.resume");
  if (kv.contains("experiment.checkpoint_dir")) {
    spec.checkpoint_dir = kv.get_string("experiment.checkpoint_dir");
  }
  if (kv.contains("experiment.workers")) {
    spec.workers = static_cast<int>(kv.get_int("experiment.workers"));
  }
  // Adversary settings may name a mode the grid overrides; parse leniently.
  KeyValueConfig adv = kv.section("adversary");
  if (adv.contains("reward_mode") && adv.get_string("reward_mode") == "traditional" &&
      !(adv.contains("victim_reward_access") && adv.get_bool("victim_reward_access"))) {
    adv.set("reward_mode", "estimation_based");
  }
  spec.victim = TrainingConfig::from_kv(kv.section("victim"));
  spec.adversary = TrainingConfig::from_kv(adv);
  spec.validate();
  return spec;
}

std::string points_csv(const std::vector<PointResult>& points) {
  std::ostringstream out;
  out << "label,mode,adversaries,seed,victims_no_attack,under_attack,no_attack,no_neutrals,"
         "episodes_to_half,retrained_under_attack,retrained_no_attack,retrained_no_neutrals\n";
  for (const auto& p : points) {
    out << p.label << ',' << to_string(p.mode) << ',' << p.adversaries << ',' << p.seed << ','
        << format_double(p.victims_no_attack) << ',' << format_double(p.under_attack) << ','
        << format_double(p.no_attack) << ',' << format_double(p.no_neutrals) << ','
        << (p.episodes_to_half ? std::to_string(*p.episodes_to_half) : std::string("")) << ','
        << format_double(p.retrained_under_attack) << ','
        << format_double(p.retrained_no_attack) << ','
        << format_double(p.retrained_no_neutrals) << '\n';
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                                const std::function<void(const std::string&)>& log) {
  spec.validate();
  ExperimentResult result;
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  auto emit = [&](const std::filesystem::path& rel, const std::string& text) {
    write_file_atomic(out_dir / rel, text);
    result.artifacts.push_back(out_dir / rel);
  };

  if (spec.empty()) {
    result.warnings.push_back("experiment " + spec.id + ": empty grid, nothing to run");
    emit("table.csv", result.table.to_csv());
    return result;
  }

  const std::filesystem::path ckpt =
      spec.checkpoint_dir.empty() ? out_dir / "checkpoints" : spec.checkpoint_dir;
  auto counts_for = [&](const GridEnv& g) {
    return spec.adversary_counts.empty() ? std::vector<int>{g.env.adversaries()}
                                         : spec.adversary_counts;
  };

  if (!spec.train) {
    std::vector<std::string> missing;
    for (const auto& g : spec.envs) {
      for (auto seed : spec.seeds) {
        const auto v = ckpt / (victim_name(g.label, seed) + "_victims.policy");
        if (!std::filesystem::exists(v)) missing.push_back(v.string());
        for (auto mode : spec.modes) {
          for (int k : counts_for(g)) {
            const auto a = ckpt / (point_name(g.label, mode, k, seed) + "_adversaries.policy");
            if (!std::filesystem::exists(a)) missing.push_back(a.string());
          }
        }
      }
    }
    if (!missing.empty()) {
      std::string msg = "missing checkpoints (training disabled):";
      for (const auto& m : missing) msg += "\n  " + m;
      throw DependencyError(msg);
    }
  }

  std::ostringstream long_csv;
  long_csv << "experiment,label,mode,adversaries,seed,phase,episode,win_rate,mean_episode_reward,"
              "loss,epsilon\n";
  auto add_curve = [&](const std::string& label, RewardMode mode, int k, std::uint64_t seed,
                       const std::string& phase, const std::vector<MetricRow>& rows) {
    for (const auto& r : rows) {
      long_csv << spec.id << ',' << label << ',' << to_string(mode) << ',' << k << ',' << seed
               << ',' << phase << ',' << r.episode << ',' << format_double(r.win_rate) << ','
               << format_double(r.mean_episode_reward) << ',' << format_double(r.loss) << ','
               << format_double(r.epsilon) << '\n';
    }
  };

  for (const auto& g : spec.envs) {
    for (auto seed : spec.seeds) {
      // Victims are shared by every mode and adversary count of this seed.
      FrozenPolicy victims;
      double victims_no_attack = 0.0;
      std::vector<MetricRow> victim_curve;
      const auto vpath = ckpt / (victim_name(g.label, seed) + "_victims.policy");
      if (spec.train && !(spec.resume && std::filesystem::exists(vpath))) {
        TrainingConfig vc = spec.victim;
        vc.seed = victim_seed(seed);
        TrainingIo io;
        io.tag = victim_name(g.label, seed);
        io.log = log;
        say("training victims " + io.tag);
        auto v = train_victims(g.env, vc, io);
        victims = std::move(v.policy);
        victim_curve = std::move(v.metrics);
        write_file_atomic(vpath, policy_text(victims));
        emit(std::filesystem::path("curves") / (victim_name(g.label, seed) + "_victims.csv"),
             metrics_csv(victim_curve));
      } else {
        say("loading victims " + vpath.string());
        victims = load_policy(vpath);
      }
      victims_no_attack = evaluate_win_rate(g.env, victims, AdversarySetting::random(),
                                            spec.eval_episodes, eval_seed(seed), spec.workers)
                              .rate;
      add_curve(g.label, RewardMode::EstimationBased, g.env.adversaries(), seed, "victims",
                victim_curve);

      for (auto mode : spec.modes) {
        for (int k : counts_for(g)) {
          const EnvConfig env = g.env.with_adversaries(k);
          const std::string name = point_name(g.label, mode, k, seed);
          const auto apath = ckpt / (name + "_adversaries.policy");
          PointResult p;
          p.label = g.label;
          p.mode = mode;
          p.adversaries = k;
          p.seed = seed;
          p.victims_no_attack = victims_no_attack;
          FrozenPolicy adversaries;
          if (spec.train && !(spec.resume && std::filesystem::exists(apath))) {
            TrainingConfig ac = spec.adversary;
            ac.reward_mode = mode;
            ac.seed = adversary_seed(seed);
            TrainingIo io;
            io.tag = name;
            io.log = log;
            say("training adversaries " + name);
            auto a = train_adversaries(env, victims, ac, io);
            adversaries = std::move(a.policy);
            p.episodes_to_half = a.episodes_to_half;
            write_file_atomic(apath, policy_text(adversaries));
            emit(std::filesystem::path("curves") / (name + "_adversaries.csv"),
                 metrics_csv(a.metrics));
            add_curve(g.label, mode, k, seed, "adversaries", a.metrics);
          } else {
            say("loading adversaries " + apath.string());
            adversaries = load_policy(apath);
          }
          const std::uint64_t es = eval_seed(seed);
          p.under_attack = evaluate_win_rate(env, victims, AdversarySetting::frozen(adversaries),
                                             spec.eval_episodes, es, spec.workers)
                               .rate;
          p.no_attack = evaluate_win_rate(env, victims, AdversarySetting::random(),
                                          spec.eval_episodes, es, spec.workers)
                            .rate;
          p.no_neutrals = evaluate_win_rate(env, victims, AdversarySetting::absent(),
                                            spec.eval_episodes, es, spec.workers)
                              .rate;
          if (spec.defense) {
            TrainingConfig dc = spec.victim;
            dc.seed = defense_seed(seed);
            TrainingIo io;
            io.tag = name + "_defense";
            io.log = log;
            say("retraining victims " + name);
            auto d = retrain_victims_defense(env, &adversaries, victims, dc, io);
            emit(std::filesystem::path("curves") / (name + "_defense.csv"),
                 metrics_csv(d.metrics));
            add_curve(g.label, mode, k, seed, "defense", d.metrics);
            p.retrained_under_attack =
                evaluate_win_rate(env, d.policy, AdversarySetting::frozen(adversaries),
                                  spec.eval_episodes, es, spec.workers)
                    .rate;
            p.retrained_no_attack = evaluate_win_rate(env, d.policy, AdversarySetting::random(),
                                                      spec.eval_episodes, es, spec.workers)
                                        .rate;
            p.retrained_no_neutrals =
                evaluate_win_rate(env, d.policy, AdversarySetting::absent(), spec.eval_episodes,
                                  es, spec.workers)
                    .rate;
          }
          result.points.push_back(p);

          RunManifest m;
          m.command = "run-experiment";
          m.config_hash = hash_hex(env.to_kv().hash());
          m.seeds = {seed};
          m.code_version = code_version();
          m.started = m.finished = utc_timestamp();
          m.status = "complete";
          m.artifacts = {vpath, apath};
          emit(std::filesystem::path("manifests") / (name + ".json"), m.to_json());
        }
      }
    }
  }

  // Aggregate per (label, mode, adversaries) in grid order.
  struct Acc {
    std::vector<double> ua, na, nn, red, rua, rna, rnn;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (const auto& p : result.points) {
    const std::string key =
        p.label + "/" + to_string(p.mode) + "/adv" + std::to_string(p.adversaries);
    if (!acc.contains(key)) order.push_back(key);
    auto& a = acc[key];
    a.ua.push_back(p.under_attack);
    a.na.push_back(p.no_attack);
    a.nn.push_back(p.no_neutrals);
    a.red.push_back(p.no_attack - p.under_attack);
    a.rua.push_back(p.retrained_under_attack);
    a.rna.push_back(p.retrained_no_attack);
    a.rnn.push_back(p.retrained_no_neutrals);
  }
  for (const auto& key : order) {
    const auto& a = acc[key];
    WinRateRow row;
    row.label = key;
    row.under_attack = mean(a.ua);
    row.under_attack_std = sample_std(a.ua);
    row.no_attack = mean(a.na);
    row.no_attack_std = sample_std(a.na);
    row.no_neutrals = mean(a.nn);
    row.no_neutrals_std = sample_std(a.nn);
    row.reduction = mean(a.red);
    row.reduction_std = sample_std(a.red);
    row.seeds = static_cast<int>(a.ua.size());
    row.episodes = spec.eval_episodes;
    result.table.rows.push_back(row);
    if (spec.defense) {
      WinRateRow r = row;
      r.label = key + "/retrained";
      r.under_attack = mean(a.rua);
      r.under_attack_std = sample_std(a.rua);
      r.no_attack = mean(a.rna);
      r.no_attack_std = sample_std(a.rna);
      r.no_neutrals = mean(a.rnn);
      r.no_neutrals_std = sample_std(a.rnn);
      std::vector<double> red;
      for (std::size_t i = 0; i < a.rua.size(); ++i) red.push_back(a.rna[i] - a.rua[i]);
      r.reduction = mean(red);
      r.reduction_std = sample_std(red);
      result.table.rows.push_back(r);
    }
  }

  emit("table.csv", result.table.to_csv());
  emit("points.csv", points_csv(result.points));
  emit("long.csv", long_csv.str());
  return result;
}

}  // namespace nalab
