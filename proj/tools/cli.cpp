#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "nalab/diagnostics.hpp"
#include "nalab/errors.hpp"
#include "nalab/experiment.hpp"
#include "nalab/manifest.hpp"
#include "nalab/oracle.hpp"
#include "nalab/training.hpp"

namespace nalab::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {
      "train-victim", "train-adversary", "evaluate",    "defend-retrain",
      "run-experiment", "oracle-check",  "grad-check",
  };
  return names;
}

std::string usage() {
  return "usage: nalab <subcommand> [--config PATH] [--seed N] [--set key=value]... "
         "[--out DIR] [--workers N]\n"
         "subcommands:\n"
         "  train-victim     train the victim team against randomly acting neutrals\n"
         "  train-adversary  train neutral adversaries against frozen victims (paths.victims)\n"
         "  evaluate         win rates of frozen victims with/without adversaries\n"
         "  defend-retrain   retrain victims against frozen adversaries (paths.adversaries)\n"
         "  run-experiment   run a research-question grid (experiment.id = rq1..rq5)\n"
         "  oracle-check     tabular proposition and argmax checks\n"
         "  grad-check       finite-difference gradient checks\n"
         "outputs go to --out, else $NALAB_OUT/<subcommand>, else runs/<subcommand>\n"
         "exit codes: 0 ok, 1 check failed, 2 config error, 3 missing input, 4 training fault\n";
}

namespace {

KeyValueConfig env_schema() {
  KeyValueConfig kv;
  kv.set("name", "skirmish");
  kv.merge_section("skirmish", SkirmishConfig{}.to_kv());
  kv.merge_section("corridor", CorridorConfig{}.to_kv());
  return kv;
}

std::vector<std::string> grid_labels(const KeyValueConfig& kv) {
  std::vector<std::string> labels;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("grid.", 0) != 0) continue;
    const auto dot = key.find('.', 5);
    if (dot == std::string::npos) continue;
    labels.push_back(key.substr(5, dot - 5));
  }
  return labels;
}

struct Run {
  std::string command;
  KeyValueConfig config;
  std::uint64_t seed = 1;
  fs::path out;
  int workers = 1;
  std::ostream* log = nullptr;
};

EnvConfig env_of(const Run& r) { return EnvConfig::from_kv(r.config.section("env")); }

TrainingConfig training_of(const Run& r, const std::string& section, std::uint64_t stream) {
  TrainingConfig c = TrainingConfig::from_kv(r.config.section(section));
  c.seed = derive_seed(r.seed, stream);
  return c;
}

fs::path required_path(const Run& r, const std::string& key) {
  if (!r.config.contains(key) || r.config.get_string(key).empty()) {
    throw DependencyError("missing required input: " + key + " is not set");
  }
  const fs::path p = r.config.get_string(key);
  if (!fs::exists(p)) throw DependencyError("missing checkpoint: " + p.string());
  return p;
}

FrozenPolicy load_policy(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DependencyError("cannot open checkpoint: " + p.string());
  return FrozenPolicy::load(in);
}

std::string policy_text(const FrozenPolicy& p) {
  std::ostringstream out;
  p.save(out);
  return out.str();
}

TrainingIo io_for(const Run& r, const std::string& tag) {
  TrainingIo io;
  io.dir = r.out / "checkpoints";
  io.tag = tag;
  std::ostream* log = r.log;
  io.log = [log](const std::string& m) {
    if (log) *log << m << '\n';
  };
  return io;
}

std::string rate_line(const std::string& condition, const WinRate& w) {
  return condition + "," + format_double(w.rate) + "," + format_double(w.half_width) + "," +
         std::to_string(w.wins) + "," + std::to_string(w.episodes) + "\n";
}

const char* kRateHeader = "condition,win_rate,half_width,wins,episodes\n";

int cmd_train_victim(const Run& r) {
  const EnvConfig env = env_of(r);
  const TrainingConfig cfg = training_of(r, "victim", 1);
  auto res = train_victims(env, cfg, io_for(r, "victims"));
  write_file_atomic(r.out / "victims.policy", policy_text(res.policy));
  write_file_atomic(r.out / "victims_metrics.csv", metrics_csv(res.metrics));
  write_file_atomic(r.out / "victims_summary.csv",
                    std::string(kRateHeader) + rate_line("no_attack", res.no_attack));
  *r.log << "no-attack win rate " << format_double(res.no_attack.rate) << " +/- "
         << format_double(res.no_attack.half_width) << '\n';
  require_competent(res, cfg.competence_floor);
  return kExitOk;
}

int cmd_train_adversary(const Run& r) {
  const EnvConfig env = env_of(r);
  const FrozenPolicy victims = load_policy(required_path(r, "paths.victims"));
  const TrainingConfig cfg = training_of(r, "adversary", 2);
  auto res = train_adversaries(env, victims, cfg, io_for(r, "adversaries"));
  write_file_atomic(r.out / "adversaries.policy", policy_text(res.policy));
  write_file_atomic(r.out / "adversaries_metrics.csv", metrics_csv(res.metrics));
  std::ostringstream rm;
  save_checkpoint(rm, std::as_const(res.reward_model).params(), nullptr);
  write_file_atomic(r.out / "reward_model.ckpt", rm.str());
  write_file_atomic(r.out / "adversaries_summary.csv",
                    std::string(kRateHeader) + rate_line("under_attack", res.under_attack));
  *r.log << "under-attack win rate " << format_double(res.under_attack.rate) << '\n';
  return kExitOk;
}

int cmd_evaluate(const Run& r) {
  const EnvConfig env = env_of(r);
  const FrozenPolicy victims = load_policy(required_path(r, "paths.victims"));
  const int episodes = static_cast<int>(r.config.contains("evaluation.episodes")
                                            ? r.config.get_int("evaluation.episodes")
                                            : 200);
  const std::uint64_t seed = derive_seed(r.seed, 4);
  std::string csv = kRateHeader;
  std::optional<FrozenPolicy> adversaries;
  if (r.config.contains("paths.adversaries") && !r.config.get_string("paths.adversaries").empty()) {
    adversaries = load_policy(required_path(r, "paths.adversaries"));
    csv += rate_line("under_attack", evaluate_win_rate(env, victims,
                                                       AdversarySetting::frozen(*adversaries),
                                                       episodes, seed, r.workers));
  }
  csv += rate_line("no_attack", evaluate_win_rate(env, victims, AdversarySetting::random(),
                                                  episodes, seed, r.workers));
  csv += rate_line("no_neutrals", evaluate_win_rate(env, victims, AdversarySetting::absent(),
                                                    episodes, seed, r.workers));
  write_file_atomic(r.out / "evaluation.csv", csv);
  *r.log << csv;
  return kExitOk;
}

int cmd_defend(const Run& r) {
  const EnvConfig env = env_of(r);
  const FrozenPolicy victims = load_policy(required_path(r, "paths.victims"));
  const FrozenPolicy adversaries = load_policy(required_path(r, "paths.adversaries"));
  const TrainingConfig cfg = training_of(r, "victim", 3);
  auto res = retrain_victims_defense(env, &adversaries, victims, cfg, io_for(r, "defense"));
  write_file_atomic(r.out / "retrained_victims.policy", policy_text(res.policy));
  write_file_atomic(r.out / "defense_metrics.csv", metrics_csv(res.metrics));
  std::string csv = kRateHeader;
  csv += rate_line("original_under_attack", res.under_attack_before);
  csv += rate_line("retrained_under_attack", res.under_attack_after);
  csv += rate_line("original_no_attack", res.no_attack_before);
  csv += rate_line("retrained_no_attack", res.no_attack_after);
  write_file_atomic(r.out / "defense.csv", csv);
  *r.log << csv;
  return kExitOk;
}

int cmd_experiment(const Run& r) {
  KeyValueConfig kv = r.config;
  if (!kv.contains("experiment.seeds")) {
    std::string seeds;
    for (std::uint64_t i = 0; i < 5; ++i) seeds += (i ? "," : "") + std::to_string(r.seed + i);
    kv.set("experiment.seeds", seeds);
  }
  ExperimentSpec spec = ExperimentSpec::from_kv(kv);
  spec.workers = r.workers;
  std::ostream* log = r.log;
  auto res = run_experiment(spec, r.out, [log](const std::string& m) { *log << m << '\n'; });
  for (const auto& w : res.warnings) *r.log << "warning: " << w << '\n';
  *r.log << res.table.to_csv();
  return kExitOk;
}

int cmd_oracle(const Run& r) {
  const double tol =
      r.config.contains("oracle.tolerance") ? r.config.get_double("oracle.tolerance") : 1e-9;
  const std::string named =
      r.config.contains("oracle.fixtures") ? r.config.get_string("oracle.fixtures") : "";
  const fs::path dir = named.empty() ? fs::path("fixtures/oracle") : fs::path(named);
  std::vector<TabularMDP> instances;
  if (!named.empty() || fs::is_directory(dir)) {
    instances = load_oracle_fixtures(dir);
    *r.log << "instances: " << instances.size() << " fixtures from " << dir.string() << '\n';
  } else {
    for (auto s : oracle_instance_seeds()) instances.push_back(random_tabular_mdp(s));
    *r.log << "instances: " << instances.size() << " generated from the documented seeds\n";
  }
  const PropositionResiduals res = check_propositions(instances, derive_seed(r.seed, 5));

  // Decentralised vs exhaustive argmax through random monotone mixers.
  Rng rng(derive_seed(r.seed, 6));
  int mismatches = 0;
  const int argmax_instances = 500;
  for (int i = 0; i < argmax_instances; ++i) {
    const int agents = 1 + static_cast<int>(rng() % 3);
    const int actions = 2 + static_cast<int>(rng() % 4);
    MonotonicMixer mixer("mixer", agents, 4, 8, rng);
    Vector cond(4);
    for (int k = 0; k < 4; ++k) cond(k) = 2.0 * uniform01(rng) - 1.0;
    std::vector<Vector> q;
    for (int a = 0; a < agents; ++a) {
      Vector v(actions);
      for (int k = 0; k < actions; ++k) v(k) = 4.0 * uniform01(rng) - 2.0;
      q.push_back(v);
    }
    const auto joint =
        brute_force_joint_argmax(q, [&](const Vector& x) { return mixer.forward_one(x, cond); });
    if (joint != decentralized_argmax(q)) ++mismatches;
  }

  std::ostringstream csv;
  csv << "check,instances,residual,tolerance,passed\n";
  auto line = [&](const std::string& name, int n, double v, double t) {
    csv << name << ',' << n << ',' << format_double(v) << ',' << format_double(t) << ','
        << (v < t ? "true" : "false") << '\n';
    return v < t;
  };
  bool ok = true;
  ok &= line("marginalization", res.instances, res.marginalization, tol);
  ok &= line("weighting", res.instances, res.weighting, tol);
  ok &= line("weighting_finite_horizon", res.instances, res.weighting_finite, tol);
  ok &= line("argmax_mismatches", argmax_instances, mismatches, 0.5);
  write_file_atomic(r.out / "oracle.csv", csv.str());
  *r.log << csv.str();
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_gradcheck(const Run& r) {
  const int seeds =
      static_cast<int>(r.config.contains("gradcheck.seeds") ? r.config.get_int("gradcheck.seeds") : 10);
  const double tol =
      r.config.contains("gradcheck.tolerance") ? r.config.get_double("gradcheck.tolerance") : 1e-4;
  const auto reports = run_gradient_suite(seeds, tol);
  std::ostringstream csv;
  csv << "component,seeds,max_relative_error,passed\n";
  bool ok = true;
  for (const auto& g : reports) {
    csv << g.component << ',' << g.seeds << ',' << format_double(g.max_relative_error) << ','
        << (g.passed ? "true" : "false") << '\n';
    ok &= g.passed;
  }
  write_file_atomic(r.out / "gradcheck.csv", csv.str());
  *r.log << csv.str();
  return ok ? kExitOk : kExitCheckFailed;
}

void finalize(RunManifest& m, const Run& r, const fs::path& manifest_path, const std::string& status) {
  m.status = status;
  m.finished = utc_timestamp();
  m.artifacts.clear();
  if (fs::exists(r.out)) {
    for (const auto& e : fs::recursive_directory_iterator(r.out)) {
      if (!e.is_regular_file() || e.path() == manifest_path) continue;
      if (e.path().extension() == ".tmp") continue;
      m.artifacts.push_back(fs::relative(e.path(), r.out));
    }
  }
  std::sort(m.artifacts.begin(), m.artifacts.end());
  write_manifest(manifest_path, m);
}

}  // namespace

KeyValueConfig config_schema(const KeyValueConfig& user) {
  KeyValueConfig kv;
  kv.set("seed", "1");
  kv.merge_section("env", env_schema());
  kv.merge_section("victim", TrainingConfig{}.to_kv());
  kv.merge_section("adversary", TrainingConfig{}.to_kv());
  const KeyValueConfig preset = experiment_preset("custom");
  for (const auto& [k, v] : preset.entries()) kv.set(k, v);
  kv.set("experiment.id", "custom");
  kv.set("experiment.train", "true");
  kv.set("experiment.resume", "false");
  kv.set("experiment.checkpoint_dir", "");
  kv.set("experiment.workers", "1");
  kv.set("evaluation.episodes", "200");
  kv.set("paths.victims", "");
  kv.set("paths.adversaries", "");
  kv.set("oracle.fixtures", "");
  kv.set("oracle.tolerance", "1e-9");
  kv.set("gradcheck.seeds", "10");
  kv.set("gradcheck.tolerance", "0.0001");
  for (const auto& label : grid_labels(user)) kv.merge_section("grid." + label, env_schema());
  return kv;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto& names = subcommands();
  if (args.empty() || std::find(names.begin(), names.end(), args[0]) == names.end()) {
    if (!args.empty() && (args[0] == "--help" || args[0] == "-h")) {
      out << usage();
      return kExitOk;
    }
    err << (args.empty() ? "missing subcommand\n" : "unknown subcommand: " + args[0] + "\n")
        << usage();
    return kExitConfig;
  }

  CLI::App app{"nalab " + args[0]};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out_dir;
  int workers = 1;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--set", sets, "override, key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "evaluation workers")->check(CLI::PositiveNumber);
  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << usage();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << usage();
    return kExitConfig;
  }

  Run run;
  run.command = args[0];
  run.workers = workers;
  run.log = &out;
  RunManifest manifest;
  fs::path manifest_path;
  bool started = false;
  try {
    KeyValueConfig cfg = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    KeyValueConfig overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("override must be key=value: " + s);
      overrides.set(KeyValueConfig::parse(s).entries().begin()->first,
                    KeyValueConfig::parse(s).entries().begin()->second);
    }
    KeyValueConfig merged = cfg;
    for (const auto& [k, v] : overrides.entries()) merged.set(k, v);
    const KeyValueConfig schema = config_schema(merged);
    cfg.check_keys(schema);
    for (const auto& s : sets) cfg.apply_override(s, schema);
    if (seed) cfg.set("seed", std::to_string(*seed));
    run.seed = cfg.contains("seed") ? static_cast<std::uint64_t>(cfg.get_int("seed")) : 1;
    run.config = cfg;

    if (!out_dir.empty()) {
      run.out = out_dir;
    } else if (const char* root = std::getenv("NALAB_OUT"); root && *root) {
      run.out = fs::path(root) / run.command;
    } else {
      run.out = fs::path("runs") / run.command;
    }
    fs::create_directories(run.out);

    const fs::path archived = run.out / "config.archived.cfg";
    write_file_atomic(archived, cfg.canonical_text());
    manifest.command = run.command;
    manifest.config_hash = hash_hex(cfg.hash());
    manifest.archived_config = archived.filename();
    manifest.seeds = {run.seed};
    manifest.code_version = code_version();
    manifest.started = utc_timestamp();
    manifest_path = run.out / "manifest.json";
    write_manifest(manifest_path, manifest);
    started = true;

    int code = kExitOk;
    if (run.command == "train-victim") code = cmd_train_victim(run);
    else if (run.command == "train-adversary") code = cmd_train_adversary(run);
    else if (run.command == "evaluate") code = cmd_evaluate(run);
    else if (run.command == "defend-retrain") code = cmd_defend(run);
    else if (run.command == "run-experiment") code = cmd_experiment(run);
    else if (run.command == "oracle-check") code = cmd_oracle(run);
    else if (run.command == "grad-check") code = cmd_gradcheck(run);
    finalize(manifest, run, manifest_path, code == kExitOk ? "complete" : "check-failed");
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    if (started) finalize(manifest, run, manifest_path, "config-error");
    return kExitConfig;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << '\n';
    if (started) finalize(manifest, run, manifest_path, "config-error");
    return kExitConfig;
  } catch (const DependencyError& e) {
    err << "missing input: " << e.what() << '\n';
    if (started) finalize(manifest, run, manifest_path, "dependency-error");
    return kExitDependency;
  } catch (const StructuralError& e) {
    err << "unreadable input: " << e.what() << '\n';
    if (started) finalize(manifest, run, manifest_path, "dependency-error");
    return kExitDependency;
  } catch (const TrainingFault& e) {
    err << "training fault: " << e.what() << '\n';
    if (started) finalize(manifest, run, manifest_path, "training-fault");
    return kExitTraining;
  }
}

}  // namespace nalab::cli
