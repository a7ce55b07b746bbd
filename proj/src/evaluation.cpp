#include "nalab/evaluation.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "nalab/config.hpp"
#include "nalab/errors.hpp"

namespace nalab {

WinRate wilson_interval(int wins, int episodes, double z) {
  if (episodes <= 0) throw ConfigError("win rate needs at least one episode");
  const double n = episodes;
  const double p = wins / n;
  const double z2 = z * z;
  const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {p, half, wins, episodes};
}

namespace {

struct EpisodeResult {
  bool success = false;
  double native_return = 0.0;
  int length = 0;
};

EpisodeResult play(Simulation& sim, const FrozenPolicy& victims,
                   const AdversarySetting& adversaries, std::uint64_t seed) {
  QController vc(victims, 0.0);
  RandomController random;
  std::unique_ptr<QController> ac;
  Controller* adv = nullptr;
  if (adversaries.kind == AdversarySetting::Kind::Random) adv = &random;
  if (adversaries.kind == AdversarySetting::Kind::Policy) {
    ac = std::make_unique<QController>(*adversaries.policy, 0.0);
    adv = ac.get();
  }
  RolloutOptions opts;
  opts.record_state = false;
  const EpisodeTrajectory traj = rollout_episode(sim, vc, adv, seed, opts);
  EpisodeResult r;
  r.success = traj.final_outcome.victim_success;
  r.length = traj.length();
  for (const auto& rec : traj.records) r.native_return += rec.native_reward;
  return r;
}

}  // namespace

EvaluationSummary evaluate_policies(const EnvConfig& env, const FrozenPolicy& victims,
                                    const AdversarySetting& adversaries, int episodes,
                                    std::uint64_t seed, int workers) {
  if (episodes <= 0) throw ConfigError("evaluation needs a positive episode count");
  if (adversaries.kind == AdversarySetting::Kind::Policy && !adversaries.policy) {
    throw ContractViolation("evaluation: adversary policy missing");
  }
  const EnvConfig cfg =
      adversaries.kind == AdversarySetting::Kind::Absent ? env.with_adversaries(0) : env;
  if (adversaries.kind == AdversarySetting::Kind::Policy &&
      adversaries.policy->agents() != cfg.adversaries()) {
    throw StructuralError("evaluation: adversary policy has " +
                          std::to_string(adversaries.policy->agents()) +
                          " agents, environment has " + std::to_string(cfg.adversaries()));
  }
  std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
  auto run_range = [&](int begin, int step) {
    auto sim = make_simulation(cfg);
    for (int i = begin; i < episodes; i += step) {
      results[static_cast<std::size_t>(i)] =
          play(*sim, victims, adversaries, derive_seed(seed, static_cast<std::uint64_t>(i)));
    }
  };
  workers = std::max(1, std::min(workers, episodes));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
    for (auto& t : pool) t.join();
  }
  EvaluationSummary s;
  int wins = 0;
  double ret = 0.0, len = 0.0;
  for (const auto& r : results) {
    wins += r.success ? 1 : 0;
    ret += r.native_return;
    len += r.length;
  }
  s.win = wilson_interval(wins, episodes);
  s.mean_native_return = ret / episodes;
  s.mean_length = len / episodes;
  return s;
}

WinRate evaluate_win_rate(const EnvConfig& env, const FrozenPolicy& victims,
                          const AdversarySetting& adversaries, int episodes, std::uint64_t seed,
                          int workers) {
  return evaluate_policies(env, victims, adversaries, episodes, seed, workers).win;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string WinRateTable::to_csv() const {
  std::ostringstream out;
  out << "label,under_attack,under_attack_std,no_attack,no_attack_std,no_neutrals,"
         "no_neutrals_std,reduction,reduction_std,seeds,episodes\n";
  for (const auto& r : rows) {
    out << r.label << ',' << format_double(r.under_attack) << ',' << format_double(r.under_attack_std)
        << ',' << format_double(r.no_attack) << ',' << format_double(r.no_attack_std) << ','
        << format_double(r.no_neutrals) << ',' << format_double(r.no_neutrals_std) << ','
        << format_double(r.reduction) << ',' << format_double(r.reduction_std) << ',' << r.seeds << ',' << r.episodes << '\n';
  }
  return out.str();
}

}  // namespace nalab
