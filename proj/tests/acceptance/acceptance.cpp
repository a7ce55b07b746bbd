// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. NALAB_ACCEPTANCE_CRITERIA=1,4,7 restricts the run;
// NALAB_ACCEPTANCE_DIR keeps the experiment outputs somewhere inspectable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "nalab/diagnostics.hpp"
#include "nalab/errors.hpp"
#include "nalab/experiment.hpp"
#include "nalab/manifest.hpp"
#include "nalab/oracle.hpp"
#include "nalab/qmix.hpp"
#include "nalab/reward.hpp"
#include "nalab/rollout.hpp"

using namespace nalab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Reference computations written independently of the library solvers.

// Optimal adversary Q on the full model, averaging the fixed parties inside
// every backup by explicit loops.
Matrix reference_full_q(const TabularMDP& m, const std::vector<double>& w) {
  Matrix q = Matrix::Zero(m.states, m.adversary_actions);
  for (int it = 0; it < 100000; ++it) {
    Vector v(m.states);
    for (int s = 0; s < m.states; ++s) v(s) = q.row(s).maxCoeff();
    Matrix nq = Matrix::Zero(m.states, m.adversary_actions);
    for (int s = 0; s < m.states; ++s) {
      for (int a = 0; a < m.adversary_actions; ++a) {
        double total = 0.0;
        for (int vi = 0; vi < m.victim_actions; ++vi) {
          for (int t = 0; t < m.third_actions; ++t) {
            const auto row = m.row(s, a, vi, t);
            double r = 0.0;
            for (int k = 0; k < m.paths; ++k) r += w[k] * m.reward[row][k];
            double next = 0.0;
            for (int s2 = 0; s2 < m.states; ++s2) next += m.transition[row][s2] * v(s2);
            total += m.victim_policy[s][vi] * m.third_policy[s][t] * (r + m.gamma * next);
          }
        }
        nq(s, a) = total;
      }
    }
    const double delta = (nq - q).cwiseAbs().maxCoeff();
    q = nq;
    if (delta < 1e-14) break;
  }
  return q;
}

// Per-path Q of a fixed adversary policy by iterating the component Bellman
// operator.
std::vector<Matrix> reference_vector_q(const TabularMDP& m, const TabularPolicy& pi) {
  std::vector<Matrix> q(m.paths, Matrix::Zero(m.states, m.adversary_actions));
  for (int it = 0; it < 100000; ++it) {
    double delta = 0.0;
    std::vector<Matrix> nq(m.paths, Matrix::Zero(m.states, m.adversary_actions));
    for (int k = 0; k < m.paths; ++k) {
      Vector v(m.states);
      for (int s = 0; s < m.states; ++s) {
        double acc = 0.0;
        for (int a = 0; a < m.adversary_actions; ++a) acc += pi[s][a] * q[k](s, a);
        v(s) = acc;
      }
      for (int s = 0; s < m.states; ++s) {
        for (int a = 0; a < m.adversary_actions; ++a) {
          double total = 0.0;
          for (int vi = 0; vi < m.victim_actions; ++vi) {
            for (int t = 0; t < m.third_actions; ++t) {
              const auto row = m.row(s, a, vi, t);
              double next = 0.0;
              for (int s2 = 0; s2 < m.states; ++s2) next += m.transition[row][s2] * v(s2);
              total += m.victim_policy[s][vi] * m.third_policy[s][t] *
                       (m.reward[row][k] + m.gamma * next);
            }
          }
          nq[k](s, a) = total;
        }
      }
      delta = std::max(delta, (nq[k] - q[k]).cwiseAbs().maxCoeff());
    }
    q = nq;
    if (delta < 1e-14) break;
  }
  return q;
}

std::vector<double> random_weights(int n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = uniform01(rng);
  w[rng() % static_cast<std::uint64_t>(n)] += 0.1;
  return w;
}

std::vector<TabularMDP> fixture_instances() {
  return load_oracle_fixtures(fs::path(NALAB_SOURCE_DIR) / "fixtures" / "oracle");
}

// Relative error with a small floor so exact zeros do not divide by zero.
double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central differences over every entry of `params`, compared with the grads
// the backward pass left in them.
double fd_compare(const ParamRefs& params, const std::function<double()>& loss,
                  const std::function<void()>& backward) {
  zero_grad(params);
  backward();
  std::vector<Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  zero_grad(params);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k]->value.size(); ++i) {
      double& x = params[k]->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      worst = std::max(worst, rel_err(analytic[k].data()[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return m;
}

// ---------------------------------------------------------------------------

Verdict criterion_1() {
  const auto t0 = Clock::now();
  const auto instances = fixture_instances();
  Rng rng(101);
  double worst = 0.0, worst_lib = 0.0;
  for (const auto& m : instances) {
    const auto w = random_weights(m.paths, rng);
    const auto r = scalarize(m.reward, w);
    const Matrix reduced = reduced_value_iteration(marginalize_fixed_parties(m), scalarize(
        marginalize_fixed_parties(m).reward, w));
    worst = std::max(worst, max_abs_diff(reference_full_q(m, w), reduced));
    worst_lib = std::max(worst_lib, max_abs_diff(value_iteration(m, r), reduced));
  }
  const double t = seconds_since(t0);
  const bool pass = instances.size() == 20 && worst <= 1e-9 && worst_lib <= 1e-9 && t < 10.0;
  return {pass, std::to_string(instances.size()) + " instances, sup|Q_full - Q_marg| = " +
                    fmt(std::max(worst, worst_lib)) + " (tol 1e-9), " + fmt(t) + " s"};
}

Verdict criterion_2() {
  const auto t0 = Clock::now();
  const auto instances = fixture_instances();
  Rng rng(202);
  double worst = 0.0;
  for (const auto& m : instances) {
    const auto w = random_weights(m.paths, rng);
    const auto pi = random_policy(m.states, m.adversary_actions, rng);
    const auto vec = reference_vector_q(m, pi);
    Matrix dotted = Matrix::Zero(m.states, m.adversary_actions);
    for (int k = 0; k < m.paths; ++k) dotted += w[k] * vec[k];
    const Matrix scalar = scalar_policy_evaluation(m, scalarize(m.reward, w), pi);
    worst = std::max(worst, max_abs_diff(dotted, scalar));
    const auto lib_vec = vector_policy_evaluation(m, pi);
    Matrix lib_dotted = Matrix::Zero(m.states, m.adversary_actions);
    for (int k = 0; k < m.paths; ++k) lib_dotted += w[k] * lib_vec[k];
    worst = std::max(worst, max_abs_diff(lib_dotted, scalar));
  }
  const double t = seconds_since(t0);
  const bool pass = instances.size() == 20 && worst <= 1e-9 && t < 10.0;
  return {pass, std::to_string(instances.size()) + " instances, sup|Q_W.R - W.Q_vec| = " +
                    fmt(worst) + " (tol 1e-9), " + fmt(t) + " s"};
}

Verdict criterion_3() {
  const auto t0 = Clock::now();
  Rng rng(303);
  double min_slope = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const int c = 1 + static_cast<int>(rng() % 8);
    const int e = 1 + static_cast<int>(rng() % 16);
    MonotonicMixer mixer("mixer", n, c, e, rng);
    const Vector cond = random_matrix(c, 1, rng) * 2.0;
    const Vector q = random_matrix(n, 1, rng) * 5.0;
    for (int i = 0; i < n; ++i) {
      Vector up = q, down = q;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      min_slope = std::min(min_slope,
                           (mixer.forward_one(up, cond) - mixer.forward_one(down, cond)) / 2e-6);
    }
  }
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3);
    const int a = 2 + static_cast<int>(rng() % 4);
    MonotonicMixer mixer("mixer", n, 4, 8, rng);
    const Vector cond = random_matrix(4, 1, rng);
    std::vector<Vector> q;
    for (int i = 0; i < n; ++i) q.push_back(random_matrix(a, 1, rng) * 3.0);
    auto mix = [&](const Vector& x) { return mixer.forward_one(x, cond); };
    if (brute_force_joint_argmax(q, mix) != decentralized_argmax(q)) ++mismatches;
  }
  const double t = seconds_since(t0);
  const bool pass = min_slope >= -1e-9 && mismatches == 0 && t < 60.0;
  return {pass, "min dQtot/dQi over 1000 mixers = " + fmt(min_slope) + " (>= -1e-9), argmax " +
                    "mismatches " + std::to_string(mismatches) + "/500, " + fmt(t) + " s"};
}

Verdict criterion_4() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(4000 + seed);
    {
      Mlp net("mlp", {5, 7, 6, 3}, rng);
      const Matrix x = random_matrix(4, 5, rng), y = random_matrix(4, 3, rng);
      auto loss = [&] { return (net.forward(x) - y).squaredNorm(); };
      auto back = [&] {
        MlpCache cache;
        const Matrix out = net.forward(x, &cache);
        net.backward(cache, 2.0 * (out - y));
      };
      worst["mlp"] = std::max(worst["mlp"], fd_compare(net.params(), loss, back));
    }
    {
      LstmCell cell("lstm", 4, 5, rng);
      std::vector<Vector> xs;
      std::vector<double> ys;
      for (int t = 0; t < 5; ++t) {
        xs.push_back(random_matrix(4, 1, rng));
        ys.push_back(2.0 * uniform01(rng) - 1.0);
      }
      auto unroll = [&](std::vector<LstmStepCache>* caches, std::vector<double>* outs) {
        RecurrentState s = RecurrentState::zeros(5);
        double l = 0.0;
        for (int t = 0; t < 5; ++t) {
          auto r = cell.step(xs[t], s);
          l += (r.output - ys[t]) * (r.output - ys[t]);
          if (caches) caches->push_back(r.cache);
          if (outs) outs->push_back(r.output);
          s = r.next;
        }
        return l;
      };
      auto back = [&] {
        std::vector<LstmStepCache> caches;
        std::vector<double> outs;
        unroll(&caches, &outs);
        RecurrentState d = RecurrentState::zeros(5);
        for (int t = 4; t >= 0; --t) d = cell.backward_step(caches[t], 2.0 * (outs[t] - ys[t]), d).second;
      };
      worst["lstm_unroll"] = std::max(
          worst["lstm_unroll"], fd_compare(cell.params(), [&] { return unroll(nullptr, nullptr); }, back));
    }
    {
      MonotonicMixer mixer("mixer", 3, 6, 5, rng);
      Matrix q = random_matrix(4, 3, rng) * 2.0;
      const Matrix cond = random_matrix(4, 6, rng);
      const Vector c = random_matrix(4, 1, rng);
      auto loss = [&] { return c.dot(mixer.forward(q, cond)); };
      Matrix dq;
      auto back = [&] {
        MixerCache cache;
        mixer.forward(q, cond, &cache);
        dq = mixer.backward(cache, c);
      };
      double w = fd_compare(mixer.params(), loss, back);
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        const double saved = q.data()[i];
        q.data()[i] = saved + 1e-5;
        const double up = loss();
        q.data()[i] = saved - 1e-5;
        const double down = loss();
        q.data()[i] = saved;
        w = std::max(w, rel_err(dq.data()[i], (up - down) / 2e-5));
      }
      worst["mixer"] = std::max(worst["mixer"], w);
    }
    {
      RewardModel model(4, 6, rng);
      std::vector<Vector> xs;
      for (int t = 0; t < 6; ++t) xs.push_back(random_matrix(4, 1, rng));
      const double target = 3.0 * uniform01(rng);
      auto loss = [&] {
        double sum = 0.0;
        for (double m : model.estimate_episode(xs)) sum += m;
        return (target - sum) * (target - sum);
      };
      auto back = [&] { model.episode_loss(xs, target, true); };
      worst["reward_model_loss"] =
          std::max(worst["reward_model_loss"], fd_compare(model.params(), loss, back));
    }
  }
  const double t = seconds_since(t0);
  bool pass = t < 60.0;
  std::string detail;
  for (const auto& [name, w] : worst) {
    pass = pass && w <= 1e-4;
    detail += name + " " + fmt(w) + ", ";
  }
  return {pass, "max relative error over 10 seeds: " + detail + "tol 1e-4, " + fmt(t) + " s"};
}

Verdict criterion_5() {
  int checks = 0, failures = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };
  // Rules 1-3 over every flag combination.
  for (bool terminal : {false, true}) {
    for (bool success : {false, true}) {
      for (double r_fail : {20.0, 7.5, 1.0}) {
        StepOutcome o;
        o.terminal = terminal;
        o.victim_success = terminal && success;
        o.victim_failed = terminal && !success;
        if (!terminal) {
          bool threw = false;
          try {
            rule_based_terminal_reward(o, r_fail);
          } catch (const ContractViolation&) {
            threw = true;
          }
          expect(threw);
          continue;
        }
        const auto g = rule_based_terminal_reward(o, r_fail);
        expect(g.value == (success ? 0.0 : r_fail));
        expect(g.source == (success ? OutcomeSource::VictimSuccess : OutcomeSource::VictimFailure));
      }
    }
  }
  // Rules 4 and 5 on recorded episodes of both environments.
  for (const EnvConfig env : {EnvConfig{SkirmishConfig{}}, EnvConfig{CorridorConfig{}}}) {
    auto sim = make_simulation(env);
    const int paths = sim->descriptor().failure_path_count();
    Rng wrng(55);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      RandomController v, a;
      const auto traj = rollout_episode(*sim, v, &a, seed);
      std::vector<double> w(static_cast<std::size_t>(paths));
      for (auto& x : w) x = std::floor(uniform01(wrng) * 8.0) / 4.0 + 0.25;
      AdversaryRewardSettings st;
      st.weights = WeightVector(w);
      st.r_fail = 20.0;
      const auto gt = ground_truth_step_rewards(traj, 20.0);
      const auto warm = adversary_step_rewards(traj, RewardMode::EstimationBased, st, nullptr, true);
      const auto rule = adversary_step_rewards(traj, RewardMode::RuleBasedImmediate, st, nullptr, false);
      const double terminal = traj.final_outcome.victim_success ? 0.0 : 20.0;
      for (int t = 0; t < traj.length(); ++t) {
        const auto& sig = traj.records[t].signals;
        double dot = 0.0;
        for (int k = 0; k < paths; ++k) dot += w[k] * sig[k];
        const bool last = t + 1 == traj.length();
        expect(gt[t] == (last ? terminal : 0.0));
        expect(warm[t] == gt[t]);
        expect(rule_based_immediate_reward(sig, st.weights, StateAccess::Oracle) == dot);
        expect(rule[t] == (last ? dot + terminal : dot));
      }
      bool threw = false;
      try {
        rule_based_immediate_reward(traj.records[0].signals, st.weights, StateAccess::Deployment);
      } catch (const ModeError&) {
        threw = true;
      }
      expect(threw);
    }
  }
  return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) +
                             " outcome-rule checks exact"};
}

Verdict criterion_6() {
  const auto t0 = Clock::now();
  const int D = 4;
  Rng rng(606);
  Vector coef(D);
  coef << 0.8, -0.5, 0.3, 1.2;
  std::vector<std::vector<Vector>> episodes;
  std::vector<double> targets;
  for (int e = 0; e < 500; ++e) {
    const int T = 5 + static_cast<int>(rng() % 16);
    std::vector<Vector> xs;
    double sum = 0.0;
    for (int t = 0; t < T; ++t) {
      const Vector x = random_matrix(D, 1, rng);
      sum += coef.dot(x);
      xs.push_back(x);
    }
    episodes.push_back(xs);
    targets.push_back(sum);
  }
  const int train = 400;
  Rng model_rng(607);
  RewardModel model(D, 16, model_rng);
  auto held_out_mse = [&] {
    double acc = 0.0;
    for (int i = train; i < 500; ++i) {
      double sum = 0.0;
      for (double m : model.estimate_episode(episodes[i])) sum += m;
      acc += (targets[i] - sum) * (targets[i] - sum);
    }
    return acc / (500 - train);
  };
  const double before = held_out_mse();
  Adam adam(AdamConfig{1e-2, 0.9, 0.999, 1e-8}, std::as_const(model).params());
  std::vector<int> order(train);
  for (int i = 0; i < train; ++i) order[i] = i;
  for (int epoch = 0; epoch < 30; ++epoch) {
    for (int i = train - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    for (int b = 0; b < train; b += 16) {
      std::vector<std::vector<Vector>> batch;
      std::vector<double> bt;
      for (int j = b; j < std::min(train, b + 16); ++j) {
        batch.push_back(episodes[order[j]]);
        bt.push_back(targets[order[j]]);
      }
      model.update(batch, bt, adam);
    }
  }
  const double after = held_out_mse();
  const double t = seconds_since(t0);
  const double ratio = after / before;
  return {ratio <= 0.05 && t < 300.0, "held-out episode-sum MSE " + fmt(before) + " -> " +
                                          fmt(after) + " (ratio " + fmt(ratio) + ", need <= 0.05), " +
                                          fmt(t) + " s"};
}

// Criteria 7-9 share one checkpoint directory: victims and 2-adversary
// policies trained for criterion 7 are reused by the other two grids.
struct Shared {
  fs::path root;
  fs::path ckpt;
};

KeyValueConfig grid_config(const std::string& id, const Shared& sh) {
  KeyValueConfig kv;
  kv.set("experiment.id", id);
  kv.set("experiment.seeds", "1,2,3,4,5");
  kv.set("experiment.eval_episodes", "200");
  kv.set("experiment.checkpoint_dir", sh.ckpt.string());
  kv.set("experiment.resume", "true");
  kv.set("experiment.workers", "4");
  return kv;
}

std::function<void(const std::string&)> progress() {
  return [](const std::string& m) { std::cerr << "  [acceptance] " << m << '\n'; };
}

const WinRateRow* find_row(const WinRateTable& t, const std::string& label) {
  for (const auto& r : t.rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

Verdict criterion_7(const Shared& sh) {
  const auto t0 = Clock::now();
  auto kv = grid_config("custom", sh);
  kv.set("experiment.adversaries", "2");
  kv.set("experiment.modes", "estimation_based");
  const auto res = run_experiment(ExperimentSpec::from_kv(kv), sh.root / "attack", progress());
  const double t = seconds_since(t0);
  std::vector<double> na, ua;
  std::string per_seed;
  for (const auto& p : res.points) {
    na.push_back(p.victims_no_attack);
    ua.push_back(p.under_attack);
    per_seed += " " + fmt(p.victims_no_attack) + "/" + fmt(p.under_attack);
  }
  const double mna = mean(na), mua = mean(ua);
  const bool pass = res.points.size() == 5 && mna >= 0.9 && mua <= 0.5 && t <= 45 * 60;
  return {pass, "no-attack " + fmt(mna) + " (>= 0.9), under-attack " + fmt(mua) +
                    " (<= 0.5), per seed" + per_seed + ", " + fmt(t / 60.0) + " min"};
}

Verdict criterion_8(const Shared& sh) {
  const auto t0 = Clock::now();
  const auto res = run_experiment(ExperimentSpec::from_kv(grid_config("rq3", sh)), sh.root / "rq3",
                                  progress());
  std::vector<double> red;
  std::string detail;
  for (int k : {1, 2, 3}) {
    const auto* row = find_row(res.table, "small/estimation_based/adv" + std::to_string(k));
    if (!row) return {false, "missing row for " + std::to_string(k) + " adversaries"};
    red.push_back(row->reduction);
    detail += " " + std::to_string(k) + ":" + fmt(row->reduction) + "+-" + fmt(row->reduction_std);
  }
  int inversions = 0;
  bool within_band = true;
  for (std::size_t i = 1; i < red.size(); ++i) {
    if (red[i] < red[i - 1]) {
      ++inversions;
      within_band = within_band && red[i - 1] - red[i] <= 0.05;
    }
  }
  const bool pass = inversions == 0 || (inversions == 1 && within_band);
  return {pass, "mean reduction by adversary count" + detail + ", inversions " +
                    std::to_string(inversions) + ", " + fmt(seconds_since(t0) / 60.0) + " min"};
}

Verdict criterion_9(const Shared& sh) {
  const auto t0 = Clock::now();
  const auto res = run_experiment(ExperimentSpec::from_kv(grid_config("rq5", sh)), sh.root / "rq5",
                                  progress());
  const auto* before = find_row(res.table, "small/estimation_based/adv2");
  const auto* after = find_row(res.table, "small/estimation_based/adv2/retrained");
  if (!before || !after) return {false, "missing defense rows"};
  const double d_ua = after->under_attack - before->under_attack;
  const double d_na = before->no_attack - after->no_attack;
  const bool pass = d_ua >= 0.1 && d_na >= 0.1;
  return {pass, "under-attack " + fmt(before->under_attack) + " -> " + fmt(after->under_attack) +
                    " (+" + fmt(d_ua) + ", need >= 0.1), no-attack " + fmt(before->no_attack) +
                    " -> " + fmt(after->no_attack) + " (-" + fmt(d_na) + ", need >= 0.1), " +
                    fmt(seconds_since(t0) / 60.0) + " min"};
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (code != cli::kExitOk) std::cerr << err.str();
  return code;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return files;
}

Verdict criterion_10(const Shared& sh) {
  const fs::path base = sh.root / "repro";
  fs::remove_all(base);
  const std::vector<std::string> small = {
      "--seed", "21", "--workers", "1",
      "--set", "victim.episodes=200", "--set", "victim.eval_interval=50",
      "--set", "victim.eval_episodes=20", "--set", "victim.competence_episodes=20",
      "--set", "victim.competence_floor=0",
      "--set", "adversary.episodes=200", "--set", "adversary.eval_interval=50",
      "--set", "adversary.eval_episodes=20", "--set", "adversary.competence_episodes=20",
      "--set", "adversary.warmup_episodes=20"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), small.begin(), small.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  if (run_cli(with({"train-victim", "--out", (base / "victim").string()}, {})) != 0) {
    return {false, "train-victim failed"};
  }
  const std::string victims = (base / "victim" / "victims.policy").string();
  if (run_cli(with({"train-adversary", "--out", (base / "adversary").string()},
                   {"--set", "paths.victims=" + victims})) != 0) {
    return {false, "train-adversary failed"};
  }
  int compared = 0;
  std::vector<std::string> mismatched;
  for (const std::string run : {"victim", "adversary"}) {
    const auto m = RunManifest::load(base / run / "manifest.json");
    const fs::path again = base / (run + "_rerun");
    if (run_cli({m.command, "--config", (base / run / m.archived_config).string(), "--out",
                 again.string(), "--workers", "1"}) != 0) {
      return {false, "re-execution of " + run + " failed"};
    }
    const auto a = csv_files(base / run);
    const auto b = csv_files(again);
    if (a.empty() || a.size() != b.size()) mismatched.push_back(run + " file set");
    for (const auto& [name, text] : a) {
      ++compared;
      if (!b.contains(name) || b.at(name) != text) mismatched.push_back(run + "/" + name);
    }
    if (RunManifest::load(again / "manifest.json").config_hash != m.config_hash) {
      mismatched.push_back(run + " config hash");
    }
  }
  std::string detail = std::to_string(compared) + " metric CSVs re-executed from manifests";
  if (mismatched.empty()) return {true, detail + ", all bit-identical"};
  detail += ", mismatched:";
  for (const auto& m : mismatched) detail += " " + m;
  return {false, detail};
}

}  // namespace

int main() {
  std::set<int> only;
  if (const char* sel = std::getenv("NALAB_ACCEPTANCE_CRITERIA"); sel && *sel) {
    std::stringstream ss(sel);
    std::string item;
    while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
  }
  Shared sh;
  if (const char* dir = std::getenv("NALAB_ACCEPTANCE_DIR"); dir && *dir) {
    sh.root = dir;
  } else {
    sh.root = fs::temp_directory_path() / "nalab_acceptance";
    fs::remove_all(sh.root);
  }
  sh.ckpt = sh.root / "checkpoints";
  fs::create_directories(sh.ckpt);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, criterion_1},
      {2, criterion_2},
      {3, criterion_3},
      {4, criterion_4},
      {5, criterion_5},
      {6, criterion_6},
      {7, [&] { return criterion_7(sh); }},
      {8, [&] { return criterion_8(sh); }},
      {9, [&] { return criterion_9(sh); }},
      {10, [&] { return criterion_10(sh); }},
  };
  const char* names[] = {"",
                         "proposition 1 (marginalisation)",
                         "proposition 2 (weighting)",
                         "monotonic mixing and argmax",
                         "gradient correctness",
                         "rule-based reward calculator",
                         "reward model learning",
                         "end-to-end attack",
                         "adversary-count trend",
                         "defense retraining direction",
                         "reproducibility from manifest"};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << names[id]
              << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
