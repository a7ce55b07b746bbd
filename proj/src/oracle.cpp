#include "nalab/oracle.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/LU>

#include "nalab/errors.hpp"

namespace nalab {

namespace {

void check_distribution(const std::vector<double>& row, std::size_t size, const std::string& what) {
  if (row.size() != size) throw ValidationError(what + ": wrong row length");
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw ValidationError(what + ": negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ValidationError(what + ": row sums to " + std::to_string(sum));
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("discount must lie in [0, 1)");
}

std::string hex(double v) {
  std::ostringstream s;
  s << std::hexfloat << v;
  return s.str();
}

double parse_hex(const std::string& token) {
  std::size_t used = 0;
  const double v = std::stod(token, &used);
  if (used != token.size()) throw StructuralError("tabular: bad number " + token);
  return v;
}

}  // namespace

void TabularMDP::validate() const {
  if (states <= 0 || adversary_actions <= 0 || victim_actions <= 0 || third_actions <= 0 ||
      paths <= 0) {
    throw ValidationError("tabular model needs positive sizes");
  }
  const std::size_t rows = static_cast<std::size_t>(states) * adversary_actions * victim_actions *
                           third_actions;
  if (transition.size() != rows || reward.size() != rows) {
    throw ValidationError("tabular model: transition/reward row count mismatch");
  }
  for (const auto& r : transition) {
    check_distribution(r, static_cast<std::size_t>(states), "transition");
  }
  for (const auto& r : reward) {
    if (r.size() != static_cast<std::size_t>(paths)) {
      throw ValidationError("tabular model: reward vector length mismatch");
    }
  }
  if (victim_policy.size() != static_cast<std::size_t>(states) ||
      third_policy.size() != static_cast<std::size_t>(states)) {
    throw ValidationError("tabular model: fixed policies need one row per state");
  }
  for (const auto& r : victim_policy) {
    check_distribution(r, static_cast<std::size_t>(victim_actions), "victim policy");
  }
  for (const auto& r : third_policy) {
    check_distribution(r, static_cast<std::size_t>(third_actions), "third-party policy");
  }
  check_gamma(gamma);
}

void ReducedMDP::validate() const {
  if (states <= 0 || actions <= 0) throw ValidationError("reduced model needs positive sizes");
  const auto rows = static_cast<std::size_t>(states) * actions;
  if (transition.size() != rows || reward.size() != rows) {
    throw ValidationError("reduced model: row count mismatch");
  }
  for (const auto& r : transition) {
    check_distribution(r, static_cast<std::size_t>(states), "reduced transition");
  }
  check_gamma(gamma);
}

std::vector<double> scalarize(const std::vector<FailureSignalVector>& rewards,
                              const std::vector<double>& weights) {
  std::vector<double> out;
  out.reserve(rewards.size());
  for (const auto& r : rewards) {
    if (r.size() != weights.size()) throw StructuralError("scalarize: length mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) v += weights[i] * r[i];
    out.push_back(v);
  }
  return out;
}

Matrix value_iteration(const TabularMDP& mdp, const std::vector<double>& scalar_reward,
                       double tolerance, int max_iterations) {
  mdp.validate();
  if (scalar_reward.size() != mdp.transition.size()) {
    throw StructuralError("value_iteration: reward table size mismatch");
  }
  const int S = mdp.states, A = mdp.adversary_actions;
  Matrix q = Matrix::Zero(S, A);
  for (int it = 0; it < max_iterations; ++it) {
    const Vector v = q.rowwise().maxCoeff();
    Matrix next(S, A);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double total = 0.0;
        for (int vi = 0; vi < mdp.victim_actions; ++vi) {
          for (int t = 0; t < mdp.third_actions; ++t) {
            const double w = mdp.victim_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(vi)] *
                             mdp.third_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
            if (w == 0.0) continue;
            const std::size_t r = mdp.row(s, a, vi, t);
            double backup = scalar_reward[r];
            const auto& p = mdp.transition[r];
            for (int s2 = 0; s2 < S; ++s2) backup += mdp.gamma * p[static_cast<std::size_t>(s2)] * v(s2);
            total += w * backup;
          }
        }
        next(s, a) = total;
      }
    }
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (delta <= tolerance) return q;
  }
  throw TrainingFault("value_iteration: no convergence within the iteration budget");
}

ReducedMDP marginalize_fixed_parties(const TabularMDP& mdp) {
  mdp.validate();
  ReducedMDP out;
  out.states = mdp.states;
  out.actions = mdp.adversary_actions;
  out.paths = mdp.paths;
  out.gamma = mdp.gamma;
  for (int s = 0; s < mdp.states; ++s) {
    for (int a = 0; a < mdp.adversary_actions; ++a) {
      std::vector<double> p(static_cast<std::size_t>(mdp.states), 0.0);
      FailureSignalVector r(static_cast<std::size_t>(mdp.paths), 0.0);
      for (int vi = 0; vi < mdp.victim_actions; ++vi) {
        for (int t = 0; t < mdp.third_actions; ++t) {
          const double w = mdp.victim_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(vi)] *
                           mdp.third_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
          const std::size_t row = mdp.row(s, a, vi, t);
          for (std::size_t k = 0; k < p.size(); ++k) p[k] += w * mdp.transition[row][k];
          for (std::size_t k = 0; k < r.size(); ++k) r[k] += w * mdp.reward[row][k];
        }
      }
      // Renormalise away accumulated rounding.
      double sum = 0.0;
      for (double x : p) sum += x;
      for (double& x : p) x /= sum;
      out.transition.push_back(std::move(p));
      out.reward.push_back(std::move(r));
    }
  }
  return out;
}

Matrix reduced_value_iteration(const ReducedMDP& mdp, const std::vector<double>& scalar_reward,
                               double tolerance, int max_iterations) {
  mdp.validate();
  if (scalar_reward.size() != mdp.transition.size()) {
    throw StructuralError("reduced_value_iteration: reward table size mismatch");
  }
  const int S = mdp.states, A = mdp.actions;
  Matrix P(S * A, S);
  for (int r = 0; r < S * A; ++r) {
    for (int s2 = 0; s2 < S; ++s2) P(r, s2) = mdp.transition[static_cast<std::size_t>(r)][static_cast<std::size_t>(s2)];
  }
  const Vector R = Eigen::Map<const Vector>(scalar_reward.data(), S * A);
  Vector q = Vector::Zero(S * A);
  for (int it = 0; it < max_iterations; ++it) {
    Vector v(S);
    for (int s = 0; s < S; ++s) v(s) = q.segment(s * A, A).maxCoeff();
    const Vector next = R + mdp.gamma * (P * v);
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (delta <= tolerance) break;
    if (it + 1 == max_iterations) {
      throw TrainingFault("reduced_value_iteration: no convergence within the iteration budget");
    }
  }
  Matrix out(S, A);
  for (int s = 0; s < S; ++s) out.row(s) = q.segment(s * A, A).transpose();
  return out;
}

namespace {

void check_policy(const TabularPolicy& policy, int states, int actions) {
  if (policy.size() != static_cast<std::size_t>(states)) {
    throw ValidationError("adversary policy needs one row per state");
  }
  for (const auto& r : policy) check_distribution(r, static_cast<std::size_t>(actions), "adversary policy");
}

// Expected next-state value under the full model for one (s, a).
template <class ValueOf>
double full_backup(const TabularMDP& mdp, int s, int a, const std::vector<double>& reward,
                   ValueOf value_of) {
  double total = 0.0;
  for (int vi = 0; vi < mdp.victim_actions; ++vi) {
    for (int t = 0; t < mdp.third_actions; ++t) {
      const double w = mdp.victim_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(vi)] *
                       mdp.third_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
      const std::size_t r = mdp.row(s, a, vi, t);
      double b = reward[r];
      for (int s2 = 0; s2 < mdp.states; ++s2) {
        b += mdp.gamma * mdp.transition[r][static_cast<std::size_t>(s2)] * value_of(s2);
      }
      total += w * b;
    }
  }
  return total;
}

Vector policy_value(const Matrix& q, const TabularPolicy& policy) {
  Vector v(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    double x = 0.0;
    for (Eigen::Index a = 0; a < q.cols(); ++a) x += policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] * q(s, a);
    v(s) = x;
  }
  return v;
}

std::vector<double> component(const std::vector<FailureSignalVector>& rewards, int i) {
  std::vector<double> out;
  out.reserve(rewards.size());
  for (const auto& r : rewards) out.push_back(r[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

std::vector<Matrix> vector_policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy,
                                             double tolerance, int max_iterations) {
  mdp.validate();
  check_policy(policy, mdp.states, mdp.adversary_actions);
  const int S = mdp.states, A = mdp.adversary_actions;
  std::vector<Matrix> out;
  for (int i = 0; i < mdp.paths; ++i) {
    const std::vector<double> r = component(mdp.reward, i);
    Matrix q = Matrix::Zero(S, A);
    bool converged = false;
    for (int it = 0; it < max_iterations && !converged; ++it) {
      const Vector v = policy_value(q, policy);
      Matrix next(S, A);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          next(s, a) = full_backup(mdp, s, a, r, [&](int s2) { return v(s2); });
        }
      }
      converged = (next - q).cwiseAbs().maxCoeff() <= tolerance;
      q = std::move(next);
    }
    if (!converged) throw TrainingFault("vector_policy_evaluation: no convergence");
    out.push_back(std::move(q));
  }
  return out;
}

Matrix scalar_policy_evaluation(const TabularMDP& mdp, const std::vector<double>& scalar_reward,
                                const TabularPolicy& policy) {
  mdp.validate();
  check_policy(policy, mdp.states, mdp.adversary_actions);
  if (scalar_reward.size() != mdp.transition.size()) {
    throw StructuralError("scalar_policy_evaluation: reward table size mismatch");
  }
  const int S = mdp.states, A = mdp.adversary_actions;
  // Solve (I - gamma P_pi) V = r_pi over states, then one backup for Q.
  Matrix P = Matrix::Zero(S, S);
  Vector r = Vector::Zero(S);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double pa = policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      for (int vi = 0; vi < mdp.victim_actions; ++vi) {
        for (int t = 0; t < mdp.third_actions; ++t) {
          const double w = pa *
                           mdp.victim_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(vi)] *
                           mdp.third_policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
          const std::size_t row = mdp.row(s, a, vi, t);
          r(s) += w * scalar_reward[row];
          for (int s2 = 0; s2 < S; ++s2) P(s, s2) += w * mdp.transition[row][static_cast<std::size_t>(s2)];
        }
      }
    }
  }
  const Matrix M = Matrix::Identity(S, S) - mdp.gamma * P;
  const Vector v = M.fullPivLu().solve(r);
  Matrix q(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      q(s, a) = full_backup(mdp, s, a, scalar_reward, [&](int s2) { return v(s2); });
    }
  }
  return q;
}

std::vector<Matrix> finite_horizon_vector_evaluation(const TabularMDP& mdp,
                                                     const TabularPolicy& policy, int horizon) {
  mdp.validate();
  check_policy(policy, mdp.states, mdp.adversary_actions);
  if (horizon <= 0) throw ValidationError("finite horizon must be positive");
  std::vector<Matrix> out;
  for (int i = 0; i < mdp.paths; ++i) {
    const std::vector<double> r = component(mdp.reward, i);
    Matrix q = Matrix::Zero(mdp.states, mdp.adversary_actions);
    for (int h = 0; h < horizon; ++h) {
      const Vector v = policy_value(q, policy);
      Matrix next(q.rows(), q.cols());
      for (int s = 0; s < mdp.states; ++s) {
        for (int a = 0; a < mdp.adversary_actions; ++a) {
          next(s, a) = full_backup(mdp, s, a, r, [&](int s2) { return v(s2); });
        }
      }
      q = std::move(next);
    }
    out.push_back(std::move(q));
  }
  return out;
}

Matrix finite_horizon_scalar_evaluation(const TabularMDP& mdp,
                                        const std::vector<double>& scalar_reward,
                                        const TabularPolicy& policy, int horizon) {
  mdp.validate();
  check_policy(policy, mdp.states, mdp.adversary_actions);
  if (horizon <= 0) throw ValidationError("finite horizon must be positive");
  // Backward over state values: V_0 = 0, V_{h+1}(s) = sum_a pi(a|s) Q_{h+1}(s, a).
  Vector v = Vector::Zero(mdp.states);
  Matrix q(mdp.states, mdp.adversary_actions);
  for (int h = 0; h < horizon; ++h) {
    for (int s = 0; s < mdp.states; ++s) {
      for (int a = 0; a < mdp.adversary_actions; ++a) {
        q(s, a) = full_backup(mdp, s, a, scalar_reward, [&](int s2) { return v(s2); });
      }
    }
    v = policy_value(q, policy);
  }
  return q;
}

std::vector<int> brute_force_joint_argmax(const std::vector<Vector>& q_tables,
                                          const std::function<double(const Vector&)>& mix) {
  const std::size_t n = q_tables.size();
  std::vector<int> idx(n, 0), best;
  double best_value = 0.0;
  Vector q(static_cast<Eigen::Index>(n));
  while (true) {
    for (std::size_t i = 0; i < n; ++i) q(static_cast<Eigen::Index>(i)) = q_tables[i](idx[i]);
    const double value = mix(q);
    if (best.empty() || value > best_value) {
      best = idx;
      best_value = value;
    }
    std::size_t k = n;
    while (k > 0) {
      --k;
      if (++idx[k] < q_tables[k].size()) break;
      idx[k] = 0;
      if (k == 0) return best;
    }
    if (n == 0) return best;
  }
}

std::vector<int> decentralized_argmax(const std::vector<Vector>& q_tables) {
  std::vector<int> out;
  for (const auto& q : q_tables) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.size(); ++a) {
      if (q(a) > q(best)) best = a;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<double> dirichlet_ones(int n, Rng& rng) {
  // Normalised unit exponentials are Dirichlet(1, ..., 1).
  std::vector<double> x(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (auto& v : x) {
    v = -std::log(1.0 - uniform01(rng));
    sum += v;
  }
  for (auto& v : x) v /= sum;
  // Fold the rounding remainder into the largest entry.
  double total = 0.0;
  std::size_t big = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += x[i];
    if (x[i] > x[big]) big = i;
  }
  x[big] += 1.0 - total;
  return x;
}

TabularPolicy random_policy(int states, int actions, Rng& rng) {
  TabularPolicy p;
  for (int s = 0; s < states; ++s) p.push_back(dirichlet_ones(actions, rng));
  return p;
}

TabularMDP random_tabular_mdp(std::uint64_t seed, const InstanceShape& shape) {
  Rng rng(seed);
  TabularMDP m;
  m.states = shape.states;
  m.adversary_actions = shape.adversary_actions;
  m.victim_actions = shape.victim_actions;
  m.third_actions = shape.third_actions;
  m.paths = shape.paths;
  m.gamma = shape.gamma;
  const std::size_t rows = static_cast<std::size_t>(m.states) * m.adversary_actions *
                           m.victim_actions * m.third_actions;
  for (std::size_t r = 0; r < rows; ++r) {
    m.transition.push_back(dirichlet_ones(m.states, rng));
    FailureSignalVector sig(static_cast<std::size_t>(m.paths));
    for (auto& x : sig) x = uniform01(rng);
    m.reward.push_back(std::move(sig));
  }
  m.victim_policy = random_policy(m.states, m.victim_actions, rng);
  m.third_policy = random_policy(m.states, m.third_actions, rng);
  m.validate();
  return m;
}

void write_tabular(std::ostream& out, const TabularMDP& m) {
  out << "tabular-mdp 1\n";
  out << "states " << m.states << "\nadversary_actions " << m.adversary_actions
      << "\nvictim_actions " << m.victim_actions << "\nthird_actions " << m.third_actions
      << "\npaths " << m.paths << "\ngamma " << hex(m.gamma) << '\n';
  auto rows = [&](const char* tag, const std::vector<std::vector<double>>& mat) {
    out << tag << ' ' << mat.size() << '\n';
    for (const auto& r : mat) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? " " : "") << hex(r[i]);
      out << '\n';
    }
  };
  rows("transition", m.transition);
  rows("reward", m.reward);
  rows("victim_policy", m.victim_policy);
  rows("third_policy", m.third_policy);
  out << "end\n";
}

TabularMDP read_tabular(std::istream& in) {
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "tabular-mdp" || version != 1) throw StructuralError("tabular: bad header");
  TabularMDP m;
  auto field = [&](const char* name, auto& value) {
    std::string key;
    in >> key;
    if (key != name) throw StructuralError(std::string("tabular: expected ") + name);
    in >> value;
  };
  field("states", m.states);
  field("adversary_actions", m.adversary_actions);
  field("victim_actions", m.victim_actions);
  field("third_actions", m.third_actions);
  field("paths", m.paths);
  std::string g;
  field("gamma", g);
  m.gamma = parse_hex(g);
  auto rows = [&](const char* name, std::vector<std::vector<double>>& mat, int width) {
    std::string key;
    std::size_t count = 0;
    in >> key >> count;
    if (key != name) throw StructuralError(std::string("tabular: expected ") + name);
    mat.assign(count, std::vector<double>(static_cast<std::size_t>(width)));
    for (auto& r : mat) {
      for (auto& x : r) {
        std::string tok;
        in >> tok;
        x = parse_hex(tok);
      }
    }
  };
  rows("transition", m.transition, m.states);
  rows("reward", m.reward, m.paths);
  rows("victim_policy", m.victim_policy, m.victim_actions);
  rows("third_policy", m.third_policy, m.third_actions);
  in >> tag;
  if (!in || tag != "end") throw StructuralError("tabular: missing end marker");
  m.validate();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructuralError("max_abs_diff: shape mismatch");
  }
  return (a - b).cwiseAbs().maxCoeff();
}

PropositionResiduals check_propositions(const std::vector<TabularMDP>& instances,
                                        std::uint64_t weight_seed) {
  PropositionResiduals out;
  Rng rng(weight_seed);
  for (const auto& m : instances) {
    std::vector<double> w(static_cast<std::size_t>(m.paths));
    for (auto& x : w) x = uniform01(rng);
    const std::vector<double> scalar = scalarize(m.reward, w);

    const Matrix full = value_iteration(m, scalar);
    const ReducedMDP reduced = marginalize_fixed_parties(m);
    const Matrix red = reduced_value_iteration(reduced, scalarize(reduced.reward, w));
    out.marginalization = std::max(out.marginalization, max_abs_diff(full, red));

    const TabularPolicy pi = random_policy(m.states, m.adversary_actions, rng);
    const auto vec = vector_policy_evaluation(m, pi);
    Matrix dotted = Matrix::Zero(m.states, m.adversary_actions);
    for (int i = 0; i < m.paths; ++i) dotted += w[static_cast<std::size_t>(i)] * vec[static_cast<std::size_t>(i)];
    out.weighting = std::max(out.weighting, max_abs_diff(scalar_policy_evaluation(m, scalar, pi), dotted));

    const int horizon = 8;
    const auto fvec = finite_horizon_vector_evaluation(m, pi, horizon);
    Matrix fdot = Matrix::Zero(m.states, m.adversary_actions);
    for (int i = 0; i < m.paths; ++i) fdot += w[static_cast<std::size_t>(i)] * fvec[static_cast<std::size_t>(i)];
    out.weighting_finite = std::max(
        out.weighting_finite,
        max_abs_diff(finite_horizon_scalar_evaluation(m, scalar, pi, horizon), fdot));
    ++out.instances;
  }
  return out;
}

}  // namespace nalab
