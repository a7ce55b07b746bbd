#pragma once

// Exact tabular machinery for tiny multi-party decision problems: value
// iteration on the full model and on the model with the fixed parties
// marginalised out, vector and scalar policy evaluation, and exhaustive
// joint-action search for mixing functions.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "nalab/core.hpp"
#include "nalab/neural.hpp"

namespace nalab {

// Joint actions of each party are flattened to one index. Transition and
// reward rows are indexed by (s, adversary, victim, third) in row-major order.
struct TabularMDP {
  int states = 0;
  int adversary_actions = 0;
  int victim_actions = 0;
  int third_actions = 0;
  int paths = 1;
  double gamma = 0.9;
  std::vector<std::vector<double>> transition;  // row -> distribution over s'
  std::vector<FailureSignalVector> reward;      // row -> failure signals
  std::vector<std::vector<double>> victim_policy;  // s -> distribution over victim actions
  std::vector<std::vector<double>> third_policy;   // s -> distribution over third actions

  std::size_t row(int s, int a, int v, int t) const {
    return ((static_cast<std::size_t>(s) * adversary_actions + a) * victim_actions + v) *
               third_actions + t;
  }
  // ValidationError for bad shapes, negative or non-normalised rows.
  void validate() const;
};

// The same problem after the victim and third parties are folded in.
struct ReducedMDP {
  int states = 0;
  int actions = 0;
  int paths = 1;
  double gamma = 0.9;
  std::vector<std::vector<double>> transition;  // s * actions + a -> distribution
  std::vector<FailureSignalVector> reward;      // s * actions + a -> signals

  void validate() const;
};

// Per-row scalar reward w . signals.
std::vector<double> scalarize(const std::vector<FailureSignalVector>& rewards,
                              const std::vector<double>& weights);

// Optimal adversary Q-table (states x adversary actions) on the full model;
// fixed parties are averaged inside every backup. `scalar_reward` is indexed
// like the transition rows.
Matrix value_iteration(const TabularMDP& mdp, const std::vector<double>& scalar_reward,
                       double tolerance = 1e-13, int max_iterations = 100000);

ReducedMDP marginalize_fixed_parties(const TabularMDP& mdp);

Matrix reduced_value_iteration(const ReducedMDP& mdp, const std::vector<double>& scalar_reward,
                               double tolerance = 1e-13, int max_iterations = 100000);

// Adversary policy: s -> distribution over adversary joint actions.
using TabularPolicy = std::vector<std::vector<double>>;

// Component-wise Bellman evaluation of a fixed adversary policy on the full
// model; result[i] is the Q-table of failure path i.
std::vector<Matrix> vector_policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy,
                                             double tolerance = 1e-13,
                                             int max_iterations = 100000);

// Scalar evaluation under `scalar_reward`, solved exactly as a linear system.
Matrix scalar_policy_evaluation(const TabularMDP& mdp, const std::vector<double>& scalar_reward,
                                const TabularPolicy& policy);

// Finite-horizon variants: `horizon` backups from a zero terminal value.
std::vector<Matrix> finite_horizon_vector_evaluation(const TabularMDP& mdp,
                                                     const TabularPolicy& policy, int horizon);
Matrix finite_horizon_scalar_evaluation(const TabularMDP& mdp,
                                        const std::vector<double>& scalar_reward,
                                        const TabularPolicy& policy, int horizon);

// Exhaustive search over joint actions of `mix` applied to per-agent values.
// Ties go to the lexicographically smallest joint action.
std::vector<int> brute_force_joint_argmax(const std::vector<Vector>& q_tables,
                                          const std::function<double(const Vector&)>& mix);
// Per-agent argmax (ties to the lowest index).
std::vector<int> decentralized_argmax(const std::vector<Vector>& q_tables);

struct InstanceShape {
  int states = 6;
  int adversary_actions = 3;
  int victim_actions = 2;
  int third_actions = 2;
  int paths = 3;
  double gamma = 0.9;
};

// Dirichlet(1, ..., 1) transition rows and policies, rewards uniform in [0, 1).
TabularMDP random_tabular_mdp(std::uint64_t seed, const InstanceShape& shape = {});
TabularPolicy random_policy(int states, int actions, Rng& rng);
std::vector<double> dirichlet_ones(int n, Rng& rng);

// Plain-text matrix format, hexadecimal floats for exact round trips.
void write_tabular(std::ostream& out, const TabularMDP& mdp);
TabularMDP read_tabular(std::istream& in);

double max_abs_diff(const Matrix& a, const Matrix& b);

struct PropositionResiduals {
  int instances = 0;
  double marginalization = 0.0;  // full vs reduced optimal Q-tables
  double weighting = 0.0;        // scalar vs weighted vector evaluation
  double weighting_finite = 0.0;
};

// Runs both dual computations on each instance and reports sup-norm residuals.
PropositionResiduals check_propositions(const std::vector<TabularMDP>& instances,
                                        std::uint64_t weight_seed);

}  // namespace nalab
