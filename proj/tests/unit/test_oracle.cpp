#include <gtest/gtest.h>

#include <sstream>

#include "nalab/diagnostics.hpp"
#include "nalab/errors.hpp"
#include "nalab/oracle.hpp"

using namespace nalab;

namespace {

// One state, two adversary actions, victims/third with one action each.
TabularMDP single_state(double r0, double r1, double gamma) {
  TabularMDP m;
  m.states = 1;
  m.adversary_actions = 2;
  m.victim_actions = 1;
  m.third_actions = 1;
  m.paths = 1;
  m.gamma = gamma;
  m.transition = {{1.0}, {1.0}};
  m.reward = {{r0}, {r1}};
  m.victim_policy = {{1.0}};
  m.third_policy = {{1.0}};
  return m;
}

}  // namespace

TEST(Oracle, ValueIterationClosedForm) {
  const auto m = single_state(1.0, 2.0, 0.5);
  const Matrix q = value_iteration(m, scalarize(m.reward, {1.0}));
  // V* = 2 / (1 - 0.5) = 4; Q(a) = r(a) + 0.5 * 4.
  EXPECT_NEAR(q(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(q(0, 1), 4.0, 1e-12);
  const Matrix pe = scalar_policy_evaluation(m, scalarize(m.reward, {1.0}), {{0.5, 0.5}});
  // V = 1.5 / 0.5 = 3.
  EXPECT_NEAR(pe(0, 0), 2.5, 1e-12);
  EXPECT_NEAR(pe(0, 1), 3.5, 1e-12);
  const Matrix fh = finite_horizon_scalar_evaluation(m, scalarize(m.reward, {1.0}),
                                                     {{0.5, 0.5}}, 2);
  EXPECT_NEAR(fh(0, 1), 2.0 + 0.5 * 1.5, 1e-12);
}

TEST(Oracle, MarginalizationAveragesFixedParties) {
  TabularMDP m;
  m.states = 2;
  m.adversary_actions = 1;
  m.victim_actions = 2;
  m.third_actions = 1;
  m.paths = 1;
  m.gamma = 0.5;
  m.transition = {{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}};
  m.reward = {{4.0}, {0.0}, {1.0}, {1.0}};
  m.victim_policy = {{0.25, 0.75}, {0.5, 0.5}};
  m.third_policy = {{1.0}, {1.0}};
  m.validate();
  const ReducedMDP r = marginalize_fixed_parties(m);
  EXPECT_NEAR(r.transition[0][0], 0.25, 1e-15);
  EXPECT_NEAR(r.transition[0][1], 0.75, 1e-15);
  EXPECT_NEAR(r.reward[0][0], 1.0, 1e-15);
}

TEST(Oracle, PropositionsHoldOnDocumentedInstances) {
  std::vector<TabularMDP> instances;
  for (auto s : oracle_instance_seeds()) instances.push_back(random_tabular_mdp(s));
  const auto res = check_propositions(instances, 17);
  EXPECT_EQ(res.instances, 20);
  EXPECT_LT(res.marginalization, 1e-9);
  EXPECT_LT(res.weighting, 1e-9);
  EXPECT_LT(res.weighting_finite, 1e-9);
}

TEST(Oracle, ShippedFixturesMatchTheirSeeds) {
  const auto fixtures = load_oracle_fixtures(std::string(NALAB_SOURCE_DIR) + "/fixtures/oracle");
  const auto seeds = oracle_instance_seeds();
  ASSERT_EQ(fixtures.size(), seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto g = random_tabular_mdp(seeds[i]);
    EXPECT_EQ(fixtures[i].transition, g.transition);
    EXPECT_EQ(fixtures[i].reward, g.reward);
    EXPECT_EQ(fixtures[i].victim_policy, g.victim_policy);
  }
  EXPECT_THROW(load_oracle_fixtures("/nonexistent/dir"), DependencyError);
}

TEST(Oracle, TabularTextRoundTripIsExact) {
  const auto m = random_tabular_mdp(5);
  std::stringstream buf;
  write_tabular(buf, m);
  const auto back = read_tabular(buf);
  EXPECT_EQ(back.transition, m.transition);
  EXPECT_EQ(back.reward, m.reward);
  EXPECT_EQ(back.third_policy, m.third_policy);
  EXPECT_EQ(back.gamma, m.gamma);
  std::stringstream bad("tabular-mdp 2");
  EXPECT_THROW(read_tabular(bad), StructuralError);
}

TEST(Oracle, ValidationRejectsBadRows) {
  auto m = single_state(1.0, 1.0, 0.9);
  m.transition[0] = {0.7};
  EXPECT_THROW(m.validate(), ValidationError);
  m = single_state(1.0, 1.0, 0.9);
  m.victim_policy = {{1.5}};
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Oracle, ArgmaxSearch) {
  std::vector<Vector> q(2, Vector(3));
  q[0] << 1.0, 5.0, 5.0;
  q[1] << -1.0, -2.0, 0.0;
  EXPECT_EQ(decentralized_argmax(q), (std::vector<int>{1, 2}));
  auto sum = [](const Vector& x) { return x.sum(); };
  EXPECT_EQ(brute_force_joint_argmax(q, sum), (std::vector<int>{1, 2}));
  // A non-monotone mixer can disagree.
  auto neg = [](const Vector& x) { return -x(0) + x(1); };
  EXPECT_EQ(brute_force_joint_argmax(q, neg), (std::vector<int>{0, 2}));
}

TEST(Oracle, DirichletRowsSumToOne) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto d = dirichlet_ones(5, rng);
    double s = 0.0;
    for (double x : d) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}
