#include <gtest/gtest.h>

#include <sstream>

#include "nalab/errors.hpp"
#include "nalab/rollout.hpp"

using namespace nalab;

namespace {

QmixConfig tiny() {
  QmixConfig c;
  c.hidden_units = 8;
  c.hidden_layers = 1;
  c.mixer_embed = 4;
  return c;
}

}  // namespace

TEST(Rollout, RandomEpisodeIsValidAndSeeded) {
  const EnvConfig cfg{SkirmishConfig{}};
  auto sim = make_simulation(cfg);
  RandomController v, a;
  const auto t1 = rollout_episode(*sim, v, &a, 42);
  const auto t2 = rollout_episode(*sim, v, &a, 42);
  EXPECT_TRUE(validate_trajectory(t1, sim->descriptor()).ok);
  ASSERT_EQ(t1.length(), t2.length());
  for (int t = 0; t < t1.length(); ++t) {
    EXPECT_EQ(t1.records[t].victims.actions, t2.records[t].victims.actions);
    EXPECT_EQ(t1.records[t].adversaries.actions, t2.records[t].adversaries.actions);
  }
  EXPECT_TRUE(t1.records.back().terminal);
  EXPECT_THROW(rollout_episode(*sim, v, nullptr, 1), ContractViolation);
}

TEST(Rollout, FrozenPolicySaveLoadPreservesActions) {
  const EnvConfig cfg{SkirmishConfig{}};
  const auto env = describe(cfg);
  QmixLearner learner(victim_team(env), tiny(), 3);
  const FrozenPolicy p = FrozenPolicy::from_learner(learner);
  std::stringstream buf;
  p.save(buf);
  const FrozenPolicy q = FrozenPolicy::load(buf);
  EXPECT_EQ(p.checksum(), q.checksum());

  auto sim = make_simulation(cfg);
  QController cp(p), cq(q);
  RandomController a1, a2;
  const auto t1 = rollout_episode(*sim, cp, &a1, 9);
  const auto t2 = rollout_episode(*sim, cq, &a2, 9);
  ASSERT_EQ(t1.length(), t2.length());
  for (int t = 0; t < t1.length(); ++t) {
    EXPECT_EQ(t1.records[t].victims.actions, t2.records[t].victims.actions);
  }
  std::stringstream garbage("frozen-policy agents x");
  EXPECT_THROW(FrozenPolicy::load(garbage), StructuralError);
}

TEST(Rollout, GreedyControllerFollowsQValues) {
  const EnvConfig cfg{SkirmishConfig{}};
  const auto env = describe(cfg);
  QmixLearner learner(victim_team(env), tiny(), 5);
  const FrozenPolicy p = FrozenPolicy::from_learner(learner);
  auto sim = make_simulation(cfg);
  QController c(p);
  RandomController a;
  const auto traj = rollout_episode(*sim, c, &a, 4);
  std::vector<int> last(2, -1);
  for (const auto& rec : traj.records) {
    for (int i = 0; i < 2; ++i) {
      const Vector x = agent_input(rec.victims.obs[i], last[i], victim_team(env).actions, nullptr);
      EXPECT_EQ(rec.victims.actions[i], p.act(i, x, rec.victims.masks[i]));
      last[i] = rec.victims.actions[i];
    }
  }
}

TEST(Rollout, RewardEstimatesAreRecorded) {
  const EnvConfig cfg{SkirmishConfig{}};
  auto sim = make_simulation(cfg);
  Rng rng(1);
  RewardModel model(2 * sim->descriptor().adversaries.obs_size, 4, rng);
  RandomController v, a;
  RolloutOptions opts;
  opts.reward_model = &model;
  const auto traj = rollout_episode(*sim, v, &a, 3, opts);
  const auto est = model.estimate_episode(adversary_party_inputs(traj));
  for (int t = 0; t < traj.length(); ++t) {
    EXPECT_DOUBLE_EQ(traj.records[t].reward_estimate, est[static_cast<std::size_t>(t)]);
  }
}
