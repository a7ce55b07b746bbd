#include <gtest/gtest.h>

#include "nalab/errors.hpp"
#include "nalab/reward.hpp"
#include "nalab/rollout.hpp"
#include "nalab/skirmish.hpp"

using namespace nalab;

namespace {

EpisodeTrajectory three_steps(bool success) {
  EpisodeTrajectory t;
  for (int i = 0; i < 3; ++i) {
    StepRecord r;
    r.adversaries.obs = {{0.1 * i, success ? -1.0 : 1.0}, {-0.2, 0.5 * i}};
    r.signals = {0.25 * i, 0.5};
    r.native_reward = 1.5 * i;
    r.terminal = i == 2;
    t.records.push_back(r);
  }
  t.final_outcome.terminal = true;
  t.final_outcome.victim_success = success;
  t.final_outcome.victim_failed = !success;
  return t;
}

}  // namespace

TEST(Reward, WeightVectorValidation) {
  EXPECT_THROW(WeightVector({-1.0, 1.0}), ValidationError);
  EXPECT_THROW(WeightVector({0.0, 0.0}), ValidationError);
  EXPECT_THROW(WeightVector({std::nan(""), 1.0}), ValidationError);
  const WeightVector w({2.0, 0.0, 3.0});
  EXPECT_DOUBLE_EQ(weighted_reward(w, {1.0, 7.0, -1.0}), -1.0);
  EXPECT_THROW(weighted_reward(w, {1.0}), StructuralError);
}

TEST(Reward, OutcomeRules) {
  StepOutcome o;
  EXPECT_THROW(rule_based_terminal_reward(o, 20.0), ContractViolation);
  o.terminal = true;
  o.victim_success = true;
  EXPECT_EQ(rule_based_terminal_reward(o, 20.0).value, 0.0);
  EXPECT_EQ(rule_based_terminal_reward(o, 20.0).source, OutcomeSource::VictimSuccess);
  o.victim_success = false;
  o.victim_failed = true;
  EXPECT_EQ(rule_based_terminal_reward(o, 20.0).value, 20.0);
  EXPECT_EQ(rule_based_terminal_reward(o, 7.5).source, OutcomeSource::VictimFailure);
}

TEST(Reward, GroundTruthStepRewardsAreTerminalOnly) {
  EXPECT_EQ(ground_truth_step_rewards(three_steps(false), 20.0),
            (std::vector<double>{0.0, 0.0, 20.0}));
  EXPECT_EQ(ground_truth_step_rewards(three_steps(true), 20.0),
            (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Reward, ImmediateRewardNeedsOracleAccess) {
  const WeightVector w({1.0, 2.0});
  EXPECT_DOUBLE_EQ(rule_based_immediate_reward({0.5, 0.25}, w, StateAccess::Oracle), 1.0);
  EXPECT_THROW(rule_based_immediate_reward({0.5, 0.25}, w, StateAccess::Deployment), ModeError);

  SkirmishConfig c;
  Skirmish env(c);
  const auto s = env.reset(1);
  const JointAction noop{{0, 0}, {0, 0}};
  const auto next = env.step(s, noop).first;
  EXPECT_DOUBLE_EQ(rule_based_immediate_reward(env, s, noop, next, w, StateAccess::Oracle),
                   2.0 / c.horizon);
  EXPECT_THROW(rule_based_immediate_reward(env, s, noop, next, w, StateAccess::Deployment),
               ModeError);
}

TEST(Reward, ModeDispatch) {
  AdversaryRewardSettings st;
  st.weights = WeightVector({1.0, 2.0});
  const auto fail = three_steps(false);
  EXPECT_THROW(adversary_step_rewards(fail, RewardMode::Traditional, st, nullptr, false),
               ModeError);
  st.victim_reward_access = true;
  EXPECT_EQ(adversary_step_rewards(fail, RewardMode::Traditional, st, nullptr, false),
            (std::vector<double>{-0.0, -1.5, -3.0}));
  const auto rule = adversary_step_rewards(fail, RewardMode::RuleBasedImmediate, st, nullptr, false);
  EXPECT_DOUBLE_EQ(rule[0], 1.0);
  EXPECT_DOUBLE_EQ(rule[1], 1.25);
  EXPECT_DOUBLE_EQ(rule[2], 1.5 + 20.0);
  EXPECT_EQ(adversary_step_rewards(fail, RewardMode::EstimationBased, st, nullptr, true),
            (std::vector<double>{0.0, 0.0, 20.0}));
  EXPECT_THROW(adversary_step_rewards(fail, RewardMode::EstimationBased, st, nullptr, false),
               ContractViolation);

  Rng rng(1);
  RewardModel model(4, 3, rng);
  for (auto* p : model.params()) p->value *= 50.0;
  st.estimate_clip = 0.5;
  const auto est = adversary_step_rewards(fail, RewardMode::EstimationBased, st, &model, false);
  const auto raw = model.estimate_episode(adversary_party_inputs(fail));
  for (std::size_t t = 0; t < est.size(); ++t) {
    EXPECT_DOUBLE_EQ(est[t], std::clamp(raw[t], -0.5, 0.5));
  }
}

TEST(Reward, ModeNames) {
  for (auto m : {RewardMode::Traditional, RewardMode::RuleBasedImmediate,
                 RewardMode::EstimationBased}) {
    EXPECT_EQ(parse_reward_mode(to_string(m)), m);
  }
  EXPECT_EQ(parse_reward_mode("rule"), RewardMode::RuleBasedImmediate);
  EXPECT_THROW(parse_reward_mode("bogus"), ConfigError);
}

TEST(Reward, EpisodeLossGradientMatchesFiniteDifferences) {
  Rng rng(6);
  RewardModel model(4, 5, rng);
  const auto inputs = adversary_party_inputs(three_steps(false));
  auto loss = [&](bool backward) { return model.episode_loss(inputs, 2.0, backward, 0.5) * 0.5; };
  const auto report = grad_check(loss, model.params(), 1e-4);
  EXPECT_TRUE(report.passed) << report.worst_param << ' ' << report.max_relative_error;
  const auto est = model.estimate_episode(inputs);
  const double sum = est[0] + est[1] + est[2];
  EXPECT_NEAR(model.episode_loss(inputs, 2.0, false), (2.0 - sum) * (2.0 - sum), 1e-12);
}

TEST(Reward, UpdateFitsEpisodeSums) {
  Rng rng(2);
  RewardModel model(4, 8, rng);
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  Adam adam(cfg, std::as_const(model).params());
  const auto a = three_steps(false);
  const auto b = three_steps(true);
  const std::vector<const EpisodeTrajectory*> batch{&a, &b};
  const std::vector<GroundTruthReward> gts{{20.0, OutcomeSource::VictimFailure},
                                           {0.0, OutcomeSource::VictimSuccess}};
  const double first = reward_model_update(model, batch, gts, adam);
  double last = first;
  for (int i = 0; i < 200; ++i) last = reward_model_update(model, batch, gts, adam);
  EXPECT_LT(last, 0.05 * first);
  EXPECT_THROW(reward_model_update(model, batch, {gts[0]}, adam), StructuralError);
}
