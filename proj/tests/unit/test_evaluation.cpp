#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nalab/errors.hpp"
#include "nalab/evaluation.hpp"

using namespace nalab;

namespace {

FrozenPolicy untrained(const EnvConfig& env) {
  QmixConfig c;
  c.hidden_units = 8;
  c.hidden_layers = 1;
  QmixLearner l(victim_team(describe(env)), c, 1);
  return FrozenPolicy::from_learner(l);
}

}  // namespace

TEST(Evaluation, WilsonIntervalByHand) {
  const auto w = wilson_interval(8, 10);
  EXPECT_DOUBLE_EQ(w.rate, 0.8);
  const double z = 1.959963984540054;
  const double n = 10.0, p = 0.8;
  const double expected = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  EXPECT_NEAR(w.half_width, expected, 1e-12);
  EXPECT_THROW(wilson_interval(0, 0), ConfigError);
}

TEST(Evaluation, ResultDoesNotDependOnWorkers) {
  const EnvConfig env{SkirmishConfig{}};
  const auto p = untrained(env);
  const auto one = evaluate_policies(env, p, AdversarySetting::random(), 24, 5, 1);
  const auto four = evaluate_policies(env, p, AdversarySetting::random(), 24, 5, 4);
  EXPECT_EQ(one.win.wins, four.win.wins);
  EXPECT_EQ(one.mean_native_return, four.mean_native_return);
  EXPECT_EQ(one.mean_length, four.mean_length);
  EXPECT_THROW(evaluate_policies(env, p, AdversarySetting::random(), 0, 5), ConfigError);
}

TEST(Evaluation, AbsentSettingRemovesNeutrals) {
  const EnvConfig env{SkirmishConfig{}};
  const auto p = untrained(env);
  const auto r = evaluate_policies(env, p, AdversarySetting::absent(), 5, 1);
  EXPECT_EQ(r.win.episodes, 5);
}

TEST(Evaluation, MeanAndSampleStd) {
  EXPECT_DOUBLE_EQ(mean({1.0, 2.0, 3.0, 6.0}), 3.0);
  EXPECT_DOUBLE_EQ(sample_std({1.0, 2.0, 3.0, 6.0}), std::sqrt(14.0 / 3.0));
  EXPECT_EQ(sample_std({4.0}), 0.0);
}

TEST(Evaluation, TableCsvHasOneLinePerRow) {
  WinRateTable t;
  t.rows.push_back({"a", 0.1, 0, 0.9, 0, 1.0, 0, 0.8, 0, 5, 200});
  t.rows.push_back({"b", 0.2, 0, 0.9, 0, 1.0, 0, 0.7, 0, 5, 200});
  const auto csv = t.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("a,"), std::string::npos);
}
