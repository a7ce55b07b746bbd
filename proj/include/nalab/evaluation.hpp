#pragma once

// Greedy-policy win-rate measurement with Wilson score intervals.

#include <cstdint>
#include <string>
#include <vector>

#include "nalab/rollout.hpp"
#include "nalab/simulation.hpp"

namespace nalab {

struct WinRate {
  double rate = 0.0;
  double half_width = 0.0;
  int wins = 0;
  int episodes = 0;
};

// 95% Wilson score interval: returns (centre-free) rate and half-width.
WinRate wilson_interval(int wins, int episodes, double z = 1.959963984540054);

// How the neutral party behaves during an evaluation.
struct AdversarySetting {
  enum class Kind { Absent, Random, Policy };
  Kind kind = Kind::Random;
  const FrozenPolicy* policy = nullptr;

  static AdversarySetting absent() { return {Kind::Absent, nullptr}; }
  static AdversarySetting random() { return {Kind::Random, nullptr}; }
  static AdversarySetting frozen(const FrozenPolicy& p) { return {Kind::Policy, &p}; }
};

struct EvaluationSummary {
  WinRate win;
  double mean_native_return = 0.0;
  double mean_length = 0.0;
};

// Plays `episodes` greedy episodes with seeds derived from `seed`. Episodes
// are independent, so the result does not depend on `workers`.
// ConfigError when episodes <= 0.
EvaluationSummary evaluate_policies(const EnvConfig& env, const FrozenPolicy& victims,
                                    const AdversarySetting& adversaries, int episodes,
                                    std::uint64_t seed, int workers = 1);

WinRate evaluate_win_rate(const EnvConfig& env, const FrozenPolicy& victims,
                          const AdversarySetting& adversaries, int episodes, std::uint64_t seed,
                          int workers = 1);

struct WinRateRow {
  std::string label;
  double under_attack = 0.0;
  double under_attack_std = 0.0;
  double no_attack = 0.0;  // neutrals present, acting at random
  double no_attack_std = 0.0;
  double no_neutrals = 0.0;  // neutral units absent
  double no_neutrals_std = 0.0;
  double reduction = 0.0;  // mean over seeds of no_attack - under_attack
  double reduction_std = 0.0;
  int seeds = 0;
  int episodes = 0;
};

struct WinRateTable {
  std::vector<WinRateRow> rows;

  std::string to_csv() const;
};

double mean(const std::vector<double>& values);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(const std::vector<double>& values);

}  // namespace nalab
