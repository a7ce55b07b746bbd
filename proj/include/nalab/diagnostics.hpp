#pragma once

// Self-checks shipped with the library: finite-difference gradient suites for
// every differentiable component and the tabular proposition suite.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nalab/oracle.hpp"

namespace nalab {

struct GradSuiteReport {
  std::string component;
  int seeds = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Components: mlp, lstm_unroll, mixer, reward_model_loss. Seeds 1..`seeds`.
std::vector<GradSuiteReport> run_gradient_suite(int seeds, double tolerance);

// Documented seeds of the shipped proposition instances.
std::vector<std::uint64_t> oracle_instance_seeds();

// Instances stored as fixtures in `dir` (instance_*.txt, sorted by name).
std::vector<TabularMDP> load_oracle_fixtures(const std::filesystem::path& dir);

}  // namespace nalab
