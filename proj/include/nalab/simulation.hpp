#pragma once

// Type-erased, stateful view over an environment model, used by rollouts,
// training and evaluation. One instance is owned by one roller.

#include <memory>
#include <string>
#include <variant>

#include "nalab/config.hpp"
#include "nalab/core.hpp"
#include "nalab/corridor.hpp"
#include "nalab/skirmish.hpp"

namespace nalab {

class Simulation {
 public:
  virtual ~Simulation() = default;

  virtual const EnvDescriptor& descriptor() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  // Steps the held state; failure signals are computed from (prev, next).
  virtual StepOutcome step(const JointAction& action) = 0;
  virtual Observation observe(const AgentId& agent) const = 0;
  virtual ActionMask available_actions(const AgentId& agent) const = 0;
  virtual std::vector<double> state_features() const = 0;
  // Victims' task reward for the most recent step.
  virtual double last_native_reward() const = 0;
  virtual int step_count() const = 0;
  virtual bool terminal() const = 0;
  virtual std::unique_ptr<Simulation> clone() const = 0;
};

// Environment selection plus its parameters. Key "name" picks the model;
// remaining keys of the "env" section configure it.
struct EnvConfig {
  std::variant<SkirmishConfig, CorridorConfig> model;

  std::string name() const;
  int adversaries() const;
  int horizon() const;
  EnvConfig with_adversaries(int count) const;

  static EnvConfig from_kv(const KeyValueConfig& env_section);
  KeyValueConfig to_kv() const;
};

std::unique_ptr<Simulation> make_simulation(const EnvConfig& config);
EnvDescriptor describe(const EnvConfig& config);

// Machine-readable descriptor manifest (JSON text).
std::string descriptor_manifest(const EnvDescriptor& descriptor);

}  // namespace nalab
