#include "nalab/simulation.hpp"

#include <json.hpp>

#include "nalab/errors.hpp"

namespace nalab {

namespace {

template <class Model, class State>
class ModelSimulation final : public Simulation {
 public:
  explicit ModelSimulation(Model model) : model_(std::move(model)) {}

  const EnvDescriptor& descriptor() const override { return model_.descriptor(); }

  void reset(std::uint64_t seed) override {
    state_ = model_.reset(seed);
    last_reward_ = 0.0;
    started_ = true;
  }

  StepOutcome step(const JointAction& action) override {
    require_started();
    auto [next, outcome] = model_.step(state_, action);
    last_reward_ = model_.native_reward(state_, next);
    state_ = std::move(next);
    return outcome;
  }

  Observation observe(const AgentId& agent) const override {
    require_started();
    return model_.observe(state_, agent);
  }

  ActionMask available_actions(const AgentId& agent) const override {
    require_started();
    return model_.available_actions(state_, agent);
  }

  std::vector<double> state_features() const override {
    require_started();
    return model_.state_features(state_);
  }

  double last_native_reward() const override { return last_reward_; }
  int step_count() const override { return state_.step_count; }
  bool terminal() const override { return state_.terminal; }

  std::unique_ptr<Simulation> clone() const override {
    return std::make_unique<ModelSimulation>(*this);
  }

 private:
  void require_started() const {
    if (!started_) throw LifecycleError("simulation used before reset");
  }

  Model model_;
  State state_;
  double last_reward_ = 0.0;
  bool started_ = false;
};

}  // namespace

std::string EnvConfig::name() const {
  return std::holds_alternative<SkirmishConfig>(model) ? "skirmish" : "corridor";
}

int EnvConfig::adversaries() const {
  return std::visit([](const auto& c) { return c.adversaries; }, model);
}

int EnvConfig::horizon() const {
  return std::visit([](const auto& c) { return c.horizon; }, model);
}

EnvConfig EnvConfig::with_adversaries(int count) const {
  EnvConfig out = *this;
  std::visit([count](auto& c) { c.adversaries = count; }, out.model);
  return out;
}

EnvConfig EnvConfig::from_kv(const KeyValueConfig& kv) {
  const std::string name = kv.contains("name") ? kv.get_string("name") : "skirmish";
  EnvConfig out;
  if (name == "skirmish") {
    out.model = SkirmishConfig::from_kv(kv.section("skirmish"));
  } else if (name == "corridor") {
    out.model = CorridorConfig::from_kv(kv.section("corridor"));
  } else {
    throw ConfigError("unknown environment: " + name);
  }
  std::visit([](const auto& c) { c.validate(); }, out.model);
  return out;
}

KeyValueConfig EnvConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("name", name());
  std::visit([&](const auto& c) { kv.merge_section(name(), c.to_kv()); }, model);
  return kv;
}

std::unique_ptr<Simulation> make_simulation(const EnvConfig& config) {
  if (const auto* s = std::get_if<SkirmishConfig>(&config.model)) {
    return std::make_unique<ModelSimulation<Skirmish, SkirmishState>>(Skirmish(*s));
  }
  return std::make_unique<ModelSimulation<Corridor, CorridorState>>(
      Corridor(std::get<CorridorConfig>(config.model)));
}

EnvDescriptor describe(const EnvConfig& config) {
  if (const auto* s = std::get_if<SkirmishConfig>(&config.model)) {
    return Skirmish(*s).descriptor();
  }
  return Corridor(std::get<CorridorConfig>(config.model)).descriptor();
}

std::string descriptor_manifest(const EnvDescriptor& d) {
  nlohmann::ordered_json j;
  j["name"] = d.name;
  j["horizon"] = d.horizon;
  auto role = [](const RoleLayout& r) {
    nlohmann::ordered_json o;
    o["count"] = r.count;
    o["obs_size"] = r.obs_size;
    o["actions"] = r.action_names;
    return o;
  };
  j["victims"] = role(d.victims);
  j["adversaries"] = role(d.adversaries);
  j["third_count"] = d.third_count;
  j["state_size"] = d.state_size;
  auto paths = nlohmann::ordered_json::array();
  for (const auto& p : d.failure_paths) {
    paths.push_back({{"id", p.id}, {"name", p.name}, {"description", p.description}});
  }
  j["failure_paths"] = paths;
  return j.dump(2);
}

}  // namespace nalab
