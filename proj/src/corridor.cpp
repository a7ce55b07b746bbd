#include "nalab/corridor.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <tuple>

#include "nalab/errors.hpp"

namespace nalab {

namespace {

double norm_coord(int v, int extent) {
  return extent <= 1 ? 0.0 : 2.0 * v / (extent - 1) - 1.0;
}

// Occupancy test over every active vehicle, optionally skipping one.
bool occupied(const CorridorState& s, int lane, int col, const Vehicle* skip = nullptr) {
  auto hit = [&](const std::vector<Vehicle>& vs) {
    return std::any_of(vs.begin(), vs.end(), [&](const Vehicle& v) {
      return &v != skip && v.active && v.lane == lane && v.col == col;
    });
  };
  return hit(s.victims) || hit(s.adversaries) || hit(s.others);
}

}  // namespace

void CorridorConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("corridor config: " + what);
  };
  require(lanes > 0 && length >= 4, "need lanes >= 1 and length >= 4");
  require(victims > 0, "victims must be positive");
  require(victims <= lanes, "victims must fit in the start column");
  require(adversaries >= 0 && other_vehicles >= 0, "vehicle counts must be non-negative");
  require(horizon > 0, "horizon must be positive");
  require(speed_levels >= 2, "speed_levels must be at least 2");
  require(max_violations >= 0 && sight_columns > 0 && neutral_slots >= 0, "invalid limits");
  require(victims + adversaries + other_vehicles <= lanes * length, "too many vehicles");
  require(adversaries + other_vehicles <= lanes * (length - 2),
          "too many vehicles for the spawn band");
}

CorridorConfig CorridorConfig::from_kv(const KeyValueConfig& kv) {
  CorridorConfig c;
  const CorridorConfig d;
  auto geti = [&](const char* key, int fallback) {
    return kv.contains(key) ? static_cast<int>(kv.get_int(key)) : fallback;
  };
  c.lanes = geti("lanes", d.lanes);
  c.length = geti("length", d.length);
  c.victims = geti("victims", d.victims);
  c.adversaries = geti("adversaries", d.adversaries);
  c.other_vehicles = geti("other_vehicles", d.other_vehicles);
  c.horizon = geti("horizon", d.horizon);
  c.speed_levels = geti("speed_levels", d.speed_levels);
  c.max_violations = geti("max_violations", d.max_violations);
  c.sight_columns = geti("sight_columns", d.sight_columns);
  c.neutral_slots = geti("neutral_slots", d.neutral_slots);
  return c;
}

KeyValueConfig CorridorConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("lanes", std::to_string(lanes));
  kv.set("length", std::to_string(length));
  kv.set("victims", std::to_string(victims));
  kv.set("adversaries", std::to_string(adversaries));
  kv.set("other_vehicles", std::to_string(other_vehicles));
  kv.set("horizon", std::to_string(horizon));
  kv.set("speed_levels", std::to_string(speed_levels));
  kv.set("max_violations", std::to_string(max_violations));
  kv.set("sight_columns", std::to_string(sight_columns));
  kv.set("neutral_slots", std::to_string(neutral_slots));
  return kv;
}

Corridor::Corridor(CorridorConfig config) : config_(config) {
  config_.validate();
  descriptor_.name = "corridor";
  descriptor_.horizon = config_.horizon;
  descriptor_.third_count = config_.other_vehicles;
  const std::vector<std::string> actions{"idle", "faster", "slower", "lane_left", "lane_right"};
  descriptor_.victims.count = config_.victims;
  descriptor_.victims.obs_size =
      kSelfFeatures +
      kUnitFeatures * (config_.victims - 1 + config_.neutral_slots + config_.other_vehicles);
  descriptor_.victims.action_names = actions;
  descriptor_.adversaries.count = config_.adversaries;
  descriptor_.adversaries.obs_size =
      kSelfFeatures + kUnitFeatures * (std::max(config_.adversaries - 1, 0) + config_.victims +
                                       config_.other_vehicles);
  descriptor_.adversaries.action_names = actions;
  descriptor_.state_size = 4 * (config_.victims + config_.adversaries + config_.other_vehicles) + 1;
  descriptor_.failure_paths = {
      {0, "collision", "1 if a victim collided this step"},
      {1, "timeout", "1/horizon for every step the victims are not all at the goal"},
      {2, "rule_violation", "number of victims standing still on the carriageway this step"},
  };
}

CorridorState Corridor::reset(std::uint64_t seed) const {
  CorridorState s;
  s.rng.seed(seed);
  auto shuffled = [&](int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(s.rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
    return v;
  };
  const auto lanes = shuffled(config_.lanes);
  for (int i = 0; i < config_.victims; ++i) {
    s.victims.push_back({lanes[static_cast<std::size_t>(i)], 0, 1, true, false});
  }
  s.arrived.assign(static_cast<std::size_t>(config_.victims), 0);
  // Neutral and background vehicles share the band of columns 1 .. length-2.
  const int band = config_.length - 2;
  const auto cells = shuffled(config_.lanes * band);
  std::size_t next = 0;
  for (int i = 0; i < config_.adversaries; ++i, ++next) {
    const int c = cells[next];
    s.adversaries.push_back({c % config_.lanes, 1 + c / config_.lanes, 1, true, false});
  }
  for (int i = 0; i < config_.other_vehicles; ++i, ++next) {
    const int c = cells[next];
    s.others.push_back({c % config_.lanes, 1 + c / config_.lanes, 1, true, false});
  }
  return s;
}

const Vehicle& Corridor::vehicle(const CorridorState& state, const AgentId& id) const {
  const std::vector<Vehicle>* vs = id.party == Party::Victim      ? &state.victims
                                   : id.party == Party::Adversary ? &state.adversaries
                                                                  : &state.others;
  if (id.index < 0 || id.index >= static_cast<int>(vs->size())) {
    throw LookupError("corridor: unknown agent " + to_string(id));
  }
  return (*vs)[static_cast<std::size_t>(id.index)];
}

bool Corridor::victim_at(const CorridorState& state, int lane, int col) const {
  return std::any_of(state.victims.begin(), state.victims.end(), [&](const Vehicle& v) {
    return v.active && v.lane == lane && v.col == col;
  });
}

ActionMask Corridor::available_actions(const CorridorState& state, const AgentId& agent) const {
  const Vehicle& v = vehicle(state, agent);
  ActionMask mask(kActionCount, false);
  mask[kIdle] = true;
  if (!v.active || state.terminal || agent.party == Party::Third) return mask;
  mask[kFaster] = v.speed + 1 < config_.speed_levels;
  mask[kSlower] = v.speed > 0;
  mask[kLaneLeft] = v.lane > 0;
  mask[kLaneRight] = v.lane + 1 < config_.lanes;
  if (agent.party == Party::Adversary) {
    if (mask[kLaneLeft] && victim_at(state, v.lane - 1, v.col)) mask[kLaneLeft] = false;
    if (mask[kLaneRight] && victim_at(state, v.lane + 1, v.col)) mask[kLaneRight] = false;
  }
  return mask;
}

std::pair<CorridorState, StepOutcome> Corridor::step(const CorridorState& state,
                                                     const JointAction& action) const {
  if (state.terminal) throw LifecycleError("corridor: step on terminal state");
  if (static_cast<int>(action.victims.size()) != config_.victims ||
      static_cast<int>(action.adversaries.size()) != config_.adversaries) {
    throw ContractViolation("corridor: joint action has wrong agent count");
  }
  for (int p = 0; p < 2; ++p) {
    const Party party = p == 0 ? Party::Adversary : Party::Victim;
    const auto& acts = p == 0 ? action.adversaries : action.victims;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      const AgentId id{party, static_cast<int>(i)};
      const ActionMask mask = available_actions(state, id);
      const int a = acts[i];
      if (a < 0 || a >= kActionCount || !mask[static_cast<std::size_t>(a)]) {
        throw ContractViolation("corridor: unavailable action " + std::to_string(a) +
                                " for agent " + to_string(id));
      }
    }
  }

  CorridorState next = state;
  // (column desc, party order, index) processing order.
  struct Entry {
    int col;
    int party;
    int index;
  };
  std::vector<Entry> order;
  auto collect = [&](const std::vector<Vehicle>& vs, Party party) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (vs[i].active) order.push_back({vs[i].col, static_cast<int>(party), static_cast<int>(i)});
    }
  };
  collect(next.adversaries, Party::Adversary);
  collect(next.victims, Party::Victim);
  collect(next.others, Party::Third);
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    return std::tie(b.col, a.party, a.index) < std::tie(a.col, b.party, b.index);
  });

  for (const Entry& e : order) {
    const Party party = static_cast<Party>(e.party);
    auto& vs = party == Party::Victim      ? next.victims
               : party == Party::Adversary ? next.adversaries
                                           : next.others;
    Vehicle& v = vs[static_cast<std::size_t>(e.index)];
    const int a = party == Party::Victim      ? action.victims[static_cast<std::size_t>(e.index)]
                  : party == Party::Adversary ? action.adversaries[static_cast<std::size_t>(e.index)]
                                              : kIdle;
    const bool is_victim = party == Party::Victim;
    if (a == kLaneLeft || a == kLaneRight) {
      const int nl = v.lane + (a == kLaneLeft ? -1 : 1);
      if (occupied(next, nl, v.col, &v)) {
        if (is_victim) {
          v.crashed = true;
          continue;
        }
      } else {
        v.lane = nl;
      }
    }
    if (a == kFaster) v.speed = std::min(v.speed + 1, config_.speed_levels - 1);
    if (a == kSlower) v.speed = std::max(v.speed - 1, 0);
    for (int k = 0; k < v.speed; ++k) {
      const int nc = v.col + 1;
      if (nc >= config_.length) {
        v.active = false;  // neutral and background traffic leaves the road
        break;
      }
      if (occupied(next, v.lane, nc, &v)) {
        if (is_victim) v.crashed = true;
        break;
      }
      v.col = nc;
      if (is_victim && v.col == goal_column()) break;
    }
    if (is_victim && v.col == goal_column() && !v.crashed) {
      next.arrived[static_cast<std::size_t>(e.index)] = 1;
      v.active = false;
    }
  }

  next.step_count = state.step_count + 1;
  const bool crashed = std::any_of(next.victims.begin(), next.victims.end(),
                                   [](const Vehicle& v) { return v.crashed; });
  int violators = 0;
  for (std::size_t i = 0; i < next.victims.size(); ++i) {
    if (next.victims[i].active && next.victims[i].speed == 0) ++violators;
  }
  next.violations = state.violations + violators;
  const bool all_arrived = std::all_of(next.arrived.begin(), next.arrived.end(),
                                       [](int a) { return a == 1; });
  StepOutcome out;
  if (crashed || next.violations > config_.max_violations) {
    out.terminal = true;
    out.victim_failed = true;
  } else if (all_arrived) {
    out.terminal = true;
    out.victim_success = true;
  } else if (next.step_count >= config_.horizon) {
    out.terminal = true;
    out.victim_failed = true;
  }
  next.terminal = out.terminal;
  next.victim_success = out.victim_success;
  out.failure_signals = failure_signals(state, action, next);
  return {std::move(next), std::move(out)};
}

FailureSignalVector Corridor::failure_signals(const CorridorState& prev, const JointAction&,
                                              const CorridorState& next) const {
  if (next.step_count != prev.step_count + 1 || next.victims.size() != prev.victims.size()) {
    throw ContractViolation("corridor: failure_signals on a non-transition state pair");
  }
  double collision = 0.0;
  for (std::size_t i = 0; i < next.victims.size(); ++i) {
    if (next.victims[i].crashed && !prev.victims[i].crashed) collision = 1.0;
  }
  const double timeout = next.victim_success ? 0.0 : 1.0 / config_.horizon;
  return {collision, timeout, static_cast<double>(next.violations - prev.violations)};
}

double Corridor::native_reward(const CorridorState& prev, const CorridorState& next) const {
  double progress = 0.0;
  for (std::size_t i = 0; i < next.victims.size(); ++i) {
    progress += next.victims[i].col - prev.victims[i].col;
  }
  double r = progress / goal_column();
  if (next.terminal && next.victim_success) r += 10.0;
  return r;
}

Observation Corridor::observe(const CorridorState& state, const AgentId& agent) const {
  if (agent.party == Party::Third) throw LookupError("corridor: background traffic is scripted");
  const Vehicle& self = vehicle(state, agent);
  const bool victim = agent.party == Party::Victim;
  Observation obs(static_cast<std::size_t>(victim ? descriptor_.victims.obs_size
                                                  : descriptor_.adversaries.obs_size),
                  0.0);
  if (!self.active) return obs;
  const double vmax = config_.speed_levels - 1;
  obs[0] = norm_coord(self.lane, config_.lanes);
  obs[1] = norm_coord(self.col, config_.length);
  obs[2] = self.speed / vmax;
  obs[3] = static_cast<double>(state.step_count) / config_.horizon;
  double* slot = obs.data() + kSelfFeatures;
  auto add_group = [&](const std::vector<Vehicle>& vs, int skip, int limit) {
    int used = 0;
    for (int k = 0; k < static_cast<int>(vs.size()) && used < limit; ++k) {
      if (k == skip) continue;
      const Vehicle& o = vs[static_cast<std::size_t>(k)];
      if (o.active && std::abs(o.col - self.col) <= config_.sight_columns) {
        slot[0] = 1.0;
        slot[1] = static_cast<double>(o.lane - self.lane) / config_.lanes;
        slot[2] = static_cast<double>(o.col - self.col) / config_.sight_columns;
        slot[3] = o.speed / vmax;
      }
      slot += kUnitFeatures;
      ++used;
    }
    slot += kUnitFeatures * (limit - used);
  };
  if (victim) {
    add_group(state.victims, agent.index, config_.victims - 1);
    add_group(state.adversaries, -1, config_.neutral_slots);
    add_group(state.others, -1, config_.other_vehicles);
  } else {
    add_group(state.adversaries, agent.index, std::max(config_.adversaries - 1, 0));
    add_group(state.victims, -1, config_.victims);
    add_group(state.others, -1, config_.other_vehicles);
  }
  return obs;
}

std::vector<double> Corridor::state_features(const CorridorState& state) const {
  std::vector<double> f;
  auto add = [&](const std::vector<Vehicle>& vs) {
    for (const auto& v : vs) {
      f.push_back(v.active ? 1.0 : 0.0);
      f.push_back(norm_coord(v.lane, config_.lanes));
      f.push_back(norm_coord(std::min(v.col, config_.length - 1), config_.length));
      f.push_back(v.speed / static_cast<double>(config_.speed_levels - 1));
    }
  };
  add(state.victims);
  add(state.adversaries);
  add(state.others);
  f.push_back(static_cast<double>(state.step_count) / config_.horizon);
  return f;
}

}  // namespace nalab
