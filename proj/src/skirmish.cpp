#include "nalab/skirmish.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "nalab/errors.hpp"

namespace nalab {

namespace {

int chebyshev(const SkirmishUnit& a, const SkirmishUnit& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

int party_health(const std::vector<SkirmishUnit>& units) {
  int total = 0;
  for (const auto& u : units) total += u.health;
  return total;
}

bool any_alive(const std::vector<SkirmishUnit>& units) {
  return std::any_of(units.begin(), units.end(), [](const SkirmishUnit& u) { return u.alive(); });
}

double norm_coord(int v, int extent) {
  return extent <= 1 ? 0.0 : 2.0 * v / (extent - 1) - 1.0;
}

}  // namespace

void SkirmishConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("skirmish config: " + what);
  };
  require(width >= 3 && height >= 1, "grid must be at least 3x1");
  require(victims > 0, "victims must be positive");
  require(opponents > 0, "opponents must be positive");
  require(adversaries >= 0, "adversaries must be non-negative");
  require(unit_health > 0 && opponent_health > 0 && adversary_health > 0,
          "health must be positive");
  require(attack_range > 0 && attack_damage > 0, "attack range/damage must be positive");
  require(sight_range > 0, "sight_range must be positive");
  require(horizon > 0, "horizon must be positive");
  require(neutral_slots >= 0, "neutral_slots must be non-negative");
  const int vcols = (victims + height - 1) / height;
  const int ocols = (opponents + height - 1) / height;
  require(vcols + ocols < width, "victim and opponent spawn columns overlap");
  const int middle = (width - vcols - ocols) * height;
  require(adversaries <= middle, "too many adversaries for the neutral spawn band");
}

SkirmishConfig SkirmishConfig::from_kv(const KeyValueConfig& kv) {
  SkirmishConfig c;
  const SkirmishConfig d;
  auto geti = [&](const char* key, int fallback) {
    return kv.contains(key) ? static_cast<int>(kv.get_int(key)) : fallback;
  };
  auto getb = [&](const char* key, bool fallback) {
    return kv.contains(key) ? kv.get_bool(key) : fallback;
  };
  c.width = geti("width", d.width);
  c.height = geti("height", d.height);
  c.victims = geti("victims", d.victims);
  c.opponents = geti("opponents", d.opponents);
  c.adversaries = geti("adversaries", d.adversaries);
  c.unit_health = geti("unit_health", d.unit_health);
  c.opponent_health = geti("opponent_health", d.opponent_health);
  c.adversary_health = geti("adversary_health", d.adversary_health);
  c.attack_range = geti("attack_range", d.attack_range);
  c.attack_damage = geti("attack_damage", d.attack_damage);
  c.sight_range = geti("sight_range", d.sight_range);
  c.horizon = geti("horizon", d.horizon);
  c.neutral_slots = geti("neutral_slots", d.neutral_slots);
  c.line_of_fire = getb("line_of_fire", d.line_of_fire);
  c.adversaries_attack_opponents = getb("adversaries_attack_opponents", d.adversaries_attack_opponents);
  c.victims_attack_neutrals = getb("victims_attack_neutrals", d.victims_attack_neutrals);
  return c;
}

KeyValueConfig SkirmishConfig::to_kv() const {
  KeyValueConfig kv;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("width", std::to_string(width));
  kv.set("height", std::to_string(height));
  kv.set("victims", std::to_string(victims));
  kv.set("opponents", std::to_string(opponents));
  kv.set("adversaries", std::to_string(adversaries));
  kv.set("unit_health", std::to_string(unit_health));
  kv.set("opponent_health", std::to_string(opponent_health));
  kv.set("adversary_health", std::to_string(adversary_health));
  kv.set("attack_range", std::to_string(attack_range));
  kv.set("attack_damage", std::to_string(attack_damage));
  kv.set("sight_range", std::to_string(sight_range));
  kv.set("horizon", std::to_string(horizon));
  kv.set("neutral_slots", std::to_string(neutral_slots));
  kv.set("line_of_fire", b(line_of_fire));
  kv.set("adversaries_attack_opponents", b(adversaries_attack_opponents));
  kv.set("victims_attack_neutrals", b(victims_attack_neutrals));
  return kv;
}

Skirmish::Skirmish(SkirmishConfig config) : config_(config) {
  config_.validate();
  descriptor_.name = "skirmish";
  descriptor_.horizon = config_.horizon;
  descriptor_.third_count = config_.opponents;

  std::vector<std::string> base{"noop", "north", "south", "east", "west"};
  descriptor_.victims.count = config_.victims;
  descriptor_.victims.obs_size =
      kSelfFeatures +
      kUnitFeatures * (config_.victims - 1 + config_.opponents + config_.neutral_slots);
  descriptor_.victims.action_names = base;
  for (int k = 0; k < config_.opponents; ++k) {
    descriptor_.victims.action_names.push_back("attack_opponent_" + std::to_string(k));
  }
  if (config_.victims_attack_neutrals) {
    for (int k = 0; k < config_.neutral_slots; ++k) {
      descriptor_.victims.action_names.push_back("attack_neutral_" + std::to_string(k));
    }
  }

  descriptor_.adversaries.count = config_.adversaries;
  descriptor_.adversaries.obs_size =
      kSelfFeatures +
      kUnitFeatures * (std::max(config_.adversaries - 1, 0) + config_.victims + config_.opponents);
  descriptor_.adversaries.action_names = base;
  if (config_.adversaries_attack_opponents) {
    for (int k = 0; k < config_.opponents; ++k) {
      descriptor_.adversaries.action_names.push_back("attack_opponent_" + std::to_string(k));
    }
  }

  descriptor_.state_size =
      3 * (config_.victims + config_.opponents + config_.adversaries) + 1;
  descriptor_.failure_paths = {
      {0, "victim_damage", "health lost by the victim party this step / total victim health"},
      {1, "task_delay", "1/horizon for every step the opponent party survives"},
  };
}

SkirmishState Skirmish::reset(std::uint64_t seed) const {
  SkirmishState s;
  s.rng.seed(seed);
  const int h = config_.height;
  const int vcols = (config_.victims + h - 1) / h;
  const int ocols = (config_.opponents + h - 1) / h;

  auto spawn = [&](int col_begin, int col_end, int count, int health) {
    std::vector<int> cells((col_end - col_begin) * h);
    std::iota(cells.begin(), cells.end(), 0);
    // Fisher-Yates with an explicit draw so the sequence is library independent.
    for (int i = static_cast<int>(cells.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(s.rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
    }
    std::vector<SkirmishUnit> units;
    for (int k = 0; k < count; ++k) {
      const int c = cells[static_cast<std::size_t>(k)];
      units.push_back({col_begin + c / h, c % h, health});
    }
    return units;
  };
  s.victims = spawn(0, vcols, config_.victims, config_.unit_health);
  s.opponents = spawn(config_.width - ocols, config_.width, config_.opponents,
                      config_.opponent_health);
  s.adversaries = spawn(vcols, config_.width - ocols, config_.adversaries, config_.adversary_health);
  return s;
}

const SkirmishUnit* Skirmish::unit(const SkirmishState& state, const AgentId& id) const {
  const std::vector<SkirmishUnit>* units = nullptr;
  switch (id.party) {
    case Party::Victim:
      units = &state.victims;
      break;
    case Party::Adversary:
      units = &state.adversaries;
      break;
    case Party::Third:
      units = &state.opponents;
      break;
  }
  if (id.index < 0 || id.index >= static_cast<int>(units->size())) {
    throw LookupError("skirmish: unknown agent " + to_string(id));
  }
  return &(*units)[static_cast<std::size_t>(id.index)];
}

bool Skirmish::occupied(const SkirmishState& state, int x, int y) const {
  auto hit = [&](const std::vector<SkirmishUnit>& units) {
    return std::any_of(units.begin(), units.end(), [&](const SkirmishUnit& u) {
      return u.alive() && u.x == x && u.y == y;
    });
  };
  return hit(state.victims) || hit(state.opponents) || hit(state.adversaries);
}

bool Skirmish::in_range(const SkirmishUnit& from, const SkirmishUnit& to,
                        const SkirmishState& state) const {
  if (!from.alive() || !to.alive()) return false;
  if (chebyshev(from, to) > config_.attack_range) return false;
  if (!config_.line_of_fire) return true;
  // Bresenham walk over the cells strictly between the two units.
  int x0 = from.x, y0 = from.y;
  const int x1 = to.x, y1 = to.y;
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
    if (x0 == x1 && y0 == y1) return true;
    if (occupied(state, x0, y0)) return false;
  }
}

ActionMask Skirmish::available_actions(const SkirmishState& state, const AgentId& agent) const {
  const SkirmishUnit* self = unit(state, agent);
  const RoleLayout& layout =
      agent.party == Party::Adversary ? descriptor_.adversaries : descriptor_.victims;
  const int n_actions = agent.party == Party::Third ? kFirstAttack + config_.victims
                                                    : layout.action_count();
  ActionMask mask(static_cast<std::size_t>(n_actions), false);
  mask[kNoop] = true;
  if (!self->alive() || state.terminal) return mask;
  for (int m = 0; m < kMoveCount; ++m) {
    const int nx = self->x + kMoves[static_cast<std::size_t>(m)][0];
    const int ny = self->y + kMoves[static_cast<std::size_t>(m)][1];
    mask[static_cast<std::size_t>(1 + m)] =
        nx >= 0 && ny >= 0 && nx < config_.width && ny < config_.height;
  }
  switch (agent.party) {
    case Party::Victim: {
      for (int k = 0; k < config_.opponents; ++k) {
        mask[static_cast<std::size_t>(kFirstAttack + k)] =
            in_range(*self, state.opponents[static_cast<std::size_t>(k)], state);
      }
      if (config_.victims_attack_neutrals) {
        const int slots = std::min(config_.neutral_slots, config_.adversaries);
        for (int k = 0; k < slots; ++k) {
          mask[static_cast<std::size_t>(kFirstAttack + config_.opponents + k)] =
              in_range(*self, state.adversaries[static_cast<std::size_t>(k)], state);
        }
      }
      break;
    }
    case Party::Adversary:
      // Neutral units never get an action that harms a victim.
      if (config_.adversaries_attack_opponents) {
        for (int k = 0; k < config_.opponents; ++k) {
          mask[static_cast<std::size_t>(kFirstAttack + k)] =
              in_range(*self, state.opponents[static_cast<std::size_t>(k)], state);
        }
      }
      break;
    case Party::Third:
      for (int k = 0; k < config_.victims; ++k) {
        mask[static_cast<std::size_t>(kFirstAttack + k)] =
            in_range(*self, state.victims[static_cast<std::size_t>(k)], state);
      }
      break;
  }
  return mask;
}

int Skirmish::opponent_action(const SkirmishState& state, int index) const {
  const SkirmishUnit& self = state.opponents[static_cast<std::size_t>(index)];
  if (!self.alive()) return kNoop;
  int best = -1;
  int best_dist = 0;
  for (int k = 0; k < config_.victims; ++k) {
    const auto& v = state.victims[static_cast<std::size_t>(k)];
    if (!in_range(self, v, state)) continue;
    const int d = chebyshev(self, v);
    if (best < 0 || d < best_dist) {
      best = k;
      best_dist = d;
    }
  }
  if (best >= 0) return kFirstAttack + best;

  int target = -1;
  int target_dist = 0;
  for (int k = 0; k < config_.victims; ++k) {
    const auto& v = state.victims[static_cast<std::size_t>(k)];
    if (!v.alive()) continue;
    const int d = chebyshev(self, v);
    if (target < 0 || d < target_dist) {
      target = k;
      target_dist = d;
    }
  }
  if (target < 0) return kNoop;
  const auto& v = state.victims[static_cast<std::size_t>(target)];
  const int dx = v.x - self.x;
  const int dy = v.y - self.y;
  auto move_for = [&](int mx, int my) -> int {
    for (int m = 0; m < kMoveCount; ++m) {
      if (kMoves[static_cast<std::size_t>(m)][0] == mx &&
          kMoves[static_cast<std::size_t>(m)][1] == my) {
        return 1 + m;
      }
    }
    return kNoop;
  };
  std::vector<std::pair<int, int>> prefs;
  const int sx = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int sy = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  if (std::abs(dx) >= std::abs(dy)) {
    if (sx != 0) prefs.emplace_back(sx, 0);
    if (sy != 0) prefs.emplace_back(0, sy);
  } else {
    if (sy != 0) prefs.emplace_back(0, sy);
    if (sx != 0) prefs.emplace_back(sx, 0);
  }
  for (const auto& [mx, my] : prefs) {
    const int nx = self.x + mx, ny = self.y + my;
    if (nx < 0 || ny < 0 || nx >= config_.width || ny >= config_.height) continue;
    if (!occupied(state, nx, ny)) return move_for(mx, my);
  }
  return kNoop;
}

std::pair<SkirmishState, StepOutcome> Skirmish::step(const SkirmishState& state,
                                                     const JointAction& action) const {
  if (state.terminal) throw LifecycleError("skirmish: step on terminal state");
  if (static_cast<int>(action.victims.size()) != config_.victims ||
      static_cast<int>(action.adversaries.size()) != config_.adversaries) {
    throw ContractViolation("skirmish: joint action has wrong agent count");
  }
  for (int p = 0; p < 2; ++p) {
    const Party party = p == 0 ? Party::Adversary : Party::Victim;
    const auto& acts = p == 0 ? action.adversaries : action.victims;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      const AgentId id{party, static_cast<int>(i)};
      const ActionMask mask = available_actions(state, id);
      const int a = acts[i];
      if (a < 0 || a >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(a)]) {
        throw ContractViolation("skirmish: unavailable action " + std::to_string(a) +
                                " for agent " + to_string(id));
      }
    }
  }

  std::vector<int> opp_actions(static_cast<std::size_t>(config_.opponents));
  for (int k = 0; k < config_.opponents; ++k) {
    opp_actions[static_cast<std::size_t>(k)] = opponent_action(state, k);
  }

  SkirmishState next = state;

  // Movement in AgentId order: adversaries, victims, opponents.
  auto move_units = [&](std::vector<SkirmishUnit>& units, const std::vector<int>& acts) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      auto& u = units[i];
      const int a = acts[i];
      if (!u.alive() || a < 1 || a > kMoveCount) continue;
      const int nx = u.x + kMoves[static_cast<std::size_t>(a - 1)][0];
      const int ny = u.y + kMoves[static_cast<std::size_t>(a - 1)][1];
      if (nx < 0 || ny < 0 || nx >= config_.width || ny >= config_.height) continue;
      if (occupied(next, nx, ny)) continue;
      u.x = nx;
      u.y = ny;
    }
  };
  move_units(next.adversaries, action.adversaries);
  move_units(next.victims, action.victims);
  move_units(next.opponents, opp_actions);

  // Attacks against post-movement positions, applied simultaneously.
  std::vector<int> dmg_victims(next.victims.size(), 0);
  std::vector<int> dmg_opponents(next.opponents.size(), 0);
  std::vector<int> dmg_adversaries(next.adversaries.size(), 0);
  const int damage = config_.attack_damage;
  for (std::size_t i = 0; i < next.victims.size(); ++i) {
    const int a = action.victims[i] - kFirstAttack;
    if (a < 0 || !next.victims[i].alive()) continue;
    if (a < config_.opponents) {
      if (in_range(next.victims[i], next.opponents[static_cast<std::size_t>(a)], next)) {
        dmg_opponents[static_cast<std::size_t>(a)] += damage;
      }
    } else {
      const auto n = static_cast<std::size_t>(a - config_.opponents);
      if (in_range(next.victims[i], next.adversaries[n], next)) dmg_adversaries[n] += damage;
    }
  }
  for (std::size_t i = 0; i < next.adversaries.size(); ++i) {
    const int a = action.adversaries[i] - kFirstAttack;
    if (a < 0 || !next.adversaries[i].alive()) continue;
    if (in_range(next.adversaries[i], next.opponents[static_cast<std::size_t>(a)], next)) {
      dmg_opponents[static_cast<std::size_t>(a)] += damage;
    }
  }
  for (std::size_t i = 0; i < next.opponents.size(); ++i) {
    const int a = opp_actions[i] - kFirstAttack;
    if (a < 0 || !next.opponents[i].alive()) continue;
    if (in_range(next.opponents[i], next.victims[static_cast<std::size_t>(a)], next)) {
      dmg_victims[static_cast<std::size_t>(a)] += damage;
    }
  }
  auto apply = [](std::vector<SkirmishUnit>& units, const std::vector<int>& dmg) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      units[i].health = std::max(0, units[i].health - dmg[i]);
    }
  };
  apply(next.victims, dmg_victims);
  apply(next.opponents, dmg_opponents);
  apply(next.adversaries, dmg_adversaries);

  next.step_count = state.step_count + 1;
  StepOutcome out;
  const bool opponents_alive = any_alive(next.opponents);
  const bool victims_alive = any_alive(next.victims);
  if (!opponents_alive) {
    out.terminal = true;
    out.victim_success = victims_alive;
    out.victim_failed = !victims_alive;
  } else if (!victims_alive || next.step_count >= config_.horizon) {
    out.terminal = true;
    out.victim_failed = true;
  }
  next.terminal = out.terminal;
  next.victim_success = out.victim_success;
  out.failure_signals = failure_signals(state, action, next);
  return {std::move(next), std::move(out)};
}

FailureSignalVector Skirmish::failure_signals(const SkirmishState& prev, const JointAction&,
                                              const SkirmishState& next) const {
  if (next.step_count != prev.step_count + 1 || next.victims.size() != prev.victims.size() ||
      next.opponents.size() != prev.opponents.size()) {
    throw ContractViolation("skirmish: failure_signals on a non-transition state pair");
  }
  const double total = static_cast<double>(config_.unit_health) * config_.victims;
  const int lost = party_health(prev.victims) - party_health(next.victims);
  if (lost < 0) throw ContractViolation("skirmish: victim health increased");
  const double delay = any_alive(next.opponents) ? 1.0 / config_.horizon : 0.0;
  return {lost / total, delay};
}

double Skirmish::native_reward(const SkirmishState& prev, const SkirmishState& next) const {
  const double total = static_cast<double>(config_.opponent_health) * config_.opponents;
  const double dealt = party_health(prev.opponents) - party_health(next.opponents);
  double r = 10.0 * dealt / total;
  if (next.terminal && next.victim_success) r += 10.0;
  return r;
}

void Skirmish::fill_slot(double* out, const SkirmishUnit& self, const SkirmishUnit& other,
                         int max_health, bool attackable) const {
  if (!self.alive() || !other.alive() || chebyshev(self, other) > config_.sight_range) return;
  const double r = config_.sight_range;
  out[0] = 1.0;
  out[1] = (other.x - self.x) / r;
  out[2] = (other.y - self.y) / r;
  out[3] = static_cast<double>(other.health) / max_health;
  out[4] = attackable ? 1.0 : 0.0;
}

Observation Skirmish::observe(const SkirmishState& state, const AgentId& agent) const {
  if (agent.party == Party::Third) throw LookupError("skirmish: opponents are scripted");
  const SkirmishUnit& self = *unit(state, agent);
  const bool victim = agent.party == Party::Victim;
  Observation obs(static_cast<std::size_t>(victim ? descriptor_.victims.obs_size
                                                  : descriptor_.adversaries.obs_size),
                  0.0);
  if (!self.alive()) return obs;
  const int own_max = victim ? config_.unit_health : config_.adversary_health;
  obs[0] = static_cast<double>(self.health) / own_max;
  obs[1] = norm_coord(self.x, config_.width);
  obs[2] = norm_coord(self.y, config_.height);
  obs[3] = static_cast<double>(state.step_count) / config_.horizon;
  double* slot = obs.data() + kSelfFeatures;
  auto add_group = [&](const std::vector<SkirmishUnit>& units, int skip, int max_health,
                       bool attackable_group, int limit) {
    int used = 0;
    for (int k = 0; k < static_cast<int>(units.size()) && used < limit; ++k) {
      if (k == skip) continue;
      const auto& u = units[static_cast<std::size_t>(k)];
      fill_slot(slot, self, u, max_health, attackable_group && in_range(self, u, state));
      slot += kUnitFeatures;
      ++used;
    }
    // Unused slots stay zero.
    slot += kUnitFeatures * (limit - used);
  };
  if (victim) {
    add_group(state.victims, agent.index, config_.unit_health, false, config_.victims - 1);
    add_group(state.opponents, -1, config_.opponent_health, true, config_.opponents);
    add_group(state.adversaries, -1, config_.adversary_health, config_.victims_attack_neutrals,
              config_.neutral_slots);
  } else {
    add_group(state.adversaries, agent.index, config_.adversary_health, false,
              std::max(config_.adversaries - 1, 0));
    add_group(state.victims, -1, config_.unit_health, false, config_.victims);
    add_group(state.opponents, -1, config_.opponent_health, config_.adversaries_attack_opponents,
              config_.opponents);
  }
  return obs;
}

std::vector<double> Skirmish::state_features(const SkirmishState& state) const {
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(descriptor_.state_size));
  auto add = [&](const std::vector<SkirmishUnit>& units, int max_health) {
    for (const auto& u : units) {
      f.push_back(static_cast<double>(u.health) / max_health);
      f.push_back(u.alive() ? norm_coord(u.x, config_.width) : 0.0);
      f.push_back(u.alive() ? norm_coord(u.y, config_.height) : 0.0);
    }
  };
  add(state.victims, config_.unit_health);
  add(state.opponents, config_.opponent_health);
  add(state.adversaries, config_.adversary_health);
  f.push_back(static_cast<double>(state.step_count) / config_.horizon);
  return f;
}

}  // namespace nalab
