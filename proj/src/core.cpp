#include "nalab/core.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "nalab/errors.hpp"

namespace nalab {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Party party) {
  switch (party) {
    case Party::Adversary:
      return "adversary";
    case Party::Victim:
      return "victim";
    case Party::Third:
      return "third";
  }
  return "unknown";
}

std::string to_string(const AgentId& id) {
  return to_string(id.party) + "#" + std::to_string(id.index);
}

int JointAction::at(const AgentId& id) const {
  const auto& v = id.party == Party::Victim ? victims : adversaries;
  if (id.party == Party::Third || id.index < 0 || id.index >= static_cast<int>(v.size())) {
    throw LookupError("no action for agent " + to_string(id));
  }
  return v[static_cast<std::size_t>(id.index)];
}

namespace {

void check_party(const PartyStep& step, const RoleLayout& layout, const std::string& role,
                 int index, ValidationReport& report) {
  auto fail = [&](const std::string& what) {
    report.ok = false;
    report.violations.push_back("record " + std::to_string(index) + " " + what);
  };
  if (static_cast<int>(step.obs.size()) != layout.count ||
      static_cast<int>(step.masks.size()) != layout.count ||
      static_cast<int>(step.actions.size()) != layout.count) {
    fail("shape: " + role + " agent count");
    return;
  }
  for (int i = 0; i < layout.count; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (static_cast<int>(step.obs[ui].size()) != layout.obs_size) {
      fail("shape: " + role + " " + std::to_string(i) + " observation length " +
           std::to_string(step.obs[ui].size()) + " != " + std::to_string(layout.obs_size));
      continue;
    }
    if (static_cast<int>(step.masks[ui].size()) != layout.action_count()) {
      fail("shape: " + role + " " + std::to_string(i) + " mask length");
      continue;
    }
    const int a = step.actions[ui];
    if (a < 0 || a >= layout.action_count() || !step.masks[ui][static_cast<std::size_t>(a)]) {
      fail("mask: " + role + " " + std::to_string(i) + " took unavailable action " +
           std::to_string(a));
    }
  }
}

}  // namespace

ValidationReport validate_trajectory(const EpisodeTrajectory& traj, const EnvDescriptor& env) {
  if (traj.records.empty()) {
    throw ContractViolation("validate_trajectory: empty trajectory");
  }
  ValidationReport report;
  auto fail = [&](const std::string& what) {
    report.ok = false;
    report.violations.push_back(what);
  };
  if (traj.length() > env.horizon) {
    fail("length " + std::to_string(traj.length()) + " exceeds horizon " +
         std::to_string(env.horizon));
  }
  for (int t = 0; t < traj.length(); ++t) {
    const auto& rec = traj.records[static_cast<std::size_t>(t)];
    check_party(rec.victims, env.victims, "victim", t, report);
    check_party(rec.adversaries, env.adversaries, "adversary", t, report);
    if (static_cast<int>(rec.signals.size()) != env.failure_path_count()) {
      fail("record " + std::to_string(t) + " shape: failure signal length");
    }
    for (double s : rec.signals) {
      if (!(s >= 0.0)) {
        fail("record " + std::to_string(t) + " negative failure signal");
        break;
      }
    }
    const bool last = t + 1 == traj.length();
    if (rec.terminal && !last) {
      fail("record " + std::to_string(t) + " terminal before end");
    }
    if (!rec.terminal && last) {
      fail("record " + std::to_string(t) + " last record not terminal");
    }
  }
  const auto& out = traj.final_outcome;
  if (!out.terminal) fail("final outcome not terminal");
  if (out.victim_success && out.victim_failed) fail("outcome both success and failure");
  return report;
}

namespace {

ordered_json party_json(const PartyStep& s) {
  ordered_json j;
  j["obs"] = s.obs;
  std::vector<std::vector<int>> masks;
  masks.reserve(s.masks.size());
  for (const auto& m : s.masks) masks.emplace_back(m.begin(), m.end());
  j["masks"] = masks;
  j["actions"] = s.actions;
  return j;
}

PartyStep party_from_json(const ordered_json& j) {
  PartyStep s;
  s.obs = j.at("obs").get<std::vector<Observation>>();
  for (const auto& m : j.at("masks").get<std::vector<std::vector<int>>>()) {
    s.masks.emplace_back(m.begin(), m.end());
  }
  s.actions = j.at("actions").get<std::vector<int>>();
  return s;
}

}  // namespace

void write_trajectory(std::ostream& out, const EpisodeTrajectory& traj) {
  for (std::size_t t = 0; t < traj.records.size(); ++t) {
    const auto& r = traj.records[t];
    ordered_json j;
    j["t"] = t;
    j["victims"] = party_json(r.victims);
    j["adversaries"] = party_json(r.adversaries);
    j["signals"] = r.signals;
    j["native_reward"] = r.native_reward;
    j["reward_estimate"] = r.reward_estimate;
    j["terminal"] = r.terminal;
    j["state"] = r.state;
    out << j.dump() << '\n';
  }
  ordered_json summary;
  summary["outcome"] = {{"terminal", traj.final_outcome.terminal},
                        {"victim_success", traj.final_outcome.victim_success},
                        {"victim_failed", traj.final_outcome.victim_failed},
                        {"signals", traj.final_outcome.failure_signals}};
  summary["seed"] = traj.seed;
  summary["length"] = traj.records.size();
  out << summary.dump() << '\n';
}

EpisodeTrajectory read_trajectory(std::istream& in) {
  EpisodeTrajectory traj;
  std::string line;
  bool summary_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (summary_seen) throw StructuralError("trajectory: data after summary line");
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("outcome")) {
      const auto& o = j.at("outcome");
      traj.final_outcome.terminal = o.at("terminal").get<bool>();
      traj.final_outcome.victim_success = o.at("victim_success").get<bool>();
      traj.final_outcome.victim_failed = o.at("victim_failed").get<bool>();
      traj.final_outcome.failure_signals = o.at("signals").get<FailureSignalVector>();
      traj.seed = j.at("seed").get<std::uint64_t>();
      if (j.at("length").get<std::size_t>() != traj.records.size()) {
        throw StructuralError("trajectory: summary length does not match record count");
      }
      summary_seen = true;
      continue;
    }
    StepRecord r;
    r.victims = party_from_json(j.at("victims"));
    r.adversaries = party_from_json(j.at("adversaries"));
    r.signals = j.at("signals").get<FailureSignalVector>();
    r.native_reward = j.at("native_reward").get<double>();
    r.reward_estimate = j.at("reward_estimate").get<double>();
    r.terminal = j.at("terminal").get<bool>();
    r.state = j.at("state").get<std::vector<double>>();
    traj.records.push_back(std::move(r));
  }
  if (!summary_seen) throw StructuralError("trajectory: missing summary line");
  return traj;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  std::uint64_t z = master ^ (counter * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int sample_available(const ActionMask& mask, Rng& rng) {
  int count = 0;
  for (bool b : mask) count += b ? 1 : 0;
  if (count == 0) throw ContractViolation("sample_available: empty action mask");
  std::uniform_int_distribution<int> dist(0, count - 1);
  int pick = dist(rng);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (mask[a] && pick-- == 0) return static_cast<int>(a);
  }
  return 0;
}

}  // namespace nalab
