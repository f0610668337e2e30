#include "da3/env/trace.hpp"

#include <istream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace da3::env {

bool TraceRecord::operator==(const TraceRecord& o) const {
  if (t != o.t || positions != o.positions || actions != o.actions || rewards != o.rewards) return false;
  if (events.size() != o.events.size()) return false;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& a = events[i];
    const auto& b = o.events[i];
    if (a.collected != b.collected || a.agent_collision != b.agent_collision || a.wall_collision != b.wall_collision)
      return false;
  }
  return true;
}

TraceRecord make_trace_record(const WorldState& after, std::span<const Action> actions, const StepOutcome& outcome) {
  return {after.t, after.agents, std::vector<Action>(actions.begin(), actions.end()), outcome.rewards, outcome.events};
}

std::string to_json_line(const TraceRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  auto& pos = j["positions"] = nlohmann::json::array();
  for (const auto& c : r.positions) pos.push_back({c.x, c.y});
  auto& acts = j["actions"] = nlohmann::json::array();
  for (auto a : r.actions) acts.push_back(std::string(action_name(a)));
  j["rewards"] = r.rewards;
  auto& ev = j["events"] = nlohmann::json::array();
  for (const auto& e : r.events) {
    std::string s = e.collected ? "collected" : e.agent_collision ? "agent_collision" : e.wall_collision ? "wall_collision" : "none";
    ev.push_back(s);
  }
  return j.dump();
}

TraceRecord parse_trace_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TraceRecord r;
  r.t = j.at("t").get<std::size_t>();
  for (const auto& p : j.at("positions")) r.positions.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  for (const auto& a : j.at("actions")) {
    const auto name = a.get<std::string>();
    bool found = false;
    for (auto act : kAllActions)
      if (action_name(act) == name) {
        r.actions.push_back(act);
        found = true;
      }
    if (!found) throw std::invalid_argument("trace: unknown action " + name);
  }
  r.rewards = j.at("rewards").get<std::vector<double>>();
  for (const auto& e : j.at("events")) {
    const auto s = e.get<std::string>();
    StepEvents ev;
    ev.collected = s == "collected";
    ev.agent_collision = s == "agent_collision";
    ev.wall_collision = s == "wall_collision";
    r.events.push_back(ev);
  }
  return r;
}

std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_trace_line(line));
  return out;
}

}  // namespace da3::env
