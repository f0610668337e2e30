#include "da3/env/observation.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace da3::env {

std::vector<Coord> bresenham_line(Coord a, Coord b) {
  std::vector<Coord> cells;
  const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
  const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  Coord c = a;
  for (;;) {
    cells.push_back(c);
    if (c == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      c.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      c.y += sy;
    }
  }
  return cells;
}

VisibilityWindow visible_set(const GridMap& map, Coord center, int window) {
  if (window <= 0 || window % 2 == 0) throw std::invalid_argument("visible_set: window size must be odd");
  const int half = window / 2;
  VisibilityWindow out{window, std::vector<std::uint8_t>(static_cast<std::size_t>(window * window), 0)};
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const Coord target{center.x + dx, center.y + dy};
      if (!map.in_bounds(target)) continue;
      const auto line = bresenham_line(center, target);
      bool clear = true;
      for (std::size_t k = 1; k + 1 < line.size(); ++k) {
        if (map.cell(line[k]) == Cell::Wall) {
          clear = false;
          break;
        }
      }
      out.visible[static_cast<std::size_t>((dy + half) * window + (dx + half))] = clear ? 1 : 0;
    }
  return out;
}

Profile parse_profile(std::string_view name) {
  if (name == "exp1") return Profile::Exp1;
  if (name == "exp2") return Profile::Exp2;
  throw std::invalid_argument("unknown observation profile: " + std::string(name));
}

std::string_view profile_name(Profile p) { return p == Profile::Exp1 ? "exp1" : "exp2"; }

std::size_t channel_count(Profile p, std::size_t agent_count) {
  switch (p) {
    case Profile::Exp1: return 3;
    case Profile::Exp2: return agent_count + 2;
  }
  throw std::invalid_argument("unknown observation profile");
}

ChannelKind channel_kind(Profile p, std::size_t agent_count, std::size_t channel) {
  const std::size_t n = channel_count(p, agent_count);
  if (channel >= n) throw std::invalid_argument("channel index out of range");
  return channel + 1 == n ? ChannelKind::Blocked : ChannelKind::Presence;
}

Observation encode_observation(const WorldState& state, std::size_t agent, Profile profile, int window) {
  if (agent >= state.agent_count()) throw std::invalid_argument("encode_observation: agent index out of range");
  const auto& map = *state.map;
  const std::size_t n = state.agent_count();
  Observation obs;
  obs.profile = profile;
  obs.channels = channel_count(profile, n);
  obs.size = window;
  obs.data.assign(obs.channels * static_cast<std::size_t>(window * window), 0);
  const std::size_t object_ch = obs.channels - 2;
  const std::size_t blocked_ch = obs.channels - 1;
  const Coord center = state.agents[agent];
  const auto vis = visible_set(map, center, window);
  const int half = window / 2;
  for (int row = 0; row < window; ++row)
    for (int col = 0; col < window; ++col) {
      const Coord c{center.x + col - half, center.y + row - half};
      if (!vis.at(row, col) || map.cell(c) == Cell::Wall) {
        obs.at(blocked_ch, row, col) = -1;
        continue;
      }
      if (state.has_object(c)) obs.at(object_ch, row, col) = 1;
      const int who = state.agent_at(c);
      if (who >= 0) obs.at(profile == Profile::Exp1 ? 0 : static_cast<std::size_t>(who), row, col) = 1;
    }
  return obs;
}

}  // namespace da3::env
