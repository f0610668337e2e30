#include "da3/env/world.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace da3::env {

Coord displaced(Coord c, Action a) {
  switch (a) {
    case Action::Up: return {c.x, c.y - 1};
    case Action::Down: return {c.x, c.y + 1};
    case Action::Right: return {c.x + 1, c.y};
    case Action::Left: return {c.x - 1, c.y};
  }
  throw std::invalid_argument("bad action");
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Right: return "right";
    case Action::Left: return "left";
  }
  return "?";
}

int WorldState::agent_at(Coord c) const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i] == c) return static_cast<int>(i);
  return -1;
}

std::vector<Coord> WorldState::objects() const {
  std::vector<Coord> out;
  out.reserve(object_count);
  for (std::size_t i = 0; i < object_grid.size(); ++i)
    if (object_grid[i]) out.push_back(map->coord(i));
  return out;
}

namespace {

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void place_object(WorldState& s) {
  std::vector<Coord> free;
  for (const auto& c : s.map->object_cells())
    if (!s.has_object(c) && s.agent_at(c) < 0) free.push_back(c);
  if (free.empty()) throw std::runtime_error("no free object-area cell for respawn");
  const auto c = free[uniform_index(free.size(), s.rng)];
  s.object_grid[s.map->index(c)] = 1;
  ++s.object_count;
}

}  // namespace

WorldState reset(std::shared_ptr<const GridMap> map, const EnvConfig& config, std::uint64_t seed) {
  if (!map) throw std::invalid_argument("reset: null map");
  if (map->agent_count() == 0) throw std::invalid_argument("reset: map has no spawn points");
  WorldState s;
  s.map = std::move(map);
  s.config = config;
  s.rng.seed(seed);
  const auto& spawns = s.map->spawns();
  const std::size_t n = spawns.size();
  s.agents.resize(n);
  s.kinds.resize(n);
  for (auto kind : {AgentKind::Learner, AgentKind::Wanderer}) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < n; ++i)
      if (spawns[i].kind == kind) ids.push_back(i);
    auto slots = ids;
    std::shuffle(slots.begin(), slots.end(), s.rng);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      s.agents[ids[k]] = spawns[slots[k]].pos;
      s.kinds[ids[k]] = kind;
    }
  }
  std::vector<Coord> candidates;
  for (const auto& c : s.map->object_cells())
    if (s.agent_at(c) < 0) candidates.push_back(c);
  if (config.object_count > candidates.size()) {
    throw std::invalid_argument("reset: " + std::to_string(config.object_count) + " objects requested but only " +
                                std::to_string(candidates.size()) + " free object-area cells");
  }
  s.object_grid.assign(static_cast<std::size_t>(s.map->width()) * static_cast<std::size_t>(s.map->height()), 0);
  // Partial Fisher-Yates: uniform sample without replacement.
  for (std::size_t k = 0; k < config.object_count; ++k) {
    const auto j = k + uniform_index(candidates.size() - k, s.rng);
    std::swap(candidates[k], candidates[j]);
    s.object_grid[s.map->index(candidates[k])] = 1;
  }
  s.object_count = config.object_count;
  s.t = 0;
  return s;
}

StepOutcome step(WorldState& s, std::span<const Action> actions) {
  const std::size_t n = s.agent_count();
  if (actions.size() != n) {
    throw std::invalid_argument("step: expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
  }
  StepOutcome out;
  out.rewards.assign(n, 0.0);
  out.events.assign(n, StepEvents{});
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::shuffle(out.order.begin(), out.order.end(), s.rng);
  for (auto i : out.order) {
    const Coord target = displaced(s.agents[i], actions[i]);
    auto& ev = out.events[i];
    if (s.map->is_wall(target)) {
      ev.wall_collision = true;
      out.rewards[i] = s.config.reward_collision;
      continue;
    }
    if (s.agent_at(target) >= 0) {
      ev.agent_collision = true;
      out.rewards[i] = s.config.reward_collision;
      continue;
    }
    s.agents[i] = target;
    if (s.kinds[i] == AgentKind::Learner && s.has_object(target)) {
      s.object_grid[s.map->index(target)] = 0;
      --s.object_count;
      ev.collected = true;
      out.rewards[i] = s.config.reward_collect;
      place_object(s);
    }
  }
  ++s.t;
  out.done = s.t >= s.config.horizon;
  return out;
}

Action wanderer_policy(const WorldState& state, std::size_t agent, std::mt19937_64& rng) {
  if (agent >= state.agent_count()) throw std::invalid_argument("wanderer_policy: agent index out of range");
  if (state.kinds[agent] != AgentKind::Wanderer) {
    throw std::invalid_argument("wanderer_policy: agent " + std::to_string(agent) + " is a learner");
  }
  return kAllActions[uniform_index(kActionCount, rng)];
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("discounted_return: gamma must be in [0, 1)");
  double total = 0.0, discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

}  // namespace da3::env
