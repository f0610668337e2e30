#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "da3/env/grid_map.hpp"

namespace da3::env {

enum class Action : std::uint8_t { Up = 0, Down = 1, Right = 2, Left = 3 };
inline constexpr std::size_t kActionCount = 4;
inline constexpr std::array<Action, kActionCount> kAllActions{Action::Up, Action::Down, Action::Right, Action::Left};

Coord displaced(Coord c, Action a);
std::string_view action_name(Action a);

struct EnvConfig {
  std::size_t object_count = 25;
  double reward_collect = 1.0;
  double reward_collision = -1.0;
  std::size_t horizon = 200;
};

struct StepEvents {
  bool collected = false;
  bool agent_collision = false;
  bool wall_collision = false;
};

struct StepOutcome {
  std::vector<double> rewards;
  std::vector<StepEvents> events;
  std::vector<std::size_t> order;  // processing permutation used this step
  bool done = false;
};

// Authoritative simulation state. Objects are kept as an occupancy grid over
// map cells; step() mutates the state in place.
struct WorldState {
  std::shared_ptr<const GridMap> map;
  EnvConfig config;
  std::vector<Coord> agents;
  std::vector<AgentKind> kinds;
  std::vector<std::uint8_t> object_grid;
  std::size_t object_count = 0;
  std::size_t t = 0;
  std::mt19937_64 rng;

  std::size_t agent_count() const { return agents.size(); }
  bool has_object(Coord c) const { return object_grid[map->index(c)] != 0; }
  // Agent index at c, or -1.
  int agent_at(Coord c) const;
  std::vector<Coord> objects() const;  // row-major order
};

// Places agents on a random permutation of spawn points (within each agent
// kind) and scatters config.object_count objects uniformly over object-area
// cells not under an agent.
WorldState reset(std::shared_ptr<const GridMap> map, const EnvConfig& config, std::uint64_t seed);

// Simultaneous move resolved sequentially in a fresh uniform permutation.
StepOutcome step(WorldState& state, std::span<const Action> actions);

// Uniform random move for a wandering agent.
Action wanderer_policy(const WorldState& state, std::size_t agent, std::mt19937_64& rng);

double discounted_return(std::span<const double> rewards, double gamma);

}  // namespace da3::env
