#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "da3/env/world.hpp"

namespace da3::env {

// R x R window around `center`; visible[(dy + R/2) * R + (dx + R/2)].
struct VisibilityWindow {
  int size = 0;
  std::vector<std::uint8_t> visible;

  bool at(int row, int col) const { return visible[static_cast<std::size_t>(row * size + col)] != 0; }
};

// Cells on the Bresenham line from a to b, both endpoints included.
std::vector<Coord> bresenham_line(Coord a, Coord b);

// A window cell is visible iff it is on the map and no Wall lies strictly
// between the centre and the cell on the Bresenham line joining them.
VisibilityWindow visible_set(const GridMap& map, Coord center, int window);

enum class Profile : std::uint8_t { Exp1, Exp2 };
enum class ChannelKind : std::uint8_t { Presence, Blocked };

Profile parse_profile(std::string_view name);
std::string_view profile_name(Profile p);
std::size_t channel_count(Profile p, std::size_t agent_count);
ChannelKind channel_kind(Profile p, std::size_t agent_count, std::size_t channel);

// N_C x R x R integer observation. Presence channels hold {0, 1}; the
// blocked channel holds {0, -1}.
struct Observation {
  std::size_t channels = 0;
  int size = 0;
  Profile profile = Profile::Exp1;
  std::vector<std::int8_t> data;

  std::int8_t at(std::size_t c, int row, int col) const {
    return data[(c * static_cast<std::size_t>(size) + static_cast<std::size_t>(row)) * static_cast<std::size_t>(size) +
                static_cast<std::size_t>(col)];
  }
  std::int8_t& at(std::size_t c, int row, int col) {
    return data[(c * static_cast<std::size_t>(size) + static_cast<std::size_t>(row)) * static_cast<std::size_t>(size) +
                static_cast<std::size_t>(col)];
  }
  bool operator==(const Observation&) const = default;
};

// Exp1: [agents incl. self, objects, walls+invisible].
// Exp2: [one channel per agent id ..., objects, walls+invisible].
Observation encode_observation(const WorldState& state, std::size_t agent, Profile profile, int window);

}  // namespace da3::env
