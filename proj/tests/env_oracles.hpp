#pragma once

// Brute-force references for the environment, written against the map
// alone and sharing no code with the library's ray caster.

#include <cstdlib>
#include <string_view>
#include <vector>

#include "da3/env/grid_map.hpp"

namespace da3::testing {

// Ray from the origin to (dx, dy) marched one cell per step along the major
// axis; the minor coordinate is the exact rational k*|minor|/|major| rounded
// half away from the origin, computed in integers.
inline bool oracle_ray_clear(const env::GridMap& map, env::Coord origin, int dx, int dy) {
  const int ax = std::abs(dx), ay = std::abs(dy);
  const int sx = dx >= 0 ? 1 : -1, sy = dy >= 0 ? 1 : -1;
  const int major = ax >= ay ? ax : ay;
  const int minor = ax >= ay ? ay : ax;
  for (int k = 1; k < major; ++k) {
    const int m = (2 * k * minor + major) / (2 * major);
    const int ox = ax >= ay ? k : m;
    const int oy = ax >= ay ? m : k;
    const env::Coord c{origin.x + sx * ox, origin.y + sy * oy};
    if (map.cell(c) == env::Cell::Wall) return false;
  }
  return true;
}

// Row-major R x R visibility flags around `origin`.
inline std::vector<std::uint8_t> oracle_visible(const env::GridMap& map, env::Coord origin, int window) {
  const int half = window / 2;
  std::vector<std::uint8_t> out;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const env::Coord c{origin.x + dx, origin.y + dy};
      const bool on_map = c.x >= 0 && c.y >= 0 && c.x < map.width() && c.y < map.height();
      out.push_back(on_map && oracle_ray_clear(map, origin, dx, dy) ? 1 : 0);
    }
  return out;
}

// 9x9 visibility fixtures.
inline constexpr std::string_view kFixtureOpen = R"(#########
#.......#
#.......#
#.......#
#...0...#
#.......#
#.......#
#.......#
#########
)";

inline constexpr std::string_view kFixtureWallRight = R"(#########
#.......#
#.......#
#.......#
#...0#..#
#.......#
#.......#
#.......#
#########
)";

inline constexpr std::string_view kFixturePillars = R"(#########
#.......#
#.#...#.#
#...#...#
#.#.0.#.#
#..#....#
#.....#.#
#.#.....#
#########
)";

inline constexpr std::string_view kFixtureCorridor = R"(#########
#...#...#
#...#...#
#.......#
###.0.###
#.......#
#...#...#
#...#...#
#########
)";

inline const std::vector<std::string_view>& visibility_fixtures() {
  static const std::vector<std::string_view> all{kFixtureOpen, kFixtureWallRight, kFixturePillars, kFixtureCorridor};
  return all;
}

}  // namespace da3::testing
