#include <stdexcept>
#include <string>

#include "da3/env/grid_map.hpp"

namespace da3::env {

namespace {

// Three rooms joined by doorways; objects in the shaded block of each room.
constexpr std::string_view kThreeRooms = R"(#########################
#.......................#
#.0...................1.#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#...ooooooooooooooooo...#
#.2...................3.#
#.......................#
######.###########.######
#...........#...........#
#...........#...........#
#..ooooooo..#..ooooooo..#
#..ooooooo..#..ooooooo..#
#..ooooooo..#..ooooooo..#
#..ooooooo.....ooooooo..#
#..ooooooo..#..ooooooo..#
#..ooooooo..#..ooooooo..#
#..ooooooo..#..ooooooo..#
#.4.........#.........5.#
#...........#...........#
#########################
)";

// Open room; spawns 4 and 5 belong to the wandering agents.
constexpr std::string_view kSimple = R"(####################
#........4.........#
#.0..............1.#
#..................#
#..................#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#....oooooooooo....#
#..................#
#..................#
#.2..............3.#
#.........5........#
####################
W 4 5
)";

constexpr std::string_view kSingleRoom = R"(############
#0.........#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.oooooooo.#
#.........1#
############
)";

constexpr std::string_view kTiny = R"(#####
#0.o#
#.oo#
#...#
#####
)";

}  // namespace

std::string_view builtin_map_text(std::string_view name) {
  if (name == "three-rooms") return kThreeRooms;
  if (name == "simple") return kSimple;
  if (name == "single-room") return kSingleRoom;
  if (name == "tiny") return kTiny;
  throw std::invalid_argument("unknown built-in map: " + std::string(name));
}

std::vector<std::string> builtin_map_names() { return {"three-rooms", "simple", "single-room", "tiny"}; }

GridMap builtin_map(std::string_view name) { return load_map(builtin_map_text(name)); }

}  // namespace da3::env
