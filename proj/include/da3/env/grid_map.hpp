#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace da3::env {

enum class Cell : std::uint8_t { Wall, Empty, ObjectArea };
enum class AgentKind : std::uint8_t { Learner, Wanderer };

struct Coord {
  int x = 0;
  int y = 0;
  auto operator<=>(const Coord&) const = default;
};

struct SpawnPoint {
  Coord pos;
  AgentKind kind = AgentKind::Learner;
};

// Map document format:
//   '#' wall, '.' empty, 'o' object area, digit d spawn point of agent d
//   (spawn cells are empty). An optional trailing line "W i j ..." marks
//   the listed spawn indices as wanderers. Blank lines are ignored.
class GridMap {
 public:
  GridMap(int width, int height, std::vector<Cell> cells, std::vector<SpawnPoint> spawns);

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(Coord c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  Cell cell(Coord c) const { return cells_[index(c)]; }
  bool is_wall(Coord c) const { return !in_bounds(c) || cell(c) == Cell::Wall; }
  std::size_t index(Coord c) const { return static_cast<std::size_t>(c.y) * width_ + static_cast<std::size_t>(c.x); }
  Coord coord(std::size_t index) const {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)), static_cast<int>(index / static_cast<std::size_t>(width_))};
  }

  const std::vector<SpawnPoint>& spawns() const { return spawns_; }
  std::size_t agent_count() const { return spawns_.size(); }
  // Object-area cells in row-major order.
  const std::vector<Coord>& object_cells() const { return object_cells_; }

  void set_wanderers(const std::vector<std::size_t>& indices);
  std::string to_text() const;

 private:
  int width_;
  int height_;
  std::vector<Cell> cells_;
  std::vector<SpawnPoint> spawns_;
  std::vector<Coord> object_cells_;
};

class MapParseError : public std::runtime_error {
 public:
  MapParseError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

GridMap load_map(std::string_view text);
GridMap load_map_file(const std::string& path);

// "three-rooms" (25x25), "simple" (20x20), "single-room" (12x12), "tiny" (5x5).
GridMap builtin_map(std::string_view name);
std::string_view builtin_map_text(std::string_view name);
std::vector<std::string> builtin_map_names();

// Built-in name or path to a map document.
GridMap resolve_map(const std::string& name_or_path);

}  // namespace da3::env
