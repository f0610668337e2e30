#include "da3/env/grid_map.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace da3::env {

MapParseError::MapParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("map line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

GridMap::GridMap(int width, int height, std::vector<Cell> cells, std::vector<SpawnPoint> spawns)
    : width_(width), height_(height), cells_(std::move(cells)), spawns_(std::move(spawns)) {
  if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("map dimensions must be positive");
  if (cells_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
    throw std::invalid_argument("map cell count does not match dimensions");
  }
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const bool border = x == 0 || y == 0 || x == width_ - 1 || y == height_ - 1;
      if (border && cell({x, y}) != Cell::Wall) {
        throw std::invalid_argument("border cell (" + std::to_string(x) + "," + std::to_string(y) + ") is not a wall");
      }
      if (cell({x, y}) == Cell::ObjectArea) object_cells_.push_back({x, y});
    }
  for (std::size_t i = 0; i < spawns_.size(); ++i) {
    if (is_wall(spawns_[i].pos)) throw std::invalid_argument("spawn " + std::to_string(i) + " lies on a wall");
    for (std::size_t j = 0; j < i; ++j)
      if (spawns_[j].pos == spawns_[i].pos) throw std::invalid_argument("spawn points must be distinct");
  }
}

void GridMap::set_wanderers(const std::vector<std::size_t>& indices) {
  for (auto& s : spawns_) s.kind = AgentKind::Learner;
  for (auto i : indices) {
    if (i >= spawns_.size()) throw std::invalid_argument("wanderer index " + std::to_string(i) + " has no spawn point");
    spawns_[i].kind = AgentKind::Wanderer;
  }
}

std::string GridMap::to_text() const {
  std::string out;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      char ch = '.';
      switch (cell({x, y})) {
        case Cell::Wall: ch = '#'; break;
        case Cell::ObjectArea: ch = 'o'; break;
        case Cell::Empty: ch = '.'; break;
      }
      for (std::size_t i = 0; i < spawns_.size(); ++i)
        if (spawns_[i].pos == Coord{x, y}) ch = static_cast<char>('0' + i);
      out += ch;
    }
    out += '\n';
  }
  std::string w;
  for (std::size_t i = 0; i < spawns_.size(); ++i)
    if (spawns_[i].kind == AgentKind::Wanderer) w += " " + std::to_string(i);
  if (!w.empty()) out += "W" + w + "\n";
  return out;
}

GridMap load_map(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::vector<std::size_t> wanderers;
  std::size_t wanderer_line = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == 'W') {
      if (wanderer_line) throw MapParseError(lineno, 1, "more than one wanderer line");
      wanderer_line = lineno;
      std::istringstream ws(line.substr(1));
      std::string tok;
      while (ws >> tok) {
        if (!std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
          throw MapParseError(lineno, line.find(tok) + 1, "bad wanderer index '" + tok + "'");
        }
        wanderers.push_back(std::stoul(tok));
      }
      continue;
    }
    if (wanderer_line) throw MapParseError(lineno, 1, "grid rows must precede the wanderer line");
    rows.emplace_back(lineno, line);
  }
  if (rows.empty()) throw MapParseError(1, 1, "empty map");
  const std::size_t width = rows.front().second.size();
  const std::size_t height = rows.size();
  std::vector<Cell> cells;
  cells.reserve(width * height);
  std::map<std::size_t, std::pair<Coord, std::size_t>> spawn_by_index;  // index -> (pos, line)
  for (std::size_t y = 0; y < height; ++y) {
    const auto& [ln, row] = rows[y];
    if (row.size() != width) {
      throw MapParseError(ln, std::min(row.size(), width) + 1,
                          "ragged row: expected width " + std::to_string(width) + ", got " + std::to_string(row.size()));
    }
    for (std::size_t x = 0; x < width; ++x) {
      const char ch = row[x];
      const bool border = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
      Cell c;
      if (ch == '#') {
        c = Cell::Wall;
      } else if (ch == '.') {
        c = Cell::Empty;
      } else if (ch == 'o') {
        c = Cell::ObjectArea;
      } else if (ch >= '0' && ch <= '9') {
        c = Cell::Empty;
        const auto idx = static_cast<std::size_t>(ch - '0');
        if (spawn_by_index.count(idx)) throw MapParseError(ln, x + 1, "duplicate spawn index " + std::to_string(idx));
        spawn_by_index[idx] = {Coord{static_cast<int>(x), static_cast<int>(y)}, ln};
      } else {
        throw MapParseError(ln, x + 1, std::string("unknown glyph '") + ch + "'");
      }
      if (border && c != Cell::Wall) throw MapParseError(ln, x + 1, "border cell is not a wall");
      cells.push_back(c);
    }
  }
  std::vector<SpawnPoint> spawns;
  for (const auto& [idx, entry] : spawn_by_index) {
    if (idx != spawns.size()) {
      throw MapParseError(entry.second, static_cast<std::size_t>(entry.first.x) + 1,
                          "spawn indices must be contiguous from 0; missing " + std::to_string(spawns.size()));
    }
    spawns.push_back({entry.first, AgentKind::Learner});
  }
  for (auto w : wanderers) {
    if (w >= spawns.size()) throw MapParseError(wanderer_line, 1, "wanderer index " + std::to_string(w) + " has no spawn point");
    spawns[w].kind = AgentKind::Wanderer;
  }
  return GridMap(static_cast<int>(width), static_cast<int>(height), std::move(cells), std::move(spawns));
}

GridMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_map(ss.str());
}

GridMap resolve_map(const std::string& name_or_path) {
  const auto names = builtin_map_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_map(name_or_path);
  return load_map_file(name_or_path);
}

}  // namespace da3::env
