#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "da3/env/world.hpp"

namespace da3::env {

// One line-delimited JSON record per environment step.
struct TraceRecord {
  std::size_t t = 0;
  std::vector<Coord> positions;  // after the step
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<StepEvents> events;

  bool operator==(const TraceRecord& other) const;
};

TraceRecord make_trace_record(const WorldState& after, std::span<const Action> actions, const StepOutcome& outcome);
std::string to_json_line(const TraceRecord& record);
TraceRecord parse_trace_line(const std::string& line);

std::vector<TraceRecord> read_trace(std::istream& in);

}  // namespace da3::env
