#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "da3/learn/training.hpp"
#include "da3/net/network.hpp"

namespace da3::harness {

// Bad flags or an illegal combination of settings.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flags (without the program and subcommand names) layered over an optional
// --config document layered over defaults. A relative output directory is
// placed under `output_root` when one is given.
learn::RunConfig resolve_config(const std::vector<std::string>& args, const std::filesystem::path& output_root = {});

// Value of DA3_OUTPUT_ROOT, or empty.
std::filesystem::path output_root_from_env();

std::filesystem::path run_experiment(const learn::RunConfig& cfg, const learn::EpochCallback& on_epoch = {});

// The four Exp.1 noise regimes crossed with the four algorithms, each with
// the window its regime requires. Output directories are
// <base.output_dir>/<noise>/<algorithm>/seed<k>.
std::vector<learn::RunConfig> exp1_arms(const learn::RunConfig& base, const std::vector<std::uint64_t>& seeds);

// Simple map, Exp.2 observation profile, wanderers at spawns 4 and 5.
learn::RunConfig exp2_arm(learn::RunConfig base);

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};
Stat summarize(const std::vector<double>& xs);

struct ArmOutcome {
  noise::Regime noise = noise::Regime::Noiseless;
  net::Architecture arch = net::Architecture::Da3Dqn;
  std::uint64_t seed = 0;
  double objects = 0.0;  // mean evaluation objects collected per episode
};

struct ComparisonRow {
  noise::Regime noise = noise::Regime::Noiseless;
  net::Architecture arch = net::Architecture::Da3Dqn;
  Stat objects;  // across seeds
};

// Groups outcomes by regime and algorithm. Throws UsageError unless every
// regime present was run by all four algorithms under one common seed set.
std::vector<ComparisonRow> compare_arms(const std::vector<ArmOutcome>& outcomes);

// Per-agent count of collections at each map cell.
struct CollectionHeatmap {
  std::size_t agent = 0;
  int width = 0, height = 0;
  std::vector<std::uint64_t> counts;  // row-major, height x width

  std::uint64_t total() const;
  net::Heatmap as_grid() const;
};

struct AgentSummary {
  std::size_t agent = 0;
  bool learner = true;
  Stat objects, agent_collisions, wall_collisions, reward;
  std::uint64_t objects_total = 0;
};

struct EvaluationSummary {
  std::size_t episodes = 0;
  // Per episode sums over learners, as in the Table II columns.
  Stat objects, agent_collisions, wall_collisions;
  std::uint64_t objects_total = 0;
  std::vector<AgentSummary> agents;
  std::vector<CollectionHeatmap> heatmaps;  // one per agent, wanderers included
};

// Greedy (epsilon = 0) rollouts of the checkpoints in `run_dir`. Episode e
// resets the world from the evaluation stream of `seed`.
EvaluationSummary evaluate_policy(const std::filesystem::path& run_dir, std::size_t episodes, std::uint64_t seed = 0);

nlohmann::json to_json(const EvaluationSummary& s);
// Objects collected / Agents collision / Walls collision, as mean±std.
std::string summary_table(const EvaluationSummary& s);

// Scenario document:
//   {"agents": [[x, y], ...], "objects": [[x, y], ...]}       a full world state
//   {"episode_seed": s, "step": t}                           greedy replay to step t
// optional: "probe": [agent ids] (default: every learner), "noise_seed",
// "algorithm" (must match the checkpoint).
struct ProbeResult {
  std::size_t agent = 0;
  env::Action action = env::Action::Up;
  std::vector<double> action_values;
  env::Observation observation;
  std::vector<net::Heatmap> heads;
  net::Heatmap mean;
};

std::vector<ProbeResult> probe_attention(const std::filesystem::path& run_dir, const nlohmann::json& scenario);

// Export document; reals rounded to six decimals.
nlohmann::json to_json(const ProbeResult& p);

enum class Palette : std::uint8_t { Gray, Inverted };
Palette parse_palette(const std::string& name);

// Binary PGM (P5), min-max normalized to 0..255, `scale` pixels per cell.
std::string render_heatmap(const net::Heatmap& grid, Palette palette = Palette::Gray, int scale = 1);

// "rows cols" then one row per line, values printed with %.17g.
std::string heatmap_text(const net::Heatmap& grid);
net::Heatmap parse_heatmap_text(const std::string& text);

}  // namespace da3::harness
