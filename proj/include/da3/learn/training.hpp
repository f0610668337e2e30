#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "da3/env/observation.hpp"
#include "da3/learn/learner.hpp"
#include "da3/net/network.hpp"
#include "da3/noise/noise.hpp"

namespace da3::learn {

// Everything a training run depends on. net.channels and net.window are
// derived from the map, profile and window by resolve().
struct RunConfig {
  std::string map = "three-rooms";
  std::optional<std::vector<std::size_t>> wanderers;  // spawn indices; unset keeps the map's own designation
  env::EnvConfig env;
  env::Profile profile = env::Profile::Exp1;
  noise::Regime noise = noise::Regime::Noiseless;
  int window = 7;
  net::NetConfig net;
  LearnerConfig learner;
  std::size_t epochs = 5000;
  std::uint64_t seed = 0;
  std::vector<std::size_t> update_order;  // learner update order within a step; empty means ascending id
  std::size_t checkpoint_every = 0;       // epochs between intermediate checkpoints; 0 writes only the final one
  std::string output_dir = "runs/default";
};

nlohmann::json to_json(const RunConfig& cfg);
// Overlays the keys present in `doc` onto `base`. Unknown keys throw.
RunConfig merge_json(RunConfig base, const nlohmann::json& doc);

// Fills derived fields and checks cross-field consistency; throws
// std::invalid_argument with an explanation.
void resolve(RunConfig& cfg);

std::shared_ptr<const env::GridMap> build_map(const RunConfig& cfg);
std::vector<std::size_t> learner_ids(const env::GridMap& map);

// Independent stream seeds derived from the run seed.
enum class Stream : std::uint64_t { Environment = 1, Agent = 2, Noise = 3, Wanderer = 4, Evaluation = 5 };
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index);

// Encoded and noise-corrupted local observation of one agent.
env::Observation observe(const env::WorldState& state, std::size_t agent, const RunConfig& cfg,
                         const noise::NoiseSpec& spec, Rng& rng);

struct EpisodeMetrics {
  double reward = 0.0;
  std::size_t objects = 0;
  std::size_t agent_collisions = 0;
  std::size_t wall_collisions = 0;

  void add(const EpisodeMetrics& other);
};

std::string metrics_header();
// "epoch,id,reward,objects,agent_collisions,wall_collisions"; id is an
// agent index or "total".
std::string metrics_row(std::size_t epoch, const std::string& id, const EpisodeMetrics& m);

struct RunResult {
  std::filesystem::path directory;
  // Per epoch, one entry per agent (wanderers included).
  std::vector<std::vector<EpisodeMetrics>> episodes;
  std::vector<std::uint64_t> checksums;  // final online parameter checksum per learner, in learner order
};

using EpochCallback = std::function<void(std::size_t epoch, const std::vector<EpisodeMetrics>&)>;

// Writes <dir>/metadata.json, <dir>/metrics.csv and
// <dir>/checkpoints/agent<i>.{json,bin}. The metrics file has one row per
// agent per epoch, plus a "total" row over learners when there is more
// than one learner.
RunResult run_training(RunConfig cfg, const EpochCallback& on_epoch = {});

std::filesystem::path checkpoint_stem(const std::filesystem::path& run_dir, std::size_t agent);
// Reads the resolved config back from a run's metadata document.
RunConfig load_run_config(const std::filesystem::path& metadata_path);

}  // namespace da3::learn
