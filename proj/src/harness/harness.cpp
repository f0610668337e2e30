#include "da3/harness/harness.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "da3/core/checkpoint.hpp"
#include "da3/learn/learner.hpp"

namespace da3::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

fs::path output_root_from_env() {
  const char* root = std::getenv("DA3_OUTPUT_ROOT");
  return root ? fs::path(root) : fs::path();
}

learn::RunConfig resolve_config(const std::vector<std::string>& args, const fs::path& output_root) {
  CLI::App app{"da3 run configuration"};
  std::optional<std::string> config_path, map, algo, noise_name, profile, out;
  std::optional<int> window;
  std::optional<std::vector<std::size_t>> wanderers;
  std::optional<std::size_t> objects, horizon, epochs, embed, heads, loops, patch, batch, update_every, target_sync,
      replay, checkpoint_every, quantiles;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, gamma;
  app.add_option("--config", config_path, "JSON config document");
  app.add_option("--env", map, "built-in map name or map file");
  app.add_option("--algo", algo, "da3-dqn, da3-iqn, dqn or iqn");
  app.add_option("--noise", noise_name, "noiseless, large-marginal, small-marginal or small-full");
  app.add_option("--R", window, "observation window side");
  app.add_option("--profile", profile, "exp1 or exp2");
  app.add_option("--wanderers", wanderers, "spawn indices of wandering agents")->delimiter(',');
  app.add_option("--objects", objects);
  app.add_option("--horizon", horizon);
  app.add_option("--epochs", epochs);
  app.add_option("--seed", seed);
  app.add_option("--out", out, "run directory");
  app.add_option("--embed", embed);
  app.add_option("--heads", heads);
  app.add_option("--loops", loops);
  app.add_option("--patch", patch);
  app.add_option("--batch", batch);
  app.add_option("--update-every", update_every);
  app.add_option("--target-sync", target_sync);
  app.add_option("--replay", replay);
  app.add_option("--quantiles", quantiles);
  app.add_option("--checkpoint-every", checkpoint_every);
  app.add_option("--lr", lr);
  app.add_option("--gamma", gamma);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  learn::RunConfig cfg;
  bool map_given = false;
  try {
    if (config_path) {
      const auto doc = read_json_file(*config_path);
      map_given = doc.is_object() && doc.contains("map");
      cfg = learn::merge_json(cfg, doc);
    }
    if (map) cfg.map = *map, map_given = true;
    if (algo) cfg.net.arch = net::parse_architecture(*algo);
    if (noise_name) cfg.noise = noise::parse_regime(*noise_name);
    if (profile) cfg.profile = env::parse_profile(*profile);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (window) cfg.window = *window;
  if (objects) cfg.env.object_count = *objects;
  if (horizon) cfg.env.horizon = *horizon;
  if (epochs) cfg.epochs = *epochs;
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
  if (embed) cfg.net.embed = *embed;
  if (heads) cfg.net.heads = *heads;
  if (loops) cfg.net.loops = *loops;
  if (patch) cfg.net.patch = *patch;
  if (batch) cfg.learner.batch_size = *batch;
  if (update_every) cfg.learner.update_every = *update_every;
  if (target_sync) cfg.learner.target_sync = *target_sync;
  if (replay) cfg.learner.replay_capacity = *replay;
  if (quantiles) cfg.learner.quantiles = cfg.learner.target_quantiles = *quantiles;
  if (checkpoint_every) cfg.checkpoint_every = *checkpoint_every;
  if (lr) cfg.learner.adam.learning_rate = *lr;
  if (gamma) cfg.learner.gamma = *gamma;
  if (wanderers) cfg.wanderers = *wanderers;

  if (cfg.profile == env::Profile::Exp2) {
    if (map_given && cfg.map != "simple") {
      throw UsageError("profile exp2 runs on the simple map, got --env " + cfg.map);
    }
    const std::vector<std::size_t> exp2_wanderers{4, 5};
    if (cfg.wanderers && *cfg.wanderers != exp2_wanderers) {
      throw UsageError("profile exp2 places the wanderers at spawns 4 and 5");
    }
    cfg.map = "simple";
    cfg.wanderers = exp2_wanderers;
  }
  if (!output_root.empty() && fs::path(cfg.output_dir).is_relative()) {
    cfg.output_dir = (output_root / cfg.output_dir).string();
  }
  try {
    learn::resolve(cfg);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

fs::path run_experiment(const learn::RunConfig& cfg, const learn::EpochCallback& on_epoch) {
  try {
    return learn::run_training(cfg, on_epoch).directory;
  } catch (const std::exception& e) {
    throw std::runtime_error("run " + cfg.output_dir + " (" + std::string(net::architecture_name(cfg.net.arch)) + ", " +
                             std::string(noise::regime_name(cfg.noise)) + ", seed " + std::to_string(cfg.seed) +
                             "): " + e.what());
  }
}

std::vector<learn::RunConfig> exp1_arms(const learn::RunConfig& base, const std::vector<std::uint64_t>& seeds) {
  using net::Architecture;
  using noise::Regime;
  std::vector<learn::RunConfig> arms;
  for (auto regime : {Regime::Noiseless, Regime::LargeMarginal, Regime::SmallMarginal, Regime::SmallFull})
    for (auto arch : {Architecture::Da3Iqn, Architecture::VanillaIqn, Architecture::Da3Dqn, Architecture::VanillaDqn})
      for (auto seed : seeds) {
        auto c = base;
        c.profile = env::Profile::Exp1;
        c.noise = regime;
        c.window = regime == Regime::LargeMarginal ? 9 : 7;
        c.net.arch = arch;
        c.seed = seed;
        c.output_dir = (fs::path(base.output_dir) / noise::regime_name(regime) / net::architecture_name(arch) /
                        ("seed" + std::to_string(seed)))
                           .string();
        arms.push_back(std::move(c));
      }
  return arms;
}

learn::RunConfig exp2_arm(learn::RunConfig base) {
  base.map = "simple";
  base.profile = env::Profile::Exp2;
  base.wanderers = std::vector<std::size_t>{4, 5};
  return base;
}

Stat summarize(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

std::vector<ComparisonRow> compare_arms(const std::vector<ArmOutcome>& outcomes) {
  using net::Architecture;
  std::map<std::pair<int, int>, std::map<std::uint64_t, double>> cells;
  std::set<int> regimes;
  for (const auto& o : outcomes) {
    auto& by_seed = cells[{static_cast<int>(o.noise), static_cast<int>(o.arch)}];
    if (!by_seed.emplace(o.seed, o.objects).second) {
      throw UsageError("duplicate outcome for " + std::string(net::architecture_name(o.arch)) + " under " +
                       std::string(noise::regime_name(o.noise)) + ", seed " + std::to_string(o.seed));
    }
    regimes.insert(static_cast<int>(o.noise));
  }
  const std::array<Architecture, 4> archs{Architecture::Da3Iqn, Architecture::VanillaIqn, Architecture::Da3Dqn,
                                          Architecture::VanillaDqn};
  std::vector<ComparisonRow> rows;
  for (int r : regimes) {
    const auto regime = static_cast<noise::Regime>(r);
    std::set<std::uint64_t> reference;
    bool first = true;
    for (auto a : archs) {
      const auto it = cells.find({r, static_cast<int>(a)});
      if (it == cells.end()) {
        throw UsageError("no runs of " + std::string(net::architecture_name(a)) + " under " +
                         std::string(noise::regime_name(regime)) + "; comparison needs all four algorithms");
      }
      std::set<std::uint64_t> seeds;
      for (const auto& [s, v] : it->second) seeds.insert(s);
      if (first) {
        reference = seeds;
        first = false;
      } else if (seeds != reference) {
        throw UsageError("seed sets differ between algorithms under " + std::string(noise::regime_name(regime)));
      }
      std::vector<double> xs;
      for (const auto& [s, v] : it->second) xs.push_back(v);
      rows.push_back({regime, a, summarize(xs)});
    }
  }
  return rows;
}

std::uint64_t CollectionHeatmap::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

net::Heatmap CollectionHeatmap::as_grid() const {
  net::Heatmap h;
  h.rows = static_cast<std::size_t>(height);
  h.cols = static_cast<std::size_t>(width);
  h.values.assign(counts.begin(), counts.end());
  return h;
}

namespace {

// Greedy policies loaded from a run's final checkpoints.
struct LoadedRun {
  learn::RunConfig cfg;
  std::shared_ptr<const env::GridMap> map;
  std::vector<std::size_t> learners;
  std::map<std::size_t, std::unique_ptr<net::QNetwork>> nets;
  noise::NoiseSpec spec;
};

LoadedRun load_run(const fs::path& run_dir) {
  const auto metadata = run_dir / "metadata.json";
  if (!fs::exists(metadata)) throw std::runtime_error("no run metadata at " + metadata.string());
  LoadedRun run;
  run.cfg = learn::load_run_config(metadata);
  run.map = learn::build_map(run.cfg);
  run.learners = learn::learner_ids(*run.map);
  run.spec = noise::build_spec(run.cfg.noise, run.cfg.window);
  const auto algo = std::string(net::architecture_name(run.cfg.net.arch));
  for (auto id : run.learners) {
    const auto stem = learn::checkpoint_stem(run_dir, id);
    for (const char* ext : {".json", ".bin"}) {
      auto file = stem;
      file += ext;
      if (!fs::exists(file)) throw std::runtime_error("missing checkpoint " + file.string());
    }
    Rng init(0);
    auto model = std::make_unique<net::QNetwork>(run.cfg.net, init);
    const auto meta = read_checkpoint_manifest(stem).value("meta", json::object());
    if (meta.value("algorithm", algo) != algo ||
        meta.value("channels", run.cfg.net.channels) != run.cfg.net.channels ||
        meta.value("window", run.cfg.net.window) != run.cfg.net.window) {
      throw std::runtime_error("checkpoint " + stem.string() + " (" + meta.dump() + ") does not match the run's " +
                               algo + " network");
    }
    load_checkpoint(stem, model->parameters());
    run.nets.emplace(id, std::move(model));
  }
  return run;
}

env::Action greedy(net::QNetwork& model, const env::Observation& obs, std::size_t quantiles, Rng& rng,
                   std::vector<double>* values = nullptr, net::AttentionRecord* record = nullptr) {
  const env::Observation* one[] = {&obs};
  std::vector<double> taus;
  if (model.distributional()) taus = learn::sample_taus(quantiles, rng);
  const auto q = learn::mean_action_values(model.evaluate(net::stack_observations(one), taus, record));
  if (values) *values = q;
  return learn::greedy_action(q);
}

// Drives every agent for one step: learners greedily, wanderers randomly.
struct Rollout {
  LoadedRun& run;
  std::vector<Rng> noise_rng, tau_rng;
  Rng wander_rng;

  Rollout(LoadedRun& r, std::uint64_t seed) : run(r), wander_rng(learn::derive_seed(seed, learn::Stream::Wanderer, 0)) {
    for (std::size_t i = 0; i < run.map->agent_count(); ++i) {
      noise_rng.emplace_back(learn::derive_seed(seed, learn::Stream::Noise, i));
      tau_rng.emplace_back(learn::derive_seed(seed, learn::Stream::Agent, i));
    }
  }

  env::Observation observe(const env::WorldState& state, std::size_t agent) {
    return learn::observe(state, agent, run.cfg, run.spec, noise_rng[agent]);
  }

  env::StepOutcome step(env::WorldState& state) {
    std::vector<env::Action> actions(state.agent_count());
    for (auto id : run.learners)
      actions[id] = greedy(*run.nets.at(id), observe(state, id), run.cfg.learner.quantiles, tau_rng[id]);
    for (std::size_t i = 0; i < state.agent_count(); ++i)
      if (state.kinds[i] == env::AgentKind::Wanderer) actions[i] = env::wanderer_policy(state, i, wander_rng);
    return env::step(state, actions);
  }
};

}  // namespace

EvaluationSummary evaluate_policy(const fs::path& run_dir, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw UsageError("evaluation needs at least one episode");
  auto run = load_run(run_dir);
  const std::size_t n = run.map->agent_count();
  Rollout rollout(run, seed);
  EvaluationSummary s;
  s.episodes = episodes;
  for (std::size_t i = 0; i < n; ++i) {
    CollectionHeatmap h;
    h.agent = i;
    h.width = run.map->width();
    h.height = run.map->height();
    h.counts.assign(static_cast<std::size_t>(h.width * h.height), 0);
    s.heatmaps.push_back(std::move(h));
  }
  std::vector<std::vector<learn::EpisodeMetrics>> per_agent(n);
  std::vector<double> objects, agent_coll, wall_coll;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto state = env::reset(run.map, run.cfg.env, learn::derive_seed(seed, learn::Stream::Evaluation, e));
    std::vector<learn::EpisodeMetrics> ep(n);
    for (std::size_t t = 0; t < run.cfg.env.horizon; ++t) {
      const auto outcome = rollout.step(state);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& ev = outcome.events[i];
        ep[i].reward += outcome.rewards[i];
        ep[i].objects += ev.collected;
        ep[i].agent_collisions += ev.agent_collision;
        ep[i].wall_collisions += ev.wall_collision;
        if (ev.collected) ++s.heatmaps[i].counts[run.map->index(state.agents[i])];
      }
    }
    learn::EpisodeMetrics total;
    for (auto id : run.learners) total.add(ep[id]);
    objects.push_back(static_cast<double>(total.objects));
    agent_coll.push_back(static_cast<double>(total.agent_collisions));
    wall_coll.push_back(static_cast<double>(total.wall_collisions));
    s.objects_total += total.objects;
    for (std::size_t i = 0; i < n; ++i) per_agent[i].push_back(ep[i]);
  }
  s.objects = summarize(objects);
  s.agent_collisions = summarize(agent_coll);
  s.wall_collisions = summarize(wall_coll);
  for (std::size_t i = 0; i < n; ++i) {
    AgentSummary a;
    a.agent = i;
    a.learner = run.map->spawns()[i].kind == env::AgentKind::Learner;
    std::vector<double> o, ac, wc, r;
    for (const auto& m : per_agent[i]) {
      o.push_back(static_cast<double>(m.objects));
      ac.push_back(static_cast<double>(m.agent_collisions));
      wc.push_back(static_cast<double>(m.wall_collisions));
      r.push_back(m.reward);
      a.objects_total += m.objects;
    }
    a.objects = summarize(o);
    a.agent_collisions = summarize(ac);
    a.wall_collisions = summarize(wc);
    a.reward = summarize(r);
    s.agents.push_back(a);
  }
  return s;
}

namespace {

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

double round6(double v) { return std::round(v * 1e6) / 1e6; }

json grid_json(const net::Heatmap& h, bool rounded) {
  json rows = json::array();
  for (std::size_t r = 0; r < h.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < h.cols; ++c) row.push_back(rounded ? round6(h.at(r, c)) : h.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

json to_json(const EvaluationSummary& s) {
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"agent", a.agent},
                      {"learner", a.learner},
                      {"objects", stat_json(a.objects)},
                      {"agent_collisions", stat_json(a.agent_collisions)},
                      {"wall_collisions", stat_json(a.wall_collisions)},
                      {"reward", stat_json(a.reward)},
                      {"objects_total", a.objects_total}});
  }
  json heatmaps = json::array();
  for (const auto& h : s.heatmaps) {
    heatmaps.push_back({{"agent", h.agent}, {"total", h.total()}, {"counts", grid_json(h.as_grid(), false)}});
  }
  return {{"episodes", s.episodes},
          {"objects", stat_json(s.objects)},
          {"agent_collisions", stat_json(s.agent_collisions)},
          {"wall_collisions", stat_json(s.wall_collisions)},
          {"objects_total", s.objects_total},
          {"agents", agents},
          {"heatmaps", heatmaps}};
}

std::string summary_table(const EvaluationSummary& s) {
  char buf[256];
  auto cell = [](const Stat& st) {
    char b[64];
    std::snprintf(b, sizeof b, "%.2f±%.2f", st.mean, st.stddev);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%-20s %-20s %-20s\n%-20s %-20s %-20s\n", "Objects collected", "Agents collision",
                "Walls collision", cell(s.objects).c_str(), cell(s.agent_collisions).c_str(),
                cell(s.wall_collisions).c_str());
  return buf;
}

std::vector<ProbeResult> probe_attention(const fs::path& run_dir, const json& scenario) {
  if (!scenario.is_object()) throw UsageError("probe scenario must be a JSON object");
  auto run = load_run(run_dir);
  const auto arch = run.cfg.net.arch;
  if (scenario.contains("algorithm") &&
      scenario["algorithm"].get<std::string>() != net::architecture_name(arch)) {
    throw UsageError("scenario expects " + scenario["algorithm"].get<std::string>() + " but the checkpoint holds " +
                     std::string(net::architecture_name(arch)));
  }
  if (!net::is_da3(arch)) {
    throw UsageError("checkpoint architecture " + std::string(net::architecture_name(arch)) +
                     " has no saliency attention to probe");
  }
  const auto noise_seed = scenario.value("noise_seed", std::uint64_t{0});
  Rollout rollout(run, noise_seed);
  const auto& map = *run.map;

  env::WorldState state;
  if (scenario.contains("agents")) {
    state = env::reset(run.map, run.cfg.env, 0);
    const auto agents = scenario["agents"].get<std::vector<std::array<int, 2>>>();
    if (agents.size() != map.agent_count()) {
      throw UsageError("scenario places " + std::to_string(agents.size()) + " agents; the map has " +
                       std::to_string(map.agent_count()));
    }
    std::set<env::Coord> taken;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const env::Coord c{agents[i][0], agents[i][1]};
      if (map.is_wall(c) || !taken.insert(c).second) throw UsageError("agent " + std::to_string(i) + " placed on an occupied or wall cell");
      state.agents[i] = c;
    }
    std::fill(state.object_grid.begin(), state.object_grid.end(), 0);
    const auto objects = scenario.value("objects", std::vector<std::array<int, 2>>{});
    for (const auto& o : objects) {
      const env::Coord c{o[0], o[1]};
      if (map.is_wall(c) || taken.count(c)) throw UsageError("object placed on an occupied or wall cell");
      state.object_grid[map.index(c)] = 1;
    }
    state.object_count = objects.size();
  } else if (scenario.contains("episode_seed")) {
    state = env::reset(run.map, run.cfg.env, scenario["episode_seed"].get<std::uint64_t>());
    const auto steps = scenario.value("step", std::size_t{0});
    if (steps > run.cfg.env.horizon) throw UsageError("scenario step lies beyond the episode horizon");
    for (std::size_t t = 0; t < steps; ++t) rollout.step(state);
  } else {
    throw UsageError("probe scenario needs either \"agents\" (and \"objects\") or \"episode_seed\"");
  }

  std::vector<std::size_t> probe = scenario.value("probe", run.learners);
  std::vector<ProbeResult> out;
  for (auto id : probe) {
    if (!run.nets.count(id)) throw UsageError("agent " + std::to_string(id) + " is not a learner");
    ProbeResult p;
    p.agent = id;
    p.observation = rollout.observe(state, id);
    net::AttentionRecord record;
    p.action = greedy(*run.nets.at(id), p.observation, run.cfg.learner.quantiles, rollout.tau_rng[id],
                      &p.action_values, &record);
    p.heads = net::extract_heatmap(record, net::HeatmapReduce::PerHead);
    p.mean = net::extract_heatmap(record, net::HeatmapReduce::Mean).front();
    out.push_back(std::move(p));
  }
  return out;
}

json to_json(const ProbeResult& p) {
  json channels = json::array();
  const auto size = static_cast<int>(p.observation.size);
  for (std::size_t c = 0; c < p.observation.channels; ++c) {
    json rows = json::array();
    for (int r = 0; r < size; ++r) {
      json row = json::array();
      for (int col = 0; col < size; ++col) row.push_back(static_cast<int>(p.observation.at(c, r, col)));
      rows.push_back(row);
    }
    channels.push_back(rows);
  }
  json heads = json::array();
  for (const auto& h : p.heads) heads.push_back(grid_json(h, true));
  json values = json::array();
  for (double v : p.action_values) values.push_back(round6(v));
  return {{"agent", p.agent},
          {"action", env::action_name(p.action)},
          {"action_values", values},
          {"observation", channels},
          {"heads", heads},
          {"mean", grid_json(p.mean, true)}};
}

Palette parse_palette(const std::string& name) {
  if (name == "gray") return Palette::Gray;
  if (name == "inverted") return Palette::Inverted;
  throw UsageError("unknown palette '" + name + "' (gray or inverted)");
}

namespace {

void check_grid(const net::Heatmap& grid) {
  if (grid.rows == 0 || grid.cols == 0) throw UsageError("cannot render an empty grid");
  if (grid.values.size() != grid.rows * grid.cols) throw UsageError("grid values do not match its shape");
  for (double v : grid.values)
    if (!std::isfinite(v) || v < 0.0) throw UsageError("grid values must be finite and non-negative");
}

}  // namespace

std::string render_heatmap(const net::Heatmap& grid, Palette palette, int scale) {
  check_grid(grid);
  if (scale < 1) throw UsageError("render scale must be at least 1");
  const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double span = *hi - *lo;
  const auto s = static_cast<std::size_t>(scale);
  std::string out = "P5\n" + std::to_string(grid.cols * s) + " " + std::to_string(grid.rows * s) + "\n255\n";
  for (std::size_t r = 0; r < grid.rows * s; ++r)
    for (std::size_t c = 0; c < grid.cols * s; ++c) {
      const double v = span > 0.0 ? (grid.at(r / s, c / s) - *lo) / span : 0.0;
      auto level = static_cast<int>(std::lround(255.0 * v));
      if (palette == Palette::Inverted) level = 255 - level;
      out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
    }
  return out;
}

std::string heatmap_text(const net::Heatmap& grid) {
  check_grid(grid);
  std::string out = std::to_string(grid.rows) + " " + std::to_string(grid.cols) + "\n";
  char buf[32];
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", grid.at(r, c));
      out += (c ? " " : "");
      out += buf;
    }
    out += "\n";
  }
  return out;
}

net::Heatmap parse_heatmap_text(const std::string& text) {
  std::istringstream in(text);
  net::Heatmap h;
  if (!(in >> h.rows >> h.cols)) throw UsageError("heatmap text must start with \"rows cols\"");
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) throw UsageError("bad heatmap value '" + token + "'");
    h.values.push_back(v);
  }
  check_grid(h);
  return h;
}

}  // namespace da3::harness
