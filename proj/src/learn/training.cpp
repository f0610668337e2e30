#include "da3/learn/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "da3/core/checkpoint.hpp"

namespace da3::learn {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

// Copies doc[key] into `out` when present and removes it from `rest`.
template <typename T>
void take(const json& doc, const char* key, T& out, std::set<std::string>& rest) {
  if (!doc.contains(key)) return;
  rest.erase(key);
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(std::string("config key '") + key + "': " + e.what());
  }
}

std::set<std::string> keys_of(const json& doc, const char* section) {
  if (!doc.is_object()) invalid(std::string("config section '") + section + "' must be an object");
  std::set<std::string> keys;
  for (const auto& item : doc.items()) keys.insert(item.key());
  return keys;
}

void reject_leftovers(const std::set<std::string>& rest, const char* section) {
  if (rest.empty()) return;
  std::string names;
  for (const auto& k : rest) names += (names.empty() ? "" : ", ") + k;
  invalid(std::string("unknown config key(s) in ") + section + ": " + names);
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& n = c.net;
  const auto& l = c.learner;
  return json{
      {"map", c.map},
      {"wanderers", c.wanderers ? json(*c.wanderers) : json(nullptr)},
      {"profile", env::profile_name(c.profile)},
      {"noise", noise::regime_name(c.noise)},
      {"window", c.window},
      {"algorithm", net::architecture_name(n.arch)},
      {"env",
       {{"objects", c.env.object_count},
        {"reward_collect", c.env.reward_collect},
        {"reward_collision", c.env.reward_collision},
        {"horizon", c.env.horizon}}},
      {"net",
       {{"embed", n.embed},
        {"heads", n.heads},
        {"ff", n.ff_width()},
        {"loops", n.loops},
        {"shared_loop", n.shared_loop},
        {"position_std", n.position_std},
        {"patch", n.patch},
        {"head_hidden", n.head_hidden},
        {"quantile_basis", n.quantile_basis},
        {"conv1", n.conv1},
        {"conv2", n.conv2}}},
      {"learner",
       {{"gamma", l.gamma},
        {"epsilon_start", l.epsilon_start},
        {"epsilon_end", l.epsilon_end},
        {"epsilon_fraction", l.epsilon_fraction},
        {"replay_capacity", l.replay_capacity},
        {"batch_size", l.batch_size},
        {"warmup", l.warmup_size()},
        {"update_every", l.update_every},
        {"target_sync", l.target_sync},
        {"learning_rate", l.adam.learning_rate},
        {"beta1", l.adam.beta1},
        {"beta2", l.adam.beta2},
        {"adam_epsilon", l.adam.epsilon},
        {"clip_norm", l.adam.clip_norm},
        {"quantiles", l.quantiles},
        {"target_quantiles", l.target_quantiles},
        {"kappa", l.kappa}}},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"update_order", c.update_order},
      {"checkpoint_every", c.checkpoint_every},
      {"output_dir", c.output_dir},
  };
}

RunConfig merge_json(RunConfig c, const json& doc) {
  auto rest = keys_of(doc, "top level");
  rest.erase("derived");  // written by run_training for reference only
  take(doc, "map", c.map, rest);
  if (doc.contains("wanderers")) {
    rest.erase("wanderers");
    if (doc["wanderers"].is_null()) {
      c.wanderers.reset();
    } else {
      std::vector<std::size_t> w;
      take(doc, "wanderers", w, rest);
      c.wanderers = w;
    }
  }
  std::string name;
  if (doc.contains("profile")) {
    take(doc, "profile", name, rest);
    c.profile = env::parse_profile(name);
  }
  if (doc.contains("noise")) {
    take(doc, "noise", name, rest);
    c.noise = noise::parse_regime(name);
  }
  if (doc.contains("algorithm")) {
    take(doc, "algorithm", name, rest);
    c.net.arch = net::parse_architecture(name);
  }
  take(doc, "window", c.window, rest);
  take(doc, "epochs", c.epochs, rest);
  take(doc, "seed", c.seed, rest);
  take(doc, "update_order", c.update_order, rest);
  take(doc, "checkpoint_every", c.checkpoint_every, rest);
  take(doc, "output_dir", c.output_dir, rest);
  if (doc.contains("env")) {
    rest.erase("env");
    const auto& e = doc["env"];
    auto er = keys_of(e, "env");
    take(e, "objects", c.env.object_count, er);
    take(e, "reward_collect", c.env.reward_collect, er);
    take(e, "reward_collision", c.env.reward_collision, er);
    take(e, "horizon", c.env.horizon, er);
    reject_leftovers(er, "env");
  }
  if (doc.contains("net")) {
    rest.erase("net");
    const auto& n = doc["net"];
    auto nr = keys_of(n, "net");
    take(n, "embed", c.net.embed, nr);
    take(n, "heads", c.net.heads, nr);
    take(n, "ff", c.net.ff, nr);
    take(n, "loops", c.net.loops, nr);
    take(n, "shared_loop", c.net.shared_loop, nr);
    take(n, "position_std", c.net.position_std, nr);
    take(n, "patch", c.net.patch, nr);
    take(n, "head_hidden", c.net.head_hidden, nr);
    take(n, "quantile_basis", c.net.quantile_basis, nr);
    take(n, "conv1", c.net.conv1, nr);
    take(n, "conv2", c.net.conv2, nr);
    reject_leftovers(nr, "net");
  }
  if (doc.contains("learner")) {
    rest.erase("learner");
    const auto& l = doc["learner"];
    auto lr = keys_of(l, "learner");
    auto& L = c.learner;
    take(l, "gamma", L.gamma, lr);
    take(l, "epsilon_start", L.epsilon_start, lr);
    take(l, "epsilon_end", L.epsilon_end, lr);
    take(l, "epsilon_fraction", L.epsilon_fraction, lr);
    take(l, "replay_capacity", L.replay_capacity, lr);
    take(l, "batch_size", L.batch_size, lr);
    take(l, "warmup", L.warmup, lr);
    take(l, "update_every", L.update_every, lr);
    take(l, "target_sync", L.target_sync, lr);
    take(l, "learning_rate", L.adam.learning_rate, lr);
    take(l, "beta1", L.adam.beta1, lr);
    take(l, "beta2", L.adam.beta2, lr);
    take(l, "adam_epsilon", L.adam.epsilon, lr);
    take(l, "clip_norm", L.adam.clip_norm, lr);
    take(l, "quantiles", L.quantiles, lr);
    take(l, "target_quantiles", L.target_quantiles, lr);
    take(l, "kappa", L.kappa, lr);
    reject_leftovers(lr, "learner");
  }
  reject_leftovers(rest, "top level");
  return c;
}

std::shared_ptr<const env::GridMap> build_map(const RunConfig& cfg) {
  auto map = env::resolve_map(cfg.map);
  if (cfg.wanderers) map.set_wanderers(*cfg.wanderers);
  return std::make_shared<const env::GridMap>(std::move(map));
}

std::vector<std::size_t> learner_ids(const env::GridMap& map) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < map.agent_count(); ++i)
    if (map.spawns()[i].kind == env::AgentKind::Learner) ids.push_back(i);
  return ids;
}

void resolve(RunConfig& cfg) {
  const auto map = build_map(cfg);
  const auto learners = learner_ids(*map);
  if (learners.empty()) invalid("map '" + cfg.map + "' has no learner agents");
  if (cfg.window <= 0 || cfg.window % 2 == 0) invalid("window R must be a positive odd integer, got " + std::to_string(cfg.window));
  if (!noise::is_legal(cfg.noise, cfg.window)) {
    invalid("noise regime '" + std::string(noise::regime_name(cfg.noise)) + "' is not defined for R = " +
            std::to_string(cfg.window) + " (large-marginal needs R = 9, small-marginal and small-full need R = 7)");
  }
  if (cfg.epochs == 0) invalid("epochs must be positive");
  if (cfg.env.horizon == 0) invalid("episode length H must be positive");
  // Respawn always finds a free cell when objects plus agents fit in the object area.
  const std::size_t area = map->object_cells().size();
  if (cfg.env.object_count == 0 || cfg.env.object_count + map->agent_count() > area) {
    invalid(std::to_string(cfg.env.object_count) + " objects requested; map '" + cfg.map + "' with " +
            std::to_string(map->agent_count()) + " agents allows 1.." +
            std::to_string(area > map->agent_count() ? area - map->agent_count() : 0));
  }
  if (!cfg.update_order.empty()) {
    auto sorted = cfg.update_order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expect(learners.size());
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    if (sorted != expect) invalid("update_order must be a permutation of 0.." + std::to_string(learners.size() - 1));
  }
  cfg.net.window = static_cast<std::size_t>(cfg.window);
  cfg.net.channels = env::channel_count(cfg.profile, map->agent_count());
  cfg.net.validate();
  cfg.learner.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  // splitmix64 over a combination of the three inputs.
  std::uint64_t z = seed ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL) ^ (index * 0x9e3779b97f4a7c15ULL);
  for (int round = 0; round < 2; ++round) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
  }
  return z;
}

env::Observation observe(const env::WorldState& state, std::size_t agent, const RunConfig& cfg,
                         const noise::NoiseSpec& spec, Rng& rng) {
  return noise::apply_noise(env::encode_observation(state, agent, cfg.profile, cfg.window), spec, rng);
}

void EpisodeMetrics::add(const EpisodeMetrics& o) {
  reward += o.reward;
  objects += o.objects;
  agent_collisions += o.agent_collisions;
  wall_collisions += o.wall_collisions;
}

std::string metrics_header() { return "epoch,agent_id,episode_reward,objects,agent_collisions,wall_collisions"; }

std::string metrics_row(std::size_t epoch, const std::string& id, const EpisodeMetrics& m) {
  return std::to_string(epoch) + "," + id + "," + format_real(m.reward) + "," + std::to_string(m.objects) + "," +
         std::to_string(m.agent_collisions) + "," + std::to_string(m.wall_collisions);
}

std::filesystem::path checkpoint_stem(const std::filesystem::path& run_dir, std::size_t agent) {
  return run_dir / "checkpoints" / ("agent" + std::to_string(agent));
}

RunConfig load_run_config(const std::filesystem::path& metadata_path) {
  std::ifstream in(metadata_path);
  if (!in) throw std::runtime_error("cannot open run metadata " + metadata_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed run metadata " + metadata_path.string() + ": " + e.what());
  }
  auto cfg = merge_json(RunConfig{}, doc);
  resolve(cfg);
  return cfg;
}

namespace {

json checkpoint_meta(const RunConfig& cfg, std::size_t agent, std::size_t epoch, const AgentLearner& learner) {
  return json{{"agent", agent},
              {"epoch", epoch},
              {"algorithm", net::architecture_name(cfg.net.arch)},
              {"channels", cfg.net.channels},
              {"window", cfg.net.window},
              {"updates", learner.updates()}};
}

void save_learners(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<std::size_t>& ids,
                   std::vector<std::unique_ptr<AgentLearner>>& learners, std::size_t epoch) {
  std::filesystem::create_directories(dir / "checkpoints");
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto stem = dir / "checkpoints" / ("agent" + std::to_string(ids[k]));
    save_checkpoint(stem, learners[k]->online().parameters(), checkpoint_meta(cfg, ids[k], epoch, *learners[k]));
  }
}

}  // namespace

RunResult run_training(RunConfig cfg, const EpochCallback& on_epoch) {
  resolve(cfg);
  const auto map = build_map(cfg);
  const auto ids = learner_ids(*map);
  const std::size_t n_agents = map->agent_count();
  const auto spec = noise::build_spec(cfg.noise, cfg.window);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);

  std::vector<std::unique_ptr<AgentLearner>> learners;
  std::vector<Rng> noise_rng;
  for (auto id : ids) {
    learners.push_back(std::make_unique<AgentLearner>(id, cfg.net, cfg.learner, derive_seed(cfg.seed, Stream::Agent, id)));
    noise_rng.emplace_back(derive_seed(cfg.seed, Stream::Noise, id));
  }
  Rng wander_rng(derive_seed(cfg.seed, Stream::Wanderer, 0));
  std::vector<std::size_t> order = cfg.update_order;
  if (order.empty()) {
    order.resize(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }

  {
    auto meta = to_json(cfg);
    json params = json::object();
    for (const auto& pc : learners.front()->online().parameter_report()) params[pc.name] = pc.count;
    meta["derived"] = {{"format", "da3-run-v1"},
                       {"agents", n_agents},
                       {"learners", ids},
                       {"channels", cfg.net.channels},
                       {"noise_spec", noise::to_json(spec)},
                       {"parameters", params}};
    std::ofstream out(dir / "metadata.json");
    out << meta.dump(2) << "\n";
  }
  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot write metrics to " + (dir / "metrics.csv").string());
  metrics << metrics_header() << "\n";

  RunResult result;
  result.directory = dir;
  const std::size_t horizon = cfg.env.horizon;
  const std::size_t total_steps = cfg.epochs * horizon;
  std::vector<env::Observation> obs(ids.size()), next(ids.size());
  std::vector<env::Action> actions(n_agents);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto state = env::reset(map, cfg.env, derive_seed(cfg.seed, Stream::Environment, epoch));
    for (std::size_t k = 0; k < ids.size(); ++k) obs[k] = observe(state, ids[k], cfg, spec, noise_rng[k]);
    std::vector<EpisodeMetrics> ep(n_agents);
    for (std::size_t t = 0; t < horizon; ++t) {
      const std::size_t global = epoch * horizon + t;
      const double eps = epsilon_at(cfg.learner, global, total_steps);
      for (std::size_t k = 0; k < ids.size(); ++k) actions[ids[k]] = select_action(*learners[k], obs[k], eps);
      for (std::size_t i = 0; i < n_agents; ++i)
        if (state.kinds[i] == env::AgentKind::Wanderer) actions[i] = env::wanderer_policy(state, i, wander_rng);
      const auto outcome = env::step(state, actions);
      for (std::size_t i = 0; i < n_agents; ++i) {
        ep[i].reward += outcome.rewards[i];
        ep[i].objects += outcome.events[i].collected;
        ep[i].agent_collisions += outcome.events[i].agent_collision;
        ep[i].wall_collisions += outcome.events[i].wall_collision;
      }
      for (std::size_t k = 0; k < ids.size(); ++k) next[k] = observe(state, ids[k], cfg, spec, noise_rng[k]);
      for (auto k : order) {
        auto& learner = *learners[k];
        learner.buffer().push(Transition{obs[k], actions[ids[k]], outcome.rewards[ids[k]], next[k], outcome.done});
        if (learner.buffer().size() >= cfg.learner.warmup_size() && global % cfg.learner.update_every == 0) learner.update();
      }
      std::swap(obs, next);
    }
    EpisodeMetrics total;
    for (std::size_t i = 0; i < n_agents; ++i) metrics << metrics_row(epoch, std::to_string(i), ep[i]) << "\n";
    for (auto id : ids) total.add(ep[id]);
    if (ids.size() > 1) metrics << metrics_row(epoch, "total", total) << "\n";
    metrics.flush();
    result.episodes.push_back(ep);
    if (on_epoch) on_epoch(epoch, ep);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      save_learners(dir / ("epoch" + std::to_string(epoch + 1)), cfg, ids, learners, epoch + 1);
    }
  }
  save_learners(dir, cfg, ids, learners, cfg.epochs);
  for (const auto& l : learners) result.checksums.push_back(parameter_checksum(l->online().parameters()));
  return result;
}

}  // namespace da3::learn
