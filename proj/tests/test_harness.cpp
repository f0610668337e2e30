#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "da3/harness/harness.hpp"
#include "doctest.h"

using namespace da3;
using harness::UsageError;
using net::Architecture;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("da3_test_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

learn::RunConfig tiny_run(const fs::path& dir, Architecture arch) {
  learn::RunConfig c;
  c.map = "single-room";
  c.env.object_count = 6;
  c.env.horizon = 15;
  c.epochs = 3;
  c.noise = noise::Regime::SmallFull;
  c.net.arch = arch;
  c.net.embed = 8;
  c.net.heads = 2;
  c.net.head_hidden = 8;
  c.net.quantile_basis = 8;
  c.learner.batch_size = 8;
  c.learner.quantiles = 4;
  c.learner.target_quantiles = 4;
  c.seed = 11;
  c.output_dir = dir.string();
  return c;
}

}  // namespace

TEST_CASE("resolve_config builds a legal Exp.1 arm") {
  const auto c = harness::resolve_config({"--env", "three-rooms", "--algo", "da3-dqn", "--noise", "small-full", "--seed", "7"});
  CHECK(c.map == "three-rooms");
  CHECK(c.net.arch == Architecture::Da3Dqn);
  CHECK(c.noise == noise::Regime::SmallFull);
  CHECK(c.seed == 7);
  CHECK(c.window == 7);
  CHECK(c.net.channels == 3);
}

TEST_CASE("resolve_config rejects illegal combinations and unknown flags") {
  CHECK_THROWS_AS(harness::resolve_config({"--noise", "large-marginal", "--R", "7"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--noise", "small-full", "--R", "9"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--frobnicate", "3"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--algo", "ppo"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--env", "three-rooms", "--profile", "exp2"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--profile", "exp2", "--wanderers", "1,2"}), UsageError);
  CHECK_THROWS_AS(harness::resolve_config({"--epochs", "0"}), UsageError);
  CHECK_NOTHROW(harness::resolve_config({"--noise", "large-marginal", "--R", "9"}));
}

TEST_CASE("exp2 profile forces the simple map and wanderers at spawns 4 and 5") {
  for (const auto& args : {std::vector<std::string>{"--env", "simple", "--profile", "exp2"},
                           std::vector<std::string>{"--profile", "exp2"}}) {
    const auto c = harness::resolve_config(args);
    CHECK(c.map == "simple");
    REQUIRE(c.wanderers.has_value());
    CHECK(*c.wanderers == std::vector<std::size_t>{4, 5});
    const auto map = learn::build_map(c);
    CHECK(learn::learner_ids(*map) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(c.net.channels == map->agent_count() + 2);
  }
  const auto arm = harness::exp2_arm(learn::RunConfig{});
  CHECK(arm.profile == env::Profile::Exp2);
  CHECK(*arm.wanderers == std::vector<std::size_t>{4, 5});
}

TEST_CASE("flags override the config document, which overrides defaults") {
  const auto dir = scratch("layering");
  fs::create_directories(dir);
  const auto doc = dir / "cfg.json";
  std::ofstream(doc) << R"({"seed": 5, "epochs": 40, "learner": {"batch_size": 16}, "output_dir": "arm"})";
  const auto c = harness::resolve_config({"--config", doc.string(), "--seed", "9"}, dir / "root");
  CHECK(c.seed == 9);
  CHECK(c.epochs == 40);
  CHECK(c.learner.batch_size == 16);
  CHECK(c.learner.gamma == 0.99);
  CHECK(fs::path(c.output_dir) == dir / "root" / "arm");

  std::ofstream(doc) << R"({"seeed": 5})";
  CHECK_THROWS_AS(harness::resolve_config({"--config", doc.string()}), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("Exp.1 arm matrix") {
  learn::RunConfig base;
  base.output_dir = "exp1";
  const auto arms = harness::exp1_arms(base, {1, 2});
  REQUIRE(arms.size() == 32);
  std::set<std::string> dirs;
  for (const auto& a : arms) {
    CHECK(a.window == (a.noise == noise::Regime::LargeMarginal ? 9 : 7));
    CHECK(noise::is_legal(a.noise, a.window));
    dirs.insert(a.output_dir);
  }
  CHECK(dirs.size() == arms.size());
}

TEST_CASE("comparison requires all four algorithms under one seed set") {
  using noise::Regime;
  std::vector<harness::ArmOutcome> outcomes;
  for (auto arch : {Architecture::Da3Iqn, Architecture::VanillaIqn, Architecture::Da3Dqn, Architecture::VanillaDqn})
    for (std::uint64_t s : {0, 1}) outcomes.push_back({Regime::SmallFull, arch, s, 10.0 + 2.0 * double(s)});
  const auto rows = harness::compare_arms(outcomes);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].objects.mean == doctest::Approx(11.0));
  CHECK(rows[0].objects.stddev == doctest::Approx(1.0));

  auto missing = outcomes;
  missing.pop_back();
  CHECK_THROWS_AS(harness::compare_arms(missing), UsageError);
  auto shifted = outcomes;
  shifted.back().seed = 5;
  CHECK_THROWS_AS(harness::compare_arms(shifted), UsageError);
  auto partial = outcomes;
  std::erase_if(partial, [](const auto& o) { return o.arch == Architecture::VanillaIqn; });
  CHECK_THROWS_AS(harness::compare_arms(partial), UsageError);
}

TEST_CASE("render_heatmap") {
  net::Heatmap constant{2, 3, std::vector<double>(6, 0.25)};
  const auto img = harness::render_heatmap(constant);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(img.size() == header.size() + 6);
  CHECK(img.substr(0, header.size()) == header);
  for (std::size_t i = header.size(); i < img.size(); ++i) CHECK(img[i] == img[header.size()]);

  net::Heatmap ramp{1, 3, {0.0, 0.5, 1.0}};
  const auto r = harness::render_heatmap(ramp);
  CHECK(static_cast<unsigned char>(r[header.size()]) == 0);
  CHECK(static_cast<unsigned char>(r.back()) == 255);
  const auto inv = harness::render_heatmap(ramp, harness::Palette::Inverted);
  CHECK(static_cast<unsigned char>(inv.back()) == 0);
  CHECK(harness::render_heatmap(ramp, harness::Palette::Gray, 4).size() == std::string("P5\n12 4\n255\n").size() + 48);
  CHECK(harness::render_heatmap(ramp) == r);

  CHECK_THROWS_AS(harness::render_heatmap(net::Heatmap{}), UsageError);
  CHECK_THROWS_AS(harness::render_heatmap(net::Heatmap{1, 2, {0.1, -0.2}}), UsageError);
  CHECK_THROWS_AS(harness::render_heatmap(net::Heatmap{1, 2, {0.1, NAN}}), UsageError);
  CHECK_THROWS_AS(harness::parse_heatmap_text("0 0\n"), UsageError);
}

TEST_CASE("heatmap text round-trips exactly") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    net::Heatmap h{1 + rng() % 9, 1 + rng() % 9, {}};
    for (std::size_t i = 0; i < h.rows * h.cols; ++i) h.values.push_back(std::pow(u(rng), 7.0) * 1e3);
    const auto back = harness::parse_heatmap_text(harness::heatmap_text(h));
    CHECK(back.rows == h.rows);
    CHECK(back.cols == h.cols);
    CHECK(back.values == h.values);
  }
}

TEST_CASE("evaluation heatmaps account for every collection") {
  const auto dir = scratch("exp2");
  auto cfg = harness::exp2_arm(tiny_run(dir, Architecture::Da3Dqn));
  cfg.env.object_count = 12;
  harness::run_experiment(cfg);
  const auto s = harness::evaluate_policy(dir, 5, 2);
  REQUIRE(s.heatmaps.size() == 6);
  std::uint64_t learner_total = 0;
  for (const auto& a : s.agents) {
    const auto& h = s.heatmaps[a.agent];
    CHECK(h.total() == a.objects_total);
    if (a.learner) {
      learner_total += h.total();
    } else {
      CHECK(h.total() == 0);
    }
  }
  CHECK(!s.agents[4].learner);
  CHECK(!s.agents[5].learner);
  CHECK(learner_total == s.objects_total);
  CHECK(s.objects.mean * 5.0 == doctest::Approx(double(s.objects_total)));
  CHECK(harness::summary_table(s).find("Objects collected") != std::string::npos);

  // Rollouts are a pure function of the checkpoint and evaluation seed.
  CHECK(harness::to_json(harness::evaluate_policy(dir, 5, 2)) == harness::to_json(s));

  fs::remove(learn::checkpoint_stem(dir, 2).string() + ".bin");
  CHECK_THROWS(harness::evaluate_policy(dir, 5, 2));
  fs::remove_all(dir);
}

TEST_CASE("probe_attention exports stochastic saliency maps") {
  const auto dir = scratch("probe");
  harness::run_experiment(tiny_run(dir, Architecture::Da3Iqn));
  const nlohmann::json pinned = {{"agents", {{3, 3}, {8, 8}}}, {"objects", {{4, 3}, {3, 5}, {9, 9}}}};
  const auto results = harness::probe_attention(dir, pinned);
  REQUIRE(results.size() == 2);
  for (const auto& p : results) {
    CHECK(p.heads.size() == 2);
    CHECK(p.mean.rows == 7);
    double sum = 0.0;
    for (double v : p.mean.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum <= 1.0 + 1e-12);
    CHECK(p.action_values.size() == 4);
    const auto doc = harness::to_json(p);
    CHECK(doc["observation"].size() == 3);
    CHECK(doc["mean"].size() == 7);
    const double v = doc["mean"][3][3].get<double>();
    CHECK(std::abs(v * 1e6 - std::round(v * 1e6)) < 1e-6);
  }
  // Same scenario, same export.
  CHECK(harness::to_json(harness::probe_attention(dir, pinned)[0]) == harness::to_json(results[0]));

  const auto replay = harness::probe_attention(dir, {{"episode_seed", 4}, {"step", 6}, {"probe", {1}}});
  REQUIRE(replay.size() == 1);
  CHECK(replay[0].agent == 1);

  CHECK_THROWS_AS(harness::probe_attention(dir, {{"algorithm", "da3-dqn"}, {"episode_seed", 1}}), UsageError);
  CHECK_THROWS_AS(harness::probe_attention(dir, {{"agents", {{0, 0}, {8, 8}}}}), UsageError);
  CHECK_THROWS_AS(harness::probe_attention(dir, nlohmann::json::object()), UsageError);

  const auto vanilla = scratch("probe_vanilla");
  harness::run_experiment(tiny_run(vanilla, Architecture::VanillaDqn));
  CHECK_THROWS_AS(harness::probe_attention(vanilla, pinned), UsageError);

  // A checkpoint written for another architecture is refused.
  fs::copy_file(learn::checkpoint_stem(vanilla, 0).string() + ".json", learn::checkpoint_stem(dir, 0).string() + ".json",
                fs::copy_options::overwrite_existing);
  CHECK_THROWS(harness::probe_attention(dir, pinned));
  fs::remove_all(dir);
  fs::remove_all(vanilla);
}

TEST_CASE("smoke arm finishes within a minute") {
  const auto dir = scratch("smoke");
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = harness::resolve_config({"--env", "single-room", "--algo", "da3-dqn", "--noise", "small-full",
                                            "--objects", "10", "--horizon", "50", "--epochs", "5", "--embed", "16",
                                            "--out", dir.string()});
  harness::run_experiment(cfg);
  harness::evaluate_policy(dir, 2);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::minutes(1));
  fs::remove_all(dir);
}
