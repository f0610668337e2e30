// da3: train, evaluate, probe-attention, render.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "da3/harness/harness.hpp"

namespace fs = std::filesystem;
using namespace da3;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw harness::UsageError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int train(const std::vector<std::string>& args) {
  const auto cfg = harness::resolve_config(args, harness::output_root_from_env());
  std::fprintf(stderr, "training %s (%s, R=%d, seed %llu) -> %s\n", std::string(net::architecture_name(cfg.net.arch)).c_str(),
               std::string(noise::regime_name(cfg.noise)).c_str(), cfg.window,
               static_cast<unsigned long long>(cfg.seed), cfg.output_dir.c_str());
  const auto every = std::max<std::size_t>(1, cfg.epochs / 20);
  const auto dir = harness::run_experiment(cfg, [&](std::size_t epoch, const std::vector<learn::EpisodeMetrics>& ep) {
    if ((epoch + 1) % every != 0) return;
    std::size_t objects = 0;
    for (const auto& m : ep) objects += m.objects;
    std::fprintf(stderr, "epoch %zu/%zu objects %zu\n", epoch + 1, cfg.epochs, objects);
  });
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed attention-based agents on a gridworld"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train one arm; see --help-config for flags");
  train_cmd->allow_extras();
  train_cmd->set_help_flag();
  bool train_help = false;
  train_cmd->add_flag("--help-config", train_help, "list configuration flags");

  auto* eval_cmd = app.add_subcommand("evaluate", "greedy rollouts of a trained run");
  std::string eval_run, eval_out;
  std::size_t episodes = 100;
  std::uint64_t eval_seed = 0;
  eval_cmd->add_option("--run", eval_run, "run directory")->required();
  eval_cmd->add_option("--episodes", episodes);
  eval_cmd->add_option("--seed", eval_seed);
  eval_cmd->add_option("--out", eval_out, "directory for summary.json and heatmaps");

  auto* probe_cmd = app.add_subcommand("probe-attention", "saliency attention on a pinned state");
  std::string probe_run, scenario_path, probe_out;
  probe_cmd->add_option("--run", probe_run, "run directory")->required();
  probe_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  probe_cmd->add_option("--out", probe_out, "directory for the exports");

  auto* render_cmd = app.add_subcommand("render", "grid text file to PGM");
  std::string grid_path, image_path, palette = "gray";
  int scale = 16;
  render_cmd->add_option("--grid", grid_path, "grid in text form")->required();
  render_cmd->add_option("--out", image_path, "output .pgm")->required();
  render_cmd->add_option("--palette", palette);
  render_cmd->add_option("--scale", scale);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) {
      if (train_help) {
        std::cout << "flags: --config FILE --env MAP --algo ALGO --noise REGIME --R N --profile exp1|exp2\n"
                     "       --wanderers I,J --objects N --horizon N --epochs N --seed N --out DIR\n"
                     "       --embed C --heads H --loops L --patch P --batch B --update-every K --target-sync K\n"
                     "       --replay N --quantiles N --checkpoint-every N --lr X --gamma X\n";
        return 0;
      }
      return train(train_cmd->remaining());
    }
    const fs::path root = harness::output_root_from_env();
    auto place = [&](const std::string& p) { return fs::path(p).is_relative() && !root.empty() ? root / p : fs::path(p); };
    if (*eval_cmd) {
      const auto summary = harness::evaluate_policy(eval_run, episodes, eval_seed);
      std::cout << harness::summary_table(summary);
      if (!eval_out.empty()) {
        const auto dir = place(eval_out);
        write_file(dir / "summary.json", harness::to_json(summary).dump(2) + "\n");
        for (const auto& h : summary.heatmaps) {
          const auto name = "collections_agent" + std::to_string(h.agent);
          write_file(dir / (name + ".txt"), harness::heatmap_text(h.as_grid()));
          write_file(dir / (name + ".pgm"), harness::render_heatmap(h.as_grid(), harness::Palette::Gray, 16));
        }
      }
      return 0;
    }
    if (*probe_cmd) {
      const auto scenario = json::parse(slurp(scenario_path));
      const auto results = harness::probe_attention(probe_run, scenario);
      json all = json::array();
      for (const auto& p : results) {
        all.push_back(harness::to_json(p));
        if (!probe_out.empty()) {
          const auto dir = place(probe_out);
          const auto name = "attention_agent" + std::to_string(p.agent);
          write_file(dir / (name + ".json"), all.back().dump(2) + "\n");
          write_file(dir / (name + "_mean.txt"), harness::heatmap_text(p.mean));
          write_file(dir / (name + "_mean.pgm"), harness::render_heatmap(p.mean, harness::Palette::Gray, 16));
        }
      }
      std::cout << all.dump(2) << "\n";
      return 0;
    }
    if (*render_cmd) {
      const auto grid = harness::parse_heatmap_text(slurp(grid_path));
      write_file(place(image_path), harness::render_heatmap(grid, harness::parse_palette(palette), scale));
      return 0;
    }
  } catch (const harness::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
