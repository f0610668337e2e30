#include "da3/noise/noise.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace da3::noise {

Regime parse_regime(std::string_view name) {
  if (name == "noiseless") return Regime::Noiseless;
  if (name == "large-marginal") return Regime::LargeMarginal;
  if (name == "small-marginal") return Regime::SmallMarginal;
  if (name == "small-full") return Regime::SmallFull;
  throw std::invalid_argument("unknown noise regime: " + std::string(name));
}

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::Noiseless: return "noiseless";
    case Regime::LargeMarginal: return "large-marginal";
    case Regime::SmallMarginal: return "small-marginal";
    case Regime::SmallFull: return "small-full";
  }
  return "?";
}

double NoiseSpec::flip_probability(int row, int col) const {
  const int half = window / 2;
  const int d = std::max(std::abs(row - half), std::abs(col - half));
  for (const auto& r : rings)
    if (r.distance == d) return r.p;
  return 0.0;
}

bool is_legal(Regime regime, int window) {
  if (window <= 0 || window % 2 == 0) return false;
  switch (regime) {
    case Regime::Noiseless: return true;
    case Regime::LargeMarginal: return window == 9;
    case Regime::SmallMarginal:
    case Regime::SmallFull: return window == 7;
  }
  return false;
}

NoiseSpec build_spec(Regime regime, int window) {
  if (!is_legal(regime, window)) {
    throw std::invalid_argument("noise regime " + std::string(regime_name(regime)) + " is not defined for R=" +
                                std::to_string(window) + " (large-marginal needs R=9, small-* need R=7)");
  }
  NoiseSpec spec{regime, window, {}};
  switch (regime) {
    case Regime::Noiseless: break;
    case Regime::LargeMarginal: spec.rings = {{4, 0.5}}; break;
    case Regime::SmallMarginal: spec.rings = {{3, 0.2}}; break;
    case Regime::SmallFull: spec.rings = {{3, 0.2}, {2, 0.1}, {1, 0.05}}; break;
  }
  return spec;
}

env::Observation apply_noise(const env::Observation& obs, const NoiseSpec& spec, std::mt19937_64& rng) {
  if (obs.size != spec.window) {
    throw std::invalid_argument("apply_noise: observation window " + std::to_string(obs.size) +
                                " does not match noise spec window " + std::to_string(spec.window));
  }
  env::Observation out = obs;
  if (spec.rings.empty()) return out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 0; c < out.channels; ++c) {
    const bool blocked = c + 1 == out.channels;
    const std::int8_t on = blocked ? -1 : 1;
    for (int r = 0; r < out.size; ++r)
      for (int k = 0; k < out.size; ++k) {
        const double p = spec.flip_probability(r, k);
        if (p <= 0.0) continue;
        if (unit(rng) < p) {
          auto& v = out.at(c, r, k);
          v = v == 0 ? on : 0;
        }
      }
  }
  return out;
}

nlohmann::json to_json(const NoiseSpec& spec) {
  nlohmann::json rings = nlohmann::json::array();
  for (const auto& r : spec.rings) rings.push_back({{"distance", r.distance}, {"p", r.p}});
  return {{"regime", regime_name(spec.regime)}, {"window", spec.window}, {"rings", rings}};
}

}  // namespace da3::noise
