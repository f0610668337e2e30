#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <random>
#include <string_view>
#include <vector>

#include "da3/env/observation.hpp"

namespace da3::noise {

enum class Regime : std::uint8_t { Noiseless, LargeMarginal, SmallMarginal, SmallFull };

Regime parse_regime(std::string_view name);
std::string_view regime_name(Regime r);

// Cells at Chebyshev distance `distance` from the window centre flip with
// probability `p`.
struct Ring {
  int distance = 0;
  double p = 0.0;
  bool operator==(const Ring&) const = default;
};

struct NoiseSpec {
  Regime regime = Regime::Noiseless;
  int window = 7;
  std::vector<Ring> rings;

  double flip_probability(int row, int col) const;
};

// Canonical ring tables:
//   Noiseless      any odd R  no rings
//   LargeMarginal  R = 9      (4, 0.5)
//   SmallMarginal  R = 7      (3, 0.2)
//   SmallFull      R = 7      (3, 0.2), (2, 0.1), (1, 0.05)
NoiseSpec build_spec(Regime regime, int window);
bool is_legal(Regime regime, int window);

// Independently flips each entry of each noised cell within its channel's
// alphabet: 0 <-> 1 on presence channels, 0 <-> -1 on the blocked channel.
env::Observation apply_noise(const env::Observation& obs, const NoiseSpec& spec, std::mt19937_64& rng);

nlohmann::json to_json(const NoiseSpec& spec);

}  // namespace da3::noise
