#include <cmath>
#include <memory>

#include "da3/noise/noise.hpp"
#include "doctest.h"

using namespace da3;
using noise::Regime;

namespace {

env::Observation sample_observation(std::uint64_t seed, int window) {
  auto map = std::make_shared<const env::GridMap>(env::builtin_map("three-rooms"));
  auto s = env::reset(map, env::EnvConfig{}, seed);
  return env::encode_observation(s, seed % 6, env::Profile::Exp1, window);
}

}  // namespace

TEST_CASE("build_spec ring tables") {
  auto large = noise::build_spec(Regime::LargeMarginal, 9);
  CHECK(large.rings == std::vector<noise::Ring>{{4, 0.5}});
  CHECK(noise::build_spec(Regime::Noiseless, 7).rings.empty());
  CHECK(noise::build_spec(Regime::SmallMarginal, 7).rings == std::vector<noise::Ring>{{3, 0.2}});
  CHECK(noise::build_spec(Regime::SmallFull, 7).rings == std::vector<noise::Ring>{{3, 0.2}, {2, 0.1}, {1, 0.05}});
  CHECK_THROWS_AS(noise::build_spec(Regime::LargeMarginal, 7), std::invalid_argument);
  CHECK_THROWS_AS(noise::build_spec(Regime::SmallFull, 9), std::invalid_argument);
  CHECK_THROWS_AS(noise::build_spec(Regime::Noiseless, 6), std::invalid_argument);
  for (auto r : {Regime::Noiseless, Regime::LargeMarginal, Regime::SmallMarginal, Regime::SmallFull})
    CHECK(noise::parse_regime(noise::regime_name(r)) == r);
  // The centre is never noised.
  CHECK(noise::build_spec(Regime::SmallFull, 7).flip_probability(3, 3) == 0.0);
}

TEST_CASE("noiseless spec is the identity") {
  std::mt19937_64 rng(1);
  auto obs = sample_observation(3, 7);
  CHECK(noise::apply_noise(obs, noise::build_spec(Regime::Noiseless, 7), rng) == obs);
}

TEST_CASE("p = 1 flips every entry in the band and is an involution") {
  std::mt19937_64 rng(2);
  noise::NoiseSpec spec{Regime::SmallMarginal, 7, {{3, 1.0}, {1, 1.0}}};
  auto obs = sample_observation(5, 7);
  auto once = noise::apply_noise(obs, spec, rng);
  for (std::size_t c = 0; c < obs.channels; ++c)
    for (int r = 0; r < 7; ++r)
      for (int k = 0; k < 7; ++k) {
        if (spec.flip_probability(r, k) == 1.0) {
          CHECK(once.at(c, r, k) != obs.at(c, r, k));
        } else {
          CHECK(once.at(c, r, k) == obs.at(c, r, k));
        }
      }
  CHECK(noise::apply_noise(once, spec, rng) == obs);
}

TEST_CASE("input is not mutated and window mismatch is rejected") {
  std::mt19937_64 rng(3);
  auto obs = sample_observation(7, 7);
  const auto copy = obs;
  noise::apply_noise(obs, noise::build_spec(Regime::SmallFull, 7), rng);
  CHECK(obs == copy);
  CHECK_THROWS_AS(noise::apply_noise(obs, noise::build_spec(Regime::LargeMarginal, 9), rng), std::invalid_argument);
}

TEST_CASE("small-marginal per-cell flip frequencies") {
  std::mt19937_64 rng(11);
  const auto spec = noise::build_spec(Regime::SmallMarginal, 7);
  const auto obs = sample_observation(1, 7);
  const int samples = 100000;
  std::vector<int> flips(obs.data.size(), 0);
  for (int s = 0; s < samples; ++s) {
    auto noisy = noise::apply_noise(obs, spec, rng);
    for (std::size_t i = 0; i < flips.size(); ++i) flips[i] += noisy.data[i] != obs.data[i];
  }
  for (std::size_t c = 0; c < obs.channels; ++c)
    for (int r = 0; r < 7; ++r)
      for (int k = 0; k < 7; ++k) {
        const double rate = flips[(c * 7 + static_cast<std::size_t>(r)) * 7 + static_cast<std::size_t>(k)] / double(samples);
        if (spec.flip_probability(r, k) > 0) {
          CHECK(std::abs(rate - 0.2) <= 0.005);
        } else {
          CHECK(rate == 0.0);
        }
      }
}

TEST_CASE("noise preserves shape and channel alphabets") {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto obs = sample_observation(seed, 7);
    auto noisy = noise::apply_noise(obs, noise::build_spec(Regime::SmallFull, 7), rng);
    REQUIRE(noisy.data.size() == obs.data.size());
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
      const bool blocked = i / 49 == 2;
      CHECK((blocked ? (noisy.data[i] <= 0) : (noisy.data[i] >= 0)));
    }
  }
}

TEST_CASE("large-marginal R=9 inner window equals the noiseless R=7 encoding") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto o9 = sample_observation(seed, 9);
    auto o7 = sample_observation(seed, 7);
    for (std::size_t c = 0; c < 3; ++c)
      for (int r = 0; r < 7; ++r)
        for (int k = 0; k < 7; ++k) REQUIRE(o9.at(c, r + 1, k + 1) == o7.at(c, r, k));
  }
}

TEST_CASE("flips are pairwise independent (chi-square, alpha = 0.01)") {
  std::mt19937_64 rng(99);
  const auto spec = noise::build_spec(Regime::SmallFull, 7);
  const auto obs = sample_observation(2, 7);
  auto idx = [](std::size_t c, int r, int k) { return (c * 7 + static_cast<std::size_t>(r)) * 7 + static_cast<std::size_t>(k); };
  // Same channel neighbouring cells, same cell across channels, different rings.
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{
      {idx(0, 0, 0), idx(0, 0, 1)}, {idx(1, 0, 3), idx(2, 0, 3)}, {idx(0, 1, 1), idx(0, 6, 6)}, {idx(2, 2, 2), idx(1, 2, 3)}};
  const int samples = 100000;
  std::vector<std::array<int, 4>> table(pairs.size(), {0, 0, 0, 0});
  for (int s = 0; s < samples; ++s) {
    auto noisy = noise::apply_noise(obs, spec, rng);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const int a = noisy.data[pairs[p].first] != obs.data[pairs[p].first];
      const int b = noisy.data[pairs[p].second] != obs.data[pairs[p].second];
      ++table[p][static_cast<std::size_t>(2 * a + b)];
    }
  }
  for (const auto& t : table) {
    const double n = samples;
    const double ra = (t[2] + t[3]) / n, rb = (t[1] + t[3]) / n;
    const double expected[4] = {(1 - ra) * (1 - rb) * n, (1 - ra) * rb * n, ra * (1 - rb) * n, ra * rb * n};
    double chi2 = 0.0;
    for (int i = 0; i < 4; ++i) chi2 += (t[static_cast<std::size_t>(i)] - expected[i]) * (t[static_cast<std::size_t>(i)] - expected[i]) / expected[i];
    CHECK(chi2 < 6.635);  // df = 1
  }
}
