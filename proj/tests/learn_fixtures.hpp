#pragma once

// Three-state, four-action deterministic MDP with a value-iteration oracle,
// plus helpers for building tiny learners around it.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "da3/learn/learner.hpp"

namespace da3::testing {

struct SyntheticMdp {
  static constexpr int kStates = 3;
  static constexpr int kTerminal = -1;
  // next[s][a], reward[s][a]
  std::array<std::array<int, 4>, 3> next{{{1, 0, 2, kTerminal}, {kTerminal, 0, 2, 1}, {0, kTerminal, 1, kTerminal}}};
  std::array<std::array<double, 4>, 3> reward{{{0.0, -0.5, 0.2, 0.0}, {1.0, 0.0, 0.5, -0.2}, {0.3, -1.0, 0.0, 0.6}}};
  double gamma = 0.9;

  // Q* by value iteration to a fixed point.
  std::array<std::array<double, 4>, 3> optimal_q() const {
    std::array<std::array<double, 4>, 3> q{};
    for (int it = 0; it < 2000; ++it) {
      auto nq = q;
      for (int s = 0; s < kStates; ++s)
        for (int a = 0; a < 4; ++a) {
          const int n = next[s][a];
          const double v = n == kTerminal ? 0.0 : *std::max_element(q[n].begin(), q[n].end());
          nq[s][a] = reward[s][a] + gamma * v;
        }
      q = nq;
    }
    return q;
  }

  // State s as a one-channel 3x3 observation with a single lit cell.
  static env::Observation encode(int s) {
    env::Observation o;
    o.channels = 1;
    o.size = 3;
    o.data.assign(9, 0);
    if (s >= 0) o.data[static_cast<std::size_t>(2 * s + 1)] = 1;
    return o;
  }

  std::vector<learn::Transition> transitions() const {
    std::vector<learn::Transition> out;
    for (int s = 0; s < kStates; ++s)
      for (int a = 0; a < 4; ++a) {
        const int n = next[s][a];
        out.push_back({encode(s), static_cast<env::Action>(a), reward[s][a], encode(n), n == kTerminal});
      }
    return out;
  }
};

inline net::NetConfig mdp_net(net::Architecture arch) {
  net::NetConfig c;
  c.arch = arch;
  c.channels = 1;
  c.window = 3;
  c.embed = 16;
  c.heads = 2;
  c.head_hidden = 32;
  c.quantile_basis = 16;
  return c;
}

}  // namespace da3::testing
