#pragma once

// Central finite-difference oracle. Only ever evaluates the forward pass, so
// it is independent of the backward implementations it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "da3/core/graph.hpp"
#include "da3/core/parameters.hpp"

namespace da3::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using LossBuilder = std::function<Var(Graph&)>;

inline double eval_loss(const LossBuilder& build) {
  Graph g(false);
  return build(g).value()[0];
}

inline GradCheckResult check_gradients(ParameterSet& params, const LossBuilder& build, double h = 1e-6,
                                       double floor = 1e-6) {
  params.zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = params.at(p);
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = eval_loss(build);
      t[i] = orig - h;
      const double down = eval_loss(build);
      t[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = relative_error(analytic[i], numeric, floor);
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = params.name(p) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace da3::testing
