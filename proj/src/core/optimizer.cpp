#include "da3/core/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace da3 {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
  if (!(config_.learning_rate > 0.0) || !(config_.beta1 > 0.0) || !(config_.beta2 > 0.0) || !(config_.epsilon > 0.0)) {
    throw std::invalid_argument("Adam: learning rate, betas and epsilon must be positive");
  }
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.at(i).size(), 0.0);
    v_.emplace_back(params.at(i).size(), 0.0);
  }
}

void Adam::step() {
  if (m_.size() != params_.size()) throw std::logic_error("Adam: parameter set changed after construction");
  double scale = 1.0;
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_.at(i);
    if (!p.has_grad()) throw std::invalid_argument("Adam: missing gradient for parameter " + params_.name(i));
    for (double g : p.grad()) norm_sq += g * g;
  }
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_.at(i);
    auto g = std::as_const(p).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k] * scale;
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      p[k] -= config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
    }
  }
}

}  // namespace da3
