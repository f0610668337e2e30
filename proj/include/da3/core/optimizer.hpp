#pragma once

#include <cstdint>
#include <vector>

#include "da3/core/parameters.hpp"

namespace da3 {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

// Bias-corrected Adam over a ParameterSet. Moment buffers start at zero.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config = {});

  // Applies one update from the gradients currently stored on the
  // parameters. Throws if any parameter has no gradient buffer.
  void step();

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const std::vector<Buffer>& first_moment() const { return m_; }
  const std::vector<Buffer>& second_moment() const { return v_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  std::vector<Buffer> m_;
  std::vector<Buffer> v_;
  std::uint64_t step_ = 0;
};

}  // namespace da3
