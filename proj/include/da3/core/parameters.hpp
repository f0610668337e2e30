#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "da3/core/tensor.hpp"

namespace da3 {

using Rng = std::mt19937_64;

// Ordered collection of named trainable tensors. Addresses are stable for
// the lifetime of the set, so models may hold references to entries.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Tensor& add(std::string name, Tensor init);

  std::size_t size() const { return tensors_.size(); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor* find(const std::string& name);

  std::size_t scalar_count() const;
  void zero_grad();

  // Bit-exact value copy; names and shapes must match.
  void copy_values_from(const ParameterSet& other);
  bool same_layout(const ParameterSet& other) const;

 private:
  std::deque<Tensor> tensors_;
  std::vector<std::string> names_;
};

namespace init {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal(Shape shape, double stddev, Rng& rng);
Tensor zeros(Shape shape);
Tensor ones(Shape shape);

}  // namespace init

// 64-bit FNV-1a over the little-endian byte image of all parameter values.
std::uint64_t parameter_checksum(const ParameterSet& params);

}  // namespace da3
