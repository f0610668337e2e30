#include "da3/core/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace da3 {

Tensor& ParameterSet::add(std::string name, Tensor init) {
  for (const auto& n : names_)
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(init));
  return tensors_.back();
}

Tensor* ParameterSet::find(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return &tensors_[i];
  return nullptr;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (names_[i] != other.names_[i] || tensors_[i].shape() != other.tensors_[i].shape()) return false;
  return true;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (!same_layout(other)) throw std::invalid_argument("copy_values_from: parameter layouts differ");
  for (std::size_t i = 0; i < size(); ++i) tensors_[i].values() = other.tensors_[i].values();
}

namespace init {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

}  // namespace init

std::uint64_t parameter_checksum(const ParameterSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double v : params.at(i).data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace da3
