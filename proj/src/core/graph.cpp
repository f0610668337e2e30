#include "da3/core/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace da3 {

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.value.drop_grad();
  return push(std::move(n));
}

Var Graph::parameter(Tensor& param) {
  Node n;
  n.op = "parameter";
  n.value = Tensor(param.shape());
  n.value.values() = param.values();
  if (grad_enabled_) {
    n.param = &param;
    n.requires_grad = true;
  }
  return push(std::move(n));
}

Var Graph::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (v.graph != this) throw std::invalid_argument(std::string(op) + ": input from another graph");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

std::span<double> Graph::grad_sink(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss from another graph");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_sink(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto g = n.param->grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

std::vector<double> Graph::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return std::vector<double>(n.grad.begin(), n.grad.end());
}

}  // namespace da3
