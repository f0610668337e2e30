#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "da3/core/tensor.hpp"

namespace da3 {

class Graph;

// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so
// insertion order is a valid topological order and backward simply walks
// the tape in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a trainable tensor. backward() adds into param.grad().
  // With gradients disabled this is recorded as a constant.
  Var parameter(Tensor& param);

  // Used by op implementations.
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::span<const double> out_grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator of an input node, allocated on first use.
  std::span<double> grad_sink(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Seeds d(loss)/d(loss) = 1 and propagates. Node gradients are reset on
  // every call; parameter gradients accumulate across calls.
  void backward(Var loss);

  // Node gradient from the most recent backward (zeros if unreached).
  std::vector<double> grad(Var v) const;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Buffer grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace da3
