#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pfl/tensor.hpp"

namespace pfl {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so recording
/// order is already a topological order and backward is a single reverse
/// sweep. A Graph is single-threaded and owns every intermediate value.
class Graph {
 public:
  // Propagates `grad_out` of the node into its inputs via Graph::accumulate.
  using BackwardFn = std::function<void(const Tensor& grad_out, Graph& graph)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Named leaf whose gradient is reported by backward().
  Var parameter(const std::string& name, Tensor value);

  // Leaves that refer to a tensor owned elsewhere; it must outlive the graph
  // and stay unmodified while the graph is in use.
  Var constant_ref(const Tensor& value);
  Var parameter_ref(const std::string& name, const Tensor& value);

  /// Appends an op node. `backward` may be empty when no input needs a
  /// gradient.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `contribution` into the gradient buffer of `target` (no-op for
  /// nodes that do not require a gradient).
  void accumulate(Var target, const Tensor& contribution);
  /// Mutable gradient buffer of `target`, zero-initialized on first use.
  Tensor& grad_buffer(Var target);

  /// Gradient of the scalar `loss` with respect to every parameter leaf.
  /// Parameters the loss does not depend on get a zero tensor.
  /// Throws ShapeError if `loss` is not a single element.
  std::map<std::string, Tensor> backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param;  // non-empty for parameter leaves
    const Tensor* external = nullptr;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

namespace ag {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[rows x n] + bias broadcast over rows (bias has n elements).
Var add_bias(Var a, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var gelu(Var a);
/// Softmax along `axis` (1 = within each row, 0 = within each column).
Var softmax(Var x, std::size_t axis);
/// Per-row normalization over the last axis.
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Rows of `a` at `indices`, in that order.
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var sum(Var a);
/// -log softmax(logits)[label] for a single row of logits.
Var cross_entropy(Var logits, std::size_t label);

}  // namespace ag

// Tanh-approximated GELU and its derivative (plain doubles).
double gelu(double x);
double gelu_grad(double x);

}  // namespace pfl
