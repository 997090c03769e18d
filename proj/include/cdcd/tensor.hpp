#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdcd/rng.hpp"

namespace cdcd {

/// Dense row-major tensor of doubles. A rank-0 tensor (empty shape) holds one value.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  /// Extent of the last axis (1 for scalars).
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  /// Product of all leading extents.
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

using NodeId = std::size_t;

/// Closed op set of the graph. Matrix multiply accepts rank-2 operands or
/// rank-3 batches with matching leading extent.
enum class Op {
  Constant,
  Parameter,
  Add,
  Mul,
  MatMul,
  Affine,
  Softmax,
  LogSoftmax,
  LayerNorm,
  Gelu,
  Relu,
  Gather,
  Sum,
  Mean,
  SumLast,
  Scale,
  Concat,
  Reshape,
  CrossEntropy,
};

const char* op_name(Op op);

/// Define-by-run tape. Values are computed when a node is appended, so node
/// inputs always precede the node. `recompute()` replays the tape from the
/// current leaf values.
class Graph {
 public:
  NodeId constant(Tensor value);
  NodeId parameter(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  /// x[..., k] * w[k, n] + b[n]
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
  NodeId gelu(NodeId x);
  NodeId relu(NodeId x);
  /// Rows of `table` ([V, d]) selected by `indices`, giving [n, d].
  NodeId gather(NodeId table, std::vector<std::size_t> indices);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId sum_last(NodeId x);
  NodeId scale(NodeId x, double s);
  NodeId concat(std::vector<NodeId> xs);
  NodeId reshape(NodeId x, std::vector<std::size_t> shape);
  /// -sum(target * log p) over entries with target != 0; `target` must be a
  /// constant node and p must be positive wherever target is nonzero.
  NodeId cross_entropy(NodeId p, NodeId target);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& parameters() const { return params_; }

  /// Overwrites a leaf (constant or parameter) value; shape must match.
  void set_leaf(NodeId id, Tensor value);
  /// Re-evaluates every non-leaf node in tape order.
  void recompute();

  /// Reverse-mode gradients of a scalar node with respect to every parameter.
  std::map<NodeId, Tensor> backward(NodeId output) const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    bool needs_grad = false;
    double scalar = 0.0;
    bool flag = false;
    std::vector<std::size_t> index;
    std::vector<double> saved;
  };

  NodeId push(Node node);
  void evaluate(Node& node) const;
  void propagate(const Node& node, const Tensor& grad, std::vector<Tensor>& grads) const;
  const Node& at(NodeId id) const { return nodes_.at(id); }

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
};

/// Builds a scalar loss in `graph` from parameter nodes registered in the
/// same order as the tensors handed to `finite_difference_check`.
using LossBuilder = std::function<NodeId(Graph& graph, std::span<const NodeId> params)>;

/// Max over sampled coordinates of |analytic - central difference| / max(1, |analytic|).
/// The builder must be deterministic across calls.
double finite_difference_check(const LossBuilder& build, std::vector<Tensor> params,
                               double eps, std::size_t max_coords, Stream rng);

}  // namespace cdcd
