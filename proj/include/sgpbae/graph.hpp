#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sgpbae/tensor.hpp"

namespace sgpbae {

// Reverse-mode tape over a fixed op vocabulary. Values are evaluated
// eagerly when a node is created, so node order is always a valid
// topological order. One graph per chain/thread; no sharing mid-eval.
class ExprGraph {
 public:
  using NodeId = std::int32_t;

  enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,       // elementwise
    MatMul,    // with transpose flags
    Exp,
    Log,
    Sin,
    Tanh,
    Relu,
    Elu,       // alpha = 1
    Square,
    Sum,       // axis attribute
    Broadcast, // 1x1, 1xC or Rx1 up to RxC
    Cholesky,
    TriangularSolve,
    GaussianLogPdf,  // elementwise log N(x; mu, var)
  };

  enum class Axis : std::uint8_t { All, Rows, Cols };

  NodeId parameter(Tensor value);
  NodeId constant(Tensor value);
  NodeId constant(double value) { return constant(Tensor::scalar(value)); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sin(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId elu(NodeId a);
  NodeId square(NodeId a);
  NodeId sum(NodeId a, Axis axis = Axis::All);
  NodeId broadcast(NodeId a, Eigen::Index rows, Eigen::Index cols);
  NodeId cholesky(NodeId a);
  NodeId triangular_solve(NodeId l, NodeId b, bool transpose_l = false);
  NodeId gaussian_logpdf(NodeId x, NodeId mean, NodeId var);

  // Conveniences that expand into the primitive vocabulary.
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double value);
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  NodeId broadcast_like(NodeId a, NodeId shape_of);
  // 2 * sum(log(diag(L))), built from mul/add/log/sum with constant masks.
  NodeId chol_log_det(NodeId chol_lower);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  double scalar_value(NodeId id) const { return nodes_[id].value.value(); }
  std::size_t size() const { return nodes_.size(); }
  bool is_parameter(NodeId id) const { return nodes_[id].is_param; }

  // Root must be scalar-valued. Returns the root value and the gradient
  // tensor for every parameter leaf.
  std::pair<double, std::unordered_map<NodeId, Tensor>> evaluate_with_gradients(
      NodeId root) const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::array<NodeId, 3> args{{-1, -1, -1}};
    Tensor value;
    bool is_param = false;
    bool trans_a = false;
    bool trans_b = false;
    Axis axis = Axis::All;
  };

  NodeId push(Node node);
  const Node& at(NodeId id) const { return nodes_[id]; }
  void check_same_shape(NodeId a, NodeId b, const char* what) const;

  std::vector<Node> nodes_;
};

// Gradient of the Cholesky factorization: given L = chol(A) and the adjoint
// of L, returns the (symmetric) adjoint of A. Exposed for testing.
RowMat cholesky_backward(const RowMat& l, const RowMat& l_bar);

}  // namespace sgpbae
