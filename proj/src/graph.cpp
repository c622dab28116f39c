#include "sgpbae/graph.hpp"

#include <cmath>

#include "sgpbae/linalg.hpp"

namespace sgpbae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Tensor zeros_like(const Tensor& t) {
  return Tensor::zeros({t.rows(), t.cols()});
}

}  // namespace

ExprGraph::NodeId ExprGraph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void ExprGraph::check_same_shape(NodeId a, NodeId b, const char* what) const {
  if (at(a).value.rows() != at(b).value.rows() ||
      at(a).value.cols() != at(b).value.cols()) {
    throw ShapeMismatch(std::string(what) + ": operand shapes differ");
  }
}

ExprGraph::NodeId ExprGraph::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_param = true;
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::add(NodeId a, NodeId b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::Add;
  n.args = {a, b, -1};
  n.value = at(a).value;
  n.value.array() += at(b).value.array();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::sub(NodeId a, NodeId b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.args = {a, b, -1};
  n.value = at(a).value;
  n.value.array() -= at(b).value.array();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::mul(NodeId a, NodeId b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.args = {a, b, -1};
  n.value = at(a).value;
  n.value.array() *= at(b).value.array();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::matmul(NodeId a, NodeId b, bool trans_a,
                                    bool trans_b) {
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  const Eigen::Index ar = trans_a ? va.cols() : va.rows();
  const Eigen::Index ac = trans_a ? va.rows() : va.cols();
  const Eigen::Index br = trans_b ? vb.cols() : vb.rows();
  const Eigen::Index bc = trans_b ? vb.rows() : vb.cols();
  if (ac != br) throw ShapeMismatch("matmul: inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.args = {a, b, -1};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.value = Tensor::zeros({ar, bc});
  if (trans_a && trans_b)
    n.value.mat() = va.mat().transpose() * vb.mat().transpose();
  else if (trans_a)
    n.value.mat() = va.mat().transpose() * vb.mat();
  else if (trans_b)
    n.value.mat() = va.mat() * vb.mat().transpose();
  else
    n.value.mat() = va.mat() * vb.mat();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::exp(NodeId a) {
  Node n;
  n.op = Op::Exp;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().exp();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::log(NodeId a) {
  Node n;
  n.op = Op::Log;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().log();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::sin(NodeId a) {
  Node n;
  n.op = Op::Sin;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().sin();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::tanh(NodeId a) {
  Node n;
  n.op = Op::Tanh;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().tanh();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::relu(NodeId a) {
  Node n;
  n.op = Op::Relu;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().max(0.0);
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::elu(NodeId a) {
  Node n;
  n.op = Op::Elu;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  auto x = at(a).value.array();
  n.value.array() = (x > 0.0).select(x, x.exp() - 1.0);
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::square(NodeId a) {
  Node n;
  n.op = Op::Square;
  n.args = {a, -1, -1};
  n.value = at(a).value;
  n.value.array() = n.value.array().square();
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::sum(NodeId a, Axis axis) {
  const auto& va = at(a).value;
  Node n;
  n.op = Op::Sum;
  n.args = {a, -1, -1};
  n.axis = axis;
  switch (axis) {
    case Axis::All:
      n.value = Tensor::scalar(va.array().sum());
      break;
    case Axis::Rows:  // collapse rows, result 1 x cols
      n.value = Tensor::zeros({1, va.cols()});
      n.value.mat() = va.mat().colwise().sum();
      break;
    case Axis::Cols:  // collapse cols, result rows x 1
      n.value = Tensor::zeros({va.rows(), 1});
      n.value.mat() = va.mat().rowwise().sum();
      break;
  }
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::broadcast(NodeId a, Eigen::Index rows,
                                       Eigen::Index cols) {
  const auto& va = at(a).value;
  const bool from_scalar = va.rows() == 1 && va.cols() == 1;
  const bool from_row = va.rows() == 1 && va.cols() == cols;
  const bool from_col = va.cols() == 1 && va.rows() == rows;
  if (!(from_scalar || from_row || from_col)) {
    throw ShapeMismatch("broadcast: source must be scalar, matching row, or matching column");
  }
  Node n;
  n.op = Op::Broadcast;
  n.args = {a, -1, -1};
  n.value = Tensor::zeros({rows, cols});
  if (from_scalar) {
    n.value.array() = va.value();
  } else if (from_row) {
    n.value.mat() = va.mat().replicate(rows, 1);
  } else {
    n.value.mat() = va.mat().replicate(1, cols);
  }
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::cholesky(NodeId a) {
  Node n;
  n.op = Op::Cholesky;
  n.args = {a, -1, -1};
  n.value = Tensor::from_matrix(cholesky_decompose(RowMat(at(a).value.mat())));
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::triangular_solve(NodeId l, NodeId b,
                                              bool transpose_l) {
  Node n;
  n.op = Op::TriangularSolve;
  n.args = {l, b, -1};
  n.trans_a = transpose_l;
  n.value = Tensor::from_matrix(sgpbae::triangular_solve(
      RowMat(at(l).value.mat()), RowMat(at(b).value.mat()), transpose_l));
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::gaussian_logpdf(NodeId x, NodeId mean, NodeId var) {
  check_same_shape(x, mean, "gaussian_logpdf");
  check_same_shape(x, var, "gaussian_logpdf");
  Node n;
  n.op = Op::GaussianLogPdf;
  n.args = {x, mean, var};
  n.value = at(x).value;
  auto xv = at(x).value.array();
  auto mv = at(mean).value.array();
  auto vv = at(var).value.array();
  n.value.array() = -0.5 * (kLog2Pi + vv.log() + (xv - mv).square() / vv);
  return push(std::move(n));
}

ExprGraph::NodeId ExprGraph::scale(NodeId a, double factor) {
  const auto& va = at(a).value;
  NodeId f = broadcast(constant(factor), va.rows(), va.cols());
  return mul(a, f);
}

ExprGraph::NodeId ExprGraph::add_scalar(NodeId a, double value) {
  const auto& va = at(a).value;
  NodeId c = broadcast(constant(value), va.rows(), va.cols());
  return add(a, c);
}

ExprGraph::NodeId ExprGraph::broadcast_like(NodeId a, NodeId shape_of) {
  const auto& v = at(shape_of).value;
  return broadcast(a, v.rows(), v.cols());
}

ExprGraph::NodeId ExprGraph::chol_log_det(NodeId chol_lower) {
  const Eigen::Index m = at(chol_lower).value.rows();
  NodeId eye = constant(Tensor::identity(m));
  Tensor off = Tensor::constant({m, m}, 1.0);
  off.mat() -= Tensor::identity(m).mat();
  // diag entries of L, ones elsewhere: log leaves only the diagonal terms.
  NodeId diag_or_one = add(mul(chol_lower, eye), constant(off));
  return scale(sum(log(diag_or_one)), 2.0);
}

RowMat cholesky_backward(const RowMat& l, const RowMat& l_bar) {
  // P = Phi(L^T Lbar) with Phi = lower triangle, halved diagonal, then
  // Abar = sym(L^-T P L^-1). Verified against the identity d log|A| = A^-1.
  const Eigen::Index m = l.rows();
  RowMat p = l.transpose() * l_bar;
  for (Eigen::Index i = 0; i < m; ++i) {
    p(i, i) *= 0.5;
    for (Eigen::Index j = i + 1; j < m; ++j) p(i, j) = 0.0;
  }
  RowMat t = triangular_solve(l, p, /*transpose_l=*/true);  // L^-T P
  // S = t * L^-1  ==>  S^T = L^-T t^T.
  RowMat s_t = triangular_solve(l, RowMat(t.transpose()), /*transpose_l=*/true);
  RowMat s = s_t.transpose();
  return 0.5 * (s + s.transpose());
}

std::pair<double, std::unordered_map<ExprGraph::NodeId, Tensor>>
ExprGraph::evaluate_with_gradients(NodeId root) const {
  const Node& root_node = at(root);
  if (root_node.value.size() != 1) {
    throw NonScalarRoot("gradient root must be scalar-valued");
  }

  std::vector<Tensor> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  adj[root] = Tensor::scalar(1.0);
  live[root] = true;

  auto accumulate = [&](NodeId id, const Tensor& g) {
    if (!live[id]) {
      adj[id] = g;
      live[id] = true;
    } else {
      adj[id].array() += g.array();
    }
  };

  for (NodeId id = root; id >= 0; --id) {
    if (!live[id]) continue;
    const Node& n = at(id);
    const Tensor& gbar = adj[id];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(n.args[0], gbar);
        accumulate(n.args[1], gbar);
        break;
      case Op::Sub: {
        accumulate(n.args[0], gbar);
        Tensor gb = gbar;
        gb.array() *= -1.0;
        accumulate(n.args[1], gb);
        break;
      }
      case Op::Mul: {
        Tensor ga = gbar;
        ga.array() *= at(n.args[1]).value.array();
        accumulate(n.args[0], ga);
        Tensor gb = gbar;
        gb.array() *= at(n.args[0]).value.array();
        accumulate(n.args[1], gb);
        break;
      }
      case Op::MatMul: {
        const auto& va = at(n.args[0]).value;
        const auto& vb = at(n.args[1]).value;
        Tensor ga = zeros_like(va);
        Tensor gb = zeros_like(vb);
        const auto g = gbar.mat();
        if (!n.trans_a && !n.trans_b) {
          ga.mat() = g * vb.mat().transpose();
          gb.mat() = va.mat().transpose() * g;
        } else if (n.trans_a && !n.trans_b) {
          ga.mat() = vb.mat() * g.transpose();
          gb.mat() = va.mat() * g;
        } else if (!n.trans_a && n.trans_b) {
          ga.mat() = g * vb.mat();
          gb.mat() = g.transpose() * va.mat();
        } else {
          ga.mat() = vb.mat().transpose() * g.transpose();
          gb.mat() = g.transpose() * va.mat().transpose();
        }
        accumulate(n.args[0], ga);
        accumulate(n.args[1], gb);
        break;
      }
      case Op::Exp: {
        Tensor ga = gbar;
        ga.array() *= n.value.array();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Log: {
        Tensor ga = gbar;
        ga.array() /= at(n.args[0]).value.array();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Sin: {
        Tensor ga = gbar;
        ga.array() *= at(n.args[0]).value.array().cos();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Tanh: {
        Tensor ga = gbar;
        ga.array() *= 1.0 - n.value.array().square();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Relu: {
        Tensor ga = gbar;
        ga.array() *= (at(n.args[0]).value.array() > 0.0).cast<double>();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Elu: {
        Tensor ga = gbar;
        auto x = at(n.args[0]).value.array();
        ga.array() *= (x > 0.0).select(Eigen::ArrayXd::Ones(x.size()), x.exp());
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Square: {
        Tensor ga = gbar;
        ga.array() *= 2.0 * at(n.args[0]).value.array();
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Sum: {
        const auto& va = at(n.args[0]).value;
        Tensor ga = zeros_like(va);
        switch (n.axis) {
          case Axis::All:
            ga.array() = gbar.value();
            break;
          case Axis::Rows:
            ga.mat() = gbar.mat().replicate(va.rows(), 1);
            break;
          case Axis::Cols:
            ga.mat() = gbar.mat().replicate(1, va.cols());
            break;
        }
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Broadcast: {
        const auto& va = at(n.args[0]).value;
        Tensor ga = zeros_like(va);
        if (va.rows() == 1 && va.cols() == 1) {
          ga.data()[0] = gbar.array().sum();
        } else if (va.rows() == 1) {
          ga.mat() = gbar.mat().colwise().sum();
        } else {
          ga.mat() = gbar.mat().rowwise().sum();
        }
        accumulate(n.args[0], ga);
        break;
      }
      case Op::Cholesky: {
        accumulate(n.args[0],
                   Tensor::from_matrix(cholesky_backward(
                       RowMat(n.value.mat()), RowMat(gbar.mat()))));
        break;
      }
      case Op::TriangularSolve: {
        const RowMat lm = at(n.args[0]).value.mat();
        const RowMat x = n.value.mat();
        Tensor gl = zeros_like(at(n.args[0]).value);
        Tensor gb = zeros_like(at(n.args[1]).value);
        if (!n.trans_a) {
          // X = L^-1 B: Bbar = L^-T Xbar, Lbar = -tril(Bbar X^T).
          RowMat bbar =
              sgpbae::triangular_solve(lm, RowMat(gbar.mat()), true);
          gb.mat() = bbar;
          RowMat lbar = -(bbar * x.transpose());
          gl.mat() = lbar.triangularView<Eigen::Lower>();
        } else {
          // X = L^-T B: Bbar = L^-1 Xbar, Lbar = -tril(X Bbar^T).
          RowMat bbar =
              sgpbae::triangular_solve(lm, RowMat(gbar.mat()), false);
          gb.mat() = bbar;
          RowMat lbar = -(x * bbar.transpose());
          gl.mat() = lbar.triangularView<Eigen::Lower>();
        }
        accumulate(n.args[0], gl);
        accumulate(n.args[1], gb);
        break;
      }
      case Op::GaussianLogPdf: {
        auto xv = at(n.args[0]).value.array();
        auto mv = at(n.args[1]).value.array();
        auto vv = at(n.args[2]).value.array();
        Tensor gx = gbar;
        gx.array() *= -(xv - mv) / vv;
        accumulate(n.args[0], gx);
        Tensor gm = gbar;
        gm.array() *= (xv - mv) / vv;
        accumulate(n.args[1], gm);
        Tensor gv = gbar;
        gv.array() *= -0.5 / vv + 0.5 * (xv - mv).square() / vv.square();
        accumulate(n.args[2], gv);
        break;
      }
    }
  }

  std::unordered_map<NodeId, Tensor> grads;
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
    if (!nodes_[id].is_param) continue;
    if (live[id]) {
      grads.emplace(id, std::move(adj[id]));
    } else {
      grads.emplace(id, zeros_like(nodes_[id].value));
    }
  }
  return {root_node.value.value(), std::move(grads)};
}

}  // namespace sgpbae
