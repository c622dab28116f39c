#include "sgpbae/graph.hpp"

#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "sgpbae/linalg.hpp"
#include "sgpbae/rng.hpp"

using namespace sgpbae;
using sgpbae::testing::finite_difference_gradients;
using sgpbae::testing::max_group_relative_error;

namespace {

RowMat random_spd(Rng& rng, Eigen::Index n) {
  RowMat b = rng.normal_matrix(n, n);
  RowMat a = b * b.transpose();
  a.diagonal().array() += static_cast<double>(n);
  return a;
}

// Reduce a node to a scalar through fixed constant weights so every entry
// of the output influences the root.
ExprGraph::NodeId weighted_sum(ExprGraph& g, ExprGraph::NodeId x,
                               const RowMat& w) {
  return g.sum(g.mul(x, g.constant(Tensor::from_matrix(w))));
}

struct OpZoo {
  RowMat wab, wmm, wch, wts;

  explicit OpZoo(Rng& rng)
      : wab(rng.normal_matrix(3, 4)),
        wmm(rng.normal_matrix(3, 2)),
        wch(rng.normal_matrix(3, 3)),
        wts(rng.normal_matrix(3, 2)) {}

  // Exercises every op kind at least once; params are
  // {a 3x4, b 3x4, m 4x2, spd 3x3, rhs 3x2}.
  std::pair<ExprGraph::NodeId, std::vector<ExprGraph::NodeId>> build(
      ExprGraph& g, const std::vector<Tensor>& p) const {
    auto a = g.parameter(p[0]);
    auto b = g.parameter(p[1]);
    auto m = g.parameter(p[2]);
    auto s = g.parameter(p[3]);
    auto r = g.parameter(p[4]);

    auto ew = g.add(g.mul(g.tanh(a), g.exp(g.scale(b, 0.25))),
                    g.sub(g.square(a), g.elu(b)));
    ew = g.add(ew, g.relu(g.sub(a, b)));
    ew = g.add(ew, g.sin(a));
    ew = g.add(ew, g.log(g.add_scalar(g.square(b), 1.0)));
    ew = g.add(ew, g.gaussian_logpdf(a, b, g.add_scalar(g.square(b), 0.5)));
    auto t1 = weighted_sum(g, ew, wab);

    auto mm = g.matmul(a, m);                // 3x2
    auto mmt = g.matmul(m, a, true, true);   // 2x3
    auto both = g.add(mm, g.matmul(g.constant(Tensor::identity(3)), mmt,
                                   false, true));
    auto t2 = weighted_sum(g, both, wmm);

    auto chol = g.cholesky(s);
    auto t3 = weighted_sum(g, chol, wch);
    auto solved = g.add(g.triangular_solve(chol, r),
                        g.triangular_solve(chol, r, true));
    auto t4 = weighted_sum(g, solved, wts);
    auto t5 = g.chol_log_det(chol);

    auto col = g.sum(a, ExprGraph::Axis::Cols);  // 3x1
    auto row = g.sum(b, ExprGraph::Axis::Rows);  // 1x4
    auto spread = g.mul(g.broadcast(col, 3, 4), g.broadcast(row, 3, 4));
    auto t6 = weighted_sum(g, spread, wab);
    auto t7 = weighted_sum(g, g.broadcast(g.scale(g.sum(a), 0.1), 3, 4), wab);

    auto root = g.add(g.add(g.add(t1, t2), g.add(t3, t4)),
                      g.add(g.add(t5, t6), t7));
    return {root, {a, b, m, s, r}};
  }

  double eval(const std::vector<Tensor>& p) const {
    ExprGraph g;
    auto [root, ids] = build(g, p);
    (void)ids;
    return g.value(root).value();
  }
};

}  // namespace

TEST_CASE("square of a scalar parameter") {
  ExprGraph g;
  auto x = g.parameter(Tensor::scalar(3.0));
  auto y = g.square(x);
  auto [value, grads] = g.evaluate_with_gradients(y);
  CHECK(value == doctest::Approx(9.0));
  CHECK(grads.at(x).value() == doctest::Approx(6.0));
}

TEST_CASE("sum tanh(W v) matches finite differences") {
  Rng rng(11);
  const RowMat w0 = rng.normal_matrix(4, 3);
  const Eigen::VectorXd v = rng.normal_vector(3);

  auto eval = [&](const std::vector<Tensor>& params) {
    ExprGraph g;
    auto w = g.parameter(params[0]);
    auto vv = g.constant(Tensor::column(v));
    return g.value(g.sum(g.tanh(g.matmul(w, vv)))).value();
  };

  ExprGraph g;
  auto w = g.parameter(Tensor::from_matrix(w0));
  auto vv = g.constant(Tensor::column(v));
  auto root = g.sum(g.tanh(g.matmul(w, vv)));
  auto [value, grads] = g.evaluate_with_gradients(root);
  CHECK(value == doctest::Approx(eval({Tensor::from_matrix(w0)})));

  auto fd = finite_difference_gradients(eval, {Tensor::from_matrix(w0)});
  CHECK(max_group_relative_error({grads.at(w)}, fd) < 1e-5);
}

TEST_CASE("gaussian logpdf gradient vanishes at the mean") {
  ExprGraph g;
  auto mu = g.parameter(Tensor::scalar(0.7));
  auto z = g.constant(Tensor::scalar(0.7));
  auto var = g.constant(Tensor::scalar(1.0));
  auto root = g.sum(g.gaussian_logpdf(z, mu, var));
  auto [value, grads] = g.evaluate_with_gradients(root);
  CHECK(value == doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
  CHECK(grads.at(mu).value() == doctest::Approx(0.0));
}

TEST_CASE("every op matches central finite differences over 100 seeds") {
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + static_cast<std::uint64_t>(seed));
    std::vector<Tensor> params = {
        Tensor::from_matrix(rng.normal_matrix(3, 4)),
        Tensor::from_matrix(rng.normal_matrix(3, 4)),
        Tensor::from_matrix(rng.normal_matrix(4, 2)),
        Tensor::from_matrix(random_spd(rng, 3)),
        Tensor::from_matrix(rng.normal_matrix(3, 2))};
    OpZoo zoo(rng);

    ExprGraph g;
    auto [root, ids] = zoo.build(g, params);
    auto [value, grads] = g.evaluate_with_gradients(root);
    (void)value;

    auto fd = finite_difference_gradients(
        [&zoo](const std::vector<Tensor>& p) { return zoo.eval(p); }, params);
    std::vector<Tensor> analytic;
    for (auto id : ids) analytic.push_back(grads.at(id));
    worst = std::max(worst, max_group_relative_error(analytic, fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient of cholesky log-determinant is the inverse") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const RowMat a0 = random_spd(rng, 4);
    ExprGraph g;
    auto a = g.parameter(Tensor::from_matrix(a0));
    auto root = g.chol_log_det(g.cholesky(a));
    auto [value, grads] = g.evaluate_with_gradients(root);
    const RowMat inv = a0.inverse();
    CHECK(std::abs(value - std::log(a0.determinant())) < 1e-8);
    CHECK((RowMat(grads.at(a).mat()) - inv).norm() < 1e-6 * inv.norm());
  }
}

TEST_CASE("shape errors") {
  ExprGraph g;
  auto a = g.parameter(Tensor::zeros({2, 3}));
  auto b = g.parameter(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS((void)g.add(a, b), ShapeMismatch);
  CHECK_THROWS_AS((void)g.matmul(a, b, false, true), ShapeMismatch);
  CHECK_THROWS_AS((void)g.broadcast(a, 4, 4), ShapeMismatch);
  CHECK_THROWS_AS((void)g.evaluate_with_gradients(a), NonScalarRoot);
}

TEST_CASE("values are cached eagerly in construction order") {
  ExprGraph g;
  auto a = g.parameter(Tensor::scalar(2.0));
  auto b = g.exp(a);
  auto c = g.mul(b, b);
  CHECK(g.value(c).value() == doctest::Approx(std::exp(4.0)));
  CHECK(g.size() == 3);
}
