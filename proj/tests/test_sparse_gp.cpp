#include "sgpbae/sparse_gp.hpp"

#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "sgpbae/linalg.hpp"

using namespace sgpbae;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

KernelParams params_of(double lengthscale, double variance) {
  KernelParams p;
  p.log_lengthscales = Eigen::VectorXd::Constant(1, std::log(lengthscale));
  p.log_variance = std::log(variance);
  return p;
}

UniformBox unit_box(Eigen::Index dim) {
  UniformBox b;
  b.lo = Eigen::VectorXd::Constant(dim, -0.5);
  b.hi = Eigen::VectorXd::Constant(dim, 0.5);
  return b;
}

UniformBox wide_box(Eigen::Index dim) {
  UniformBox b;
  b.lo = Eigen::VectorXd::Constant(dim, -100.0);
  b.hi = Eigen::VectorXd::Constant(dim, 100.0);
  return b;
}

// S spread far apart relative to the lengthscale so K_SS underflows to a
// scaled identity.
SparseGPPrior white_prior(Eigen::Index m, Eigen::Index c, double variance) {
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(1e-3, variance);
  prior.inducing.s = RowMat::Zero(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) prior.inducing.s(i, 0) = 0.4 * i / m - 0.2;
  prior.inducing.u = RowMat::Zero(m, c);
  prior.sigma2 = 0.0;
  prior.inducing_input_prior = unit_box(1);
  return prior;
}

}  // namespace

TEST_CASE("fitc interpolates the inducing values") {
  Rng rng(7);
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.inducing.s = RowMat(3, 1);
  prior.inducing.s << -1.0, 0.2, 1.4;
  prior.inducing.u = rng.normal_matrix(3, 2);
  prior.inducing_input_prior = wide_box(1);

  // The relative jitter policy caps interpolation accuracy near
  // 1e-6 * |u|, so the tight tolerances need a small-scale instance.
  SUBCASE("small-scale instance interpolates to 1e-10") {
    prior.params = params_of(1.0, 1e-5);
    prior.inducing.u *= 1e-5;
    const FitcMoments m = fitc_moments(prior, prior.inducing.s.topRows(1));
    CHECK((m.mean.row(0) - prior.inducing.u.row(0)).norm() < 1e-10);
    CHECK(m.var[0] >= 0.0);
    CHECK(m.var[0] < 1e-10);
  }
  SUBCASE("unit-scale instance is limited by the jitter policy") {
    prior.params = params_of(1.0, 1.0);
    const FitcMoments m = fitc_moments(prior, prior.inducing.s.topRows(1));
    CHECK((m.mean.row(0) - prior.inducing.u.row(0)).norm() < 2e-5);
    CHECK(m.var[0] < 2.1 * kJitterRelative);
  }
}

TEST_CASE("fitc matches a hand-built dense 2x2 inverse") {
  Rng rng(8);
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(0.9, 1.3);
  prior.inducing.s = RowMat(2, 1);
  prior.inducing.s << -0.3, 0.8;
  prior.inducing.u = rng.normal_matrix(2, 1);
  prior.inducing_input_prior = wide_box(1);
  RowMat x(1, 1);
  x << 0.25;

  const FitcMoments m = fitc_moments(prior, x);

  // Oracle: explicit 2x2 inverse of K_SS + jitter.
  auto k = [&](double a, double b) {
    return 1.3 * std::exp(-0.5 * (a - b) * (a - b) / (0.9 * 0.9));
  };
  const double j = 1e-6 * 1.3;
  const double k11 = k(-0.3, -0.3) + j, k12 = k(-0.3, 0.8);
  const double k22 = k(0.8, 0.8) + j;
  const double det = k11 * k22 - k12 * k12;
  const double i11 = k22 / det, i12 = -k12 / det, i22 = k11 / det;
  const double kx1 = k(0.25, -0.3), kx2 = k(0.25, 0.8);
  const double u1 = prior.inducing.u(0, 0), u2 = prior.inducing.u(1, 0);
  const double mean =
      kx1 * (i11 * u1 + i12 * u2) + kx2 * (i12 * u1 + i22 * u2);
  const double var = k(0.25, 0.25) - (kx1 * (i11 * kx1 + i12 * kx2) +
                                      kx2 * (i12 * kx1 + i22 * kx2));
  CHECK(m.mean(0, 0) == doctest::Approx(mean).epsilon(1e-10));
  CHECK(m.var[0] == doctest::Approx(var).epsilon(1e-8));
}

TEST_CASE("fitc mean is linear in u") {
  Rng rng(9);
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(1.1, 0.8);
  prior.inducing.s = rng.normal_matrix(4, 2);
  prior.params.log_lengthscales = Eigen::VectorXd::Zero(2);
  prior.inducing.u = RowMat::Zero(4, 3);
  prior.inducing_input_prior = wide_box(2);
  RowMat x = rng.normal_matrix(5, 2);

  const FitcMoments zero = fitc_moments(prior, x);
  CHECK(zero.mean.norm() == 0.0);

  prior.inducing.u = rng.normal_matrix(4, 3);
  const FitcMoments m1 = fitc_moments(prior, x);
  prior.inducing.u *= 2.0;
  const FitcMoments m2 = fitc_moments(prior, x);
  CHECK((m2.mean - 2.0 * m1.mean).norm() < 1e-12);
  CHECK((m2.var - m1.var).norm() == 0.0);  // variance ignores u
  CHECK((m1.var - zero.var).norm() == 0.0);
}

TEST_CASE("fitc equals the dense conditional when S == X") {
  Rng rng(10);
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(1.0, 1e-5);  // keeps jitter effects below 1e-8
  prior.inducing.s = rng.normal_matrix(6, 2);
  prior.params.log_lengthscales = Eigen::VectorXd::Zero(2);
  prior.inducing.u = 1e-3 * rng.normal_matrix(6, 2);
  prior.inducing_input_prior = wide_box(2);

  const FitcMoments m = fitc_moments(prior, prior.inducing.s);
  CHECK((m.mean - prior.inducing.u).norm() < 1e-8);
  CHECK(m.var.maxCoeff() < 1e-8);

  // At unit scale the deviation is bounded by the jitter policy instead.
  prior.params = params_of(1.0, 1.0);
  prior.params.log_lengthscales = Eigen::VectorXd::Zero(2);
  prior.inducing.u = rng.normal_matrix(6, 2);
  const FitcMoments m1 = fitc_moments(prior, prior.inducing.s);
  CHECK((m1.mean - prior.inducing.u).norm() <
        100 * kJitterRelative * prior.inducing.u.norm());
}

TEST_CASE("latent marginal log density closed forms") {
  RowMat z(1, 1), mean(1, 1);
  z << 0.4;
  mean << 0.4;
  Eigen::VectorXd var(1);
  var << 0.75;
  CHECK(latent_marginal_logpdf(z, mean, var, 0.25) ==
        doctest::Approx(-0.5 * kLog2Pi));

  Eigen::VectorXd var2(1);
  var2 << 1.75;
  CHECK(latent_marginal_logpdf(z, mean, var, 0.25) -
            latent_marginal_logpdf(z, mean, var2, 0.25) ==
        doctest::Approx(0.5 * std::log(2.0)));
}

TEST_CASE("latent marginal equals a sum of scalar densities") {
  Rng rng(12);
  RowMat z = rng.normal_matrix(3, 2);
  RowMat mean = rng.normal_matrix(3, 2);
  Eigen::VectorXd var(3);
  var << 0.3, 1.2, 0.9;
  const double sigma2 = 0.05;

  double oracle = 0.0;
  for (int n = 0; n < 3; ++n) {
    for (int c = 0; c < 2; ++c) {
      const double v = var[n] + sigma2;
      const double d = z(n, c) - mean(n, c);
      oracle += -0.5 * std::log(2.0 * M_PI * v) - d * d / (2.0 * v);
    }
  }
  CHECK(latent_marginal_logpdf(z, mean, var, sigma2) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("channel permutation leaves the total unchanged") {
  Rng rng(13);
  RowMat z = rng.normal_matrix(4, 3);
  RowMat mean = rng.normal_matrix(4, 3);
  Eigen::VectorXd var = rng.normal_vector(4).array().abs() + 0.1;
  const double base = latent_marginal_logpdf(z, mean, var, 0.01);
  RowMat zp(4, 3), mp(4, 3);
  zp << z.col(2), z.col(0), z.col(1);
  mp << mean.col(2), mean.col(0), mean.col(1);
  CHECK(latent_marginal_logpdf(zp, mp, var, 0.01) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("inducing prior at the white-kernel limit") {
  SparseGPPrior prior = white_prior(3, 2, 1.0);
  const double expected = -0.5 * 3 * 2 * kLog2Pi;  // unit box adds zero
  CHECK(log_prior_inducing(prior) == doctest::Approx(expected).epsilon(1e-4));

  prior.inducing.u = RowMat::Constant(3, 2, 0.7);
  const double at_u = log_prior_inducing(prior);
  prior.inducing.u *= 2.0;
  const double at_2u = log_prior_inducing(prior);
  CHECK(at_u - at_2u ==
        doctest::Approx(0.5 * 3.0 * (0.7 * 0.7) * 6.0).epsilon(1e-4));

  prior.inducing.s(0, 0) = 2.0;  // outside the unit box
  CHECK(log_prior_inducing(prior) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("dense GP prior against the iid and MVN oracles") {
  Rng rng(14);
  SUBCASE("identity covariance reduces to iid normals") {
    KernelParams p = params_of(1e-3, 1.0);
    RowMat x(4, 1);
    x << 0.0, 1.0, 2.0, 3.0;
    RowMat z = rng.normal_matrix(4, 2);
    const double expected = -0.5 * z.array().square().sum() - 4.0 * kLog2Pi;
    CHECK(dense_gp_log_prior(z, x, KernelKind::rbf_ard(), p) ==
          doctest::Approx(expected).epsilon(1e-5));
  }
  SUBCASE("random instance matches inverse-and-determinant formula") {
    KernelParams p = params_of(0.8, 1.4);
    RowMat x = rng.normal_matrix(4, 1);
    RowMat z = rng.normal_matrix(4, 2);
    RowMat k = kernel_matrix(KernelKind::rbf_ard(), p, x, x);
    k.diagonal().array() += 1e-6 * k.diagonal().mean();
    const Eigen::MatrixXd kd(k);
    double oracle = 0.0;
    const Eigen::MatrixXd kinv = kd.inverse();
    const double logdet = std::log(kd.determinant());
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd zc = z.col(c);
      oracle += -0.5 * zc.dot(kinv * zc) - 0.5 * (logdet + 4.0 * kLog2Pi);
    }
    CHECK(dense_gp_log_prior(z, x, KernelKind::rbf_ard(), p) ==
          doctest::Approx(oracle).epsilon(1e-9));
  }
  SUBCASE("zero latents leave only the normalizer") {
    KernelParams p = params_of(1.2, 0.7);
    RowMat x = rng.normal_matrix(5, 1);
    RowMat z = RowMat::Zero(5, 3);
    RowMat k = kernel_matrix(KernelKind::rbf_ard(), p, x, x);
    k.diagonal().array() += 1e-6 * k.diagonal().mean();
    const double logdet = 2.0 * cholesky_decompose(k).diagonal().array().log().sum();
    CHECK(dense_gp_log_prior(z, x, KernelKind::rbf_ard(), p) ==
          doctest::Approx(-0.5 * 3.0 * (logdet + 5.0 * kLog2Pi)));
  }
  SUBCASE("guard rejects large N") {
    KernelParams p = params_of(1.0, 1.0);
    RowMat x = RowMat::Zero(kDenseGpGuard + 1, 1);
    RowMat z = RowMat::Zero(kDenseGpGuard + 1, 1);
    CHECK_THROWS_AS((void)dense_gp_log_prior(z, x, KernelKind::rbf_ard(), p),
                    TooLarge);
  }
}

TEST_CASE("deep GP with one layer is fitc_moments, rng untouched") {
  Rng rng(15);
  SparseGPPrior layer;
  layer.kind = KernelKind::rbf_ard();
  layer.params = params_of(1.0, 1.0);
  layer.inducing.s = rng.normal_matrix(4, 1);
  layer.inducing.u = rng.normal_matrix(4, 2);
  layer.inducing_input_prior = wide_box(1);
  DeepGPPrior deep;
  deep.layers = {layer};
  RowMat x = rng.normal_matrix(3, 1);

  Rng r1(99), r2(99);
  const FitcMoments direct = fitc_moments(layer, x);
  const FitcMoments viadeep = deep_gp_propagate(deep, x, r1);
  CHECK((direct.mean - viadeep.mean).norm() == 0.0);
  CHECK((direct.var - viadeep.var).norm() == 0.0);
  CHECK(r1.normal() == r2.normal());  // rng was never consumed
}

TEST_CASE("two-layer propagation matches a scripted trace") {
  Rng rng(16);
  SparseGPPrior l1;
  l1.kind = KernelKind::rbf_ard();
  l1.params = params_of(0.9, 1.1);
  l1.inducing.s = rng.normal_matrix(3, 1);
  l1.inducing.u = rng.normal_matrix(3, 1);
  l1.inducing_input_prior = wide_box(1);
  SparseGPPrior l2 = l1;
  l2.params = params_of(1.3, 0.8);
  l2.inducing.s = rng.normal_matrix(3, 1);
  l2.inducing.u = rng.normal_matrix(3, 1);
  DeepGPPrior deep;
  deep.layers = {l1, l2};
  RowMat x(1, 1);
  x << 0.3;

  Rng ra(1234), rb(1234);
  const FitcMoments out = deep_gp_propagate(deep, x, ra);

  const FitcMoments h = fitc_moments(l1, x);
  RowMat eps = rb.normal_matrix(1, 1);
  RowMat hidden = h.mean + (eps.array().colwise() * h.var.array().sqrt()).matrix();
  const FitcMoments expect = fitc_moments(l2, hidden);
  CHECK((out.mean - expect.mean).norm() == 0.0);
  CHECK((out.var - expect.var).norm() == 0.0);
}

TEST_CASE("noise-free interpolation composes the u maps") {
  Rng rng(17);
  SparseGPPrior l1;
  l1.kind = KernelKind::rbf_ard();
  l1.params = params_of(1.0, 1e-6);
  l1.inducing.s = RowMat(3, 1);
  l1.inducing.s << -1.0, 0.0, 1.0;
  l1.inducing.u = rng.normal_matrix(3, 1);
  l1.inducing_input_prior = wide_box(1);
  SparseGPPrior l2 = l1;
  l2.inducing.s = l1.inducing.u;  // second layer pinned at layer-1 outputs
  l2.inducing.u = rng.normal_matrix(3, 1);
  DeepGPPrior deep;
  deep.layers = {l1, l2};

  Rng r(5);
  const FitcMoments out = deep_gp_propagate(deep, l1.inducing.s, r);
  CHECK((out.mean - l2.inducing.u).norm() < 1e-4);
}

TEST_CASE("predict_latent modes") {
  Rng rng(18);
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(1.0, 1e-5);
  prior.inducing.s = RowMat(3, 1);
  prior.inducing.s << -1.5, 0.0, 1.5;
  prior.inducing.u = 1e-4 * rng.normal_matrix(3, 2);
  prior.sigma2 = 0.0;
  prior.inducing_input_prior = wide_box(1);

  Rng r(3);
  RowMat mean = predict_latent(prior, prior.inducing.s.topRows(1), r, PredictMode::Mean);
  CHECK((mean.row(0) - prior.inducing.u.row(0)).norm() < 1e-9);

  RowMat sample =
      predict_latent(prior, prior.inducing.s.topRows(1), r, PredictMode::Sample);
  CHECK((sample.row(0) - prior.inducing.u.row(0)).norm() < 1e-4);
}

TEST_CASE("sample mode recovers the predictive variance") {
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params = params_of(0.7, 1.5);
  prior.inducing.s = RowMat(2, 1);
  prior.inducing.s << -0.5, 0.5;
  prior.inducing.u = RowMat::Zero(2, 1);
  prior.sigma2 = 0.02;
  prior.inducing_input_prior = wide_box(1);
  RowMat x(1, 1);
  x << 2.0;

  const FitcMoments m = fitc_moments(prior, x);
  const double target = m.var[0] + prior.sigma2;
  Rng r(77);
  double sum = 0.0, sq = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const double v = predict_latent(prior, x, r, PredictMode::Sample)(0, 0);
    sum += v;
    sq += v * v;
  }
  const double var = sq / draws - (sum / draws) * (sum / draws);
  CHECK(std::abs(var - target) / target < 0.03);
}

TEST_CASE("graph fitc agrees with the direct route and finite differences") {
  Rng rng(19);
  const Eigen::Index m = 3, b = 4, c = 2, dim = 1;
  const RowMat x0 = rng.normal_matrix(b, dim);
  const RowMat s0 = rng.normal_matrix(m, dim);
  const RowMat u0 = rng.normal_matrix(m, c);
  const RowMat z0 = rng.normal_matrix(b, c);
  const double sigma2 = 0.04;

  auto build = [&](ExprGraph& g, const std::vector<Tensor>& p,
                   std::vector<ExprGraph::NodeId>& ids) {
    auto s = g.parameter(p[0]);
    auto u = g.parameter(p[1]);
    auto ls = g.parameter(p[2]);
    auto lv = g.parameter(p[3]);
    auto z = g.parameter(p[4]);
    ids = {s, u, ls, lv, z};
    auto x = g.constant(Tensor::from_matrix(x0));
    auto chol = gp_chol_kss_graph(g, KernelKind::rbf_ard(), s, ls, lv, 1.0);
    auto fitc = fitc_moments_graph(g, KernelKind::rbf_ard(), x, s, ls, lv, chol, u);
    auto var = g.add_scalar(fitc.var, sigma2);
    auto ll = g.sum(g.gaussian_logpdf(z, fitc.mean, g.broadcast(var, b, c)));
    return g.add(ll, log_prior_inducing_graph(g, chol, u));
  };

  std::vector<Tensor> params = {
      Tensor::from_matrix(s0), Tensor::from_matrix(u0),
      Tensor::row(Eigen::VectorXd::Constant(dim, -0.1)), Tensor::scalar(0.2),
      Tensor::from_matrix(z0)};

  ExprGraph g;
  std::vector<ExprGraph::NodeId> ids;
  auto root = build(g, params, ids);
  auto [value, grads] = g.evaluate_with_gradients(root);

  // Value agrees with the plain implementations.
  SparseGPPrior prior;
  prior.kind = KernelKind::rbf_ard();
  prior.params.log_lengthscales = Eigen::VectorXd::Constant(dim, -0.1);
  prior.params.log_variance = 0.2;
  prior.inducing.s = s0;
  prior.inducing.u = u0;
  prior.sigma2 = sigma2;
  prior.inducing_input_prior = wide_box(dim);
  const FitcMoments fm = fitc_moments(prior, x0);
  const double plain = latent_marginal_logpdf(z0, fm.mean, fm.var, sigma2);
  // The graph builder excludes the constant uniform-box term.
  const double box_term = static_cast<double>(m) *
                          prior.inducing_input_prior.log_density_per_row();
  CHECK(value == doctest::Approx(plain + log_prior_inducing(prior) - box_term)
                     .epsilon(1e-9));

  auto fd = sgpbae::testing::finite_difference_gradients(
      [&](const std::vector<Tensor>& p) {
        ExprGraph gg;
        std::vector<ExprGraph::NodeId> tmp;
        return gg.value(build(gg, p, tmp)).value();
      },
      params);
  std::vector<Tensor> analytic;
  for (auto id : ids) analytic.push_back(grads.at(id));
  CHECK(sgpbae::testing::max_group_relative_error(analytic, fd) < 1e-5);
}
