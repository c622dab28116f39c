#include "sgpbae/sparse_gp.hpp"

#include <cmath>
#include <limits>

#include "sgpbae/linalg.hpp"

namespace sgpbae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

bool UniformBox::contains(const Eigen::Ref<const RowMat>& s) const {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index d = 0; d < s.cols(); ++d) {
      if (s(i, d) < lo[d] || s(i, d) > hi[d]) return false;
    }
  }
  return true;
}

double UniformBox::log_density_per_row() const {
  double total = 0.0;
  for (Eigen::Index d = 0; d < lo.size(); ++d) {
    total -= std::log(hi[d] - lo[d]);
  }
  return total;
}

UniformBox UniformBox::from_data(const Eigen::Ref<const RowMat>& x,
                                 double expand_fraction) {
  UniformBox box;
  box.lo = x.colwise().minCoeff();
  box.hi = x.colwise().maxCoeff();
  for (Eigen::Index d = 0; d < box.lo.size(); ++d) {
    double width = box.hi[d] - box.lo[d];
    if (width <= 0.0) width = 1.0;  // degenerate column
    box.lo[d] -= expand_fraction * width;
    box.hi[d] += expand_fraction * width;
  }
  return box;
}

FitcMoments fitc_moments(const SparseGPPrior& prior,
                         const Eigen::Ref<const RowMat>& x) {
  const RowMat kss =
      kernel_matrix(prior.kind, prior.params, prior.inducing.s, prior.inducing.s);
  const auto chol = cholesky_with_jitter(kss);
  const RowMat ksx =
      kernel_matrix(prior.kind, prior.params, prior.inducing.s, x);  // M x b
  const RowMat kinv_u = triangular_solve(
      chol.l, triangular_solve(chol.l, prior.inducing.u), true);
  FitcMoments out;
  out.mean = ksx.transpose() * kinv_u;
  const RowMat v = triangular_solve(chol.l, ksx);  // M x b
  const double kxx = std::exp(prior.params.log_variance);  // stationary diag
  out.var = (kxx - v.colwise().squaredNorm().array()).max(0.0);
  return out;
}

double latent_marginal_logpdf(const Eigen::Ref<const RowMat>& z,
                              const Eigen::Ref<const RowMat>& mean,
                              const Eigen::Ref<const Eigen::VectorXd>& var,
                              double sigma2) {
  if (z.rows() != mean.rows() || z.cols() != mean.cols() ||
      z.rows() != var.size()) {
    throw ShapeMismatch("latent_marginal_logpdf shapes disagree");
  }
  double total = 0.0;
  for (Eigen::Index n = 0; n < z.rows(); ++n) {
    const double v = var[n] + sigma2;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double d = z(n, c) - mean(n, c);
      total += -0.5 * (kLog2Pi + std::log(v) + d * d / v);
    }
  }
  return total;
}

double log_prior_inducing(const SparseGPPrior& prior) {
  if (!prior.inducing_input_prior.contains(prior.inducing.s)) {
    return -std::numeric_limits<double>::infinity();
  }
  const RowMat kss =
      kernel_matrix(prior.kind, prior.params, prior.inducing.s, prior.inducing.s);
  const auto chol = cholesky_with_jitter(kss);
  const RowMat w = triangular_solve(chol.l, prior.inducing.u);  // M x C
  const double log_det = 2.0 * chol.l.diagonal().array().log().sum();
  const double m = static_cast<double>(prior.num_inducing());
  const double c = static_cast<double>(prior.num_channels());
  double total = -0.5 * w.squaredNorm() - 0.5 * c * (log_det + m * kLog2Pi);
  total += m * prior.inducing_input_prior.log_density_per_row();
  return total;
}

double dense_gp_log_prior(const Eigen::Ref<const RowMat>& z,
                          const Eigen::Ref<const RowMat>& x,
                          const KernelKind& kind, const KernelParams& params) {
  const Eigen::Index n = x.rows();
  if (n > kDenseGpGuard) {
    throw TooLarge("dense GP prior limited to N <= 5000");
  }
  if (z.rows() != n) throw ShapeMismatch("dense_gp_log_prior shapes disagree");
  const RowMat kxx = kernel_matrix(kind, params, x, x);
  const auto chol = cholesky_with_jitter(kxx);
  const RowMat w = triangular_solve(chol.l, z);  // N x C
  const double log_det = 2.0 * chol.l.diagonal().array().log().sum();
  const double c = static_cast<double>(z.cols());
  return -0.5 * w.squaredNorm() -
         0.5 * c * (log_det + static_cast<double>(n) * kLog2Pi);
}

FitcMoments deep_gp_propagate(const DeepGPPrior& prior,
                              const Eigen::Ref<const RowMat>& x, Rng& rng) {
  if (prior.layers.empty()) throw ShapeMismatch("deep GP needs >= 1 layer");
  RowMat current = x;
  for (std::size_t l = 0; l + 1 < prior.layers.size(); ++l) {
    const FitcMoments m = fitc_moments(prior.layers[l], current);
    RowMat eps = rng.normal_matrix(m.mean.rows(), m.mean.cols());
    current = m.mean +
              (eps.array().colwise() * m.var.array().sqrt()).matrix();
  }
  return fitc_moments(prior.layers.back(), current);
}

RowMat predict_latent(const SparseGPPrior& prior,
                      const Eigen::Ref<const RowMat>& x_star, Rng& rng,
                      PredictMode mode) {
  const FitcMoments m = fitc_moments(prior, x_star);
  if (mode == PredictMode::Mean) return m.mean;
  RowMat eps = rng.normal_matrix(m.mean.rows(), m.mean.cols());
  const Eigen::ArrayXd sd = (m.var.array() + prior.sigma2).sqrt();
  return m.mean + (eps.array().colwise() * sd).matrix();
}

ExprGraph::NodeId gp_chol_kss_graph(ExprGraph& g, const KernelKind& kind,
                                    ExprGraph::NodeId s,
                                    ExprGraph::NodeId log_ls,
                                    ExprGraph::NodeId log_var,
                                    double jitter_multiplier) {
  const Eigen::Index m = g.value(s).rows();
  auto kss = kernel_matrix_graph(g, kind, s, s, log_ls, log_var);
  // Stationary kernels have diag == variance, so this matches the
  // 1e-6 * mean(diag) policy while keeping gradients exact.
  auto jitter = g.scale(g.exp(log_var), kJitterRelative * jitter_multiplier);
  auto jitter_eye =
      g.mul(g.broadcast(jitter, m, m), g.constant(Tensor::identity(m)));
  return g.cholesky(g.add(kss, jitter_eye));
}

FitcGraphMoments fitc_moments_graph(ExprGraph& g, const KernelKind& kind,
                                    ExprGraph::NodeId x, ExprGraph::NodeId s,
                                    ExprGraph::NodeId log_ls,
                                    ExprGraph::NodeId log_var,
                                    ExprGraph::NodeId chol_kss,
                                    ExprGraph::NodeId u) {
  const Eigen::Index b = g.value(x).rows();
  const Eigen::Index m = g.value(s).rows();
  auto ksx = kernel_matrix_graph(g, kind, s, x, log_ls, log_var);  // M x b
  auto kinv_u = g.triangular_solve(chol_kss,
                                   g.triangular_solve(chol_kss, u), true);
  FitcGraphMoments out;
  out.mean = g.matmul(ksx, kinv_u, true, false);  // b x C
  auto v = g.triangular_solve(chol_kss, ksx);     // M x b
  auto ones_m = g.constant(Tensor::constant({m, 1}, 1.0));
  auto explained = g.matmul(g.square(v), ones_m, true, false);  // b x 1
  auto kxx_diag = g.broadcast(g.exp(log_var), b, 1);
  out.var = g.relu(g.sub(kxx_diag, explained));
  return out;
}

ExprGraph::NodeId log_prior_inducing_graph(ExprGraph& g,
                                           ExprGraph::NodeId chol_kss,
                                           ExprGraph::NodeId u) {
  const double m = static_cast<double>(g.value(u).rows());
  const double c = static_cast<double>(g.value(u).cols());
  auto w = g.triangular_solve(chol_kss, u);
  auto quad = g.scale(g.sum(g.square(w)), -0.5);
  auto log_det = g.chol_log_det(chol_kss);
  auto norm = g.add_scalar(g.scale(log_det, -0.5 * c), -0.5 * c * m * kLog2Pi);
  return g.add(quad, norm);
}

}  // namespace sgpbae
