#include "sgpbae/kernels.hpp"

#include <cmath>

namespace sgpbae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

void check_dims(const KernelKind& kind, const KernelParams& params,
                Eigen::Index dim) {
  if (params.input_dim() != dim) {
    throw DimensionMismatch("kernel parameter dimension does not match input");
  }
  if (kind.tag == KernelKind::Periodic1d && dim != 1) {
    throw DimensionMismatch("periodic kernel requires 1-d inputs");
  }
}

}  // namespace

double kernel_eval(const KernelKind& kind, const KernelParams& params,
                   const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x.size() != x2.size()) {
    throw DimensionMismatch("kernel inputs have different dimensions");
  }
  check_dims(kind, params, x.size());
  const double variance = std::exp(params.log_variance);
  if (kind.tag == KernelKind::RbfArd) {
    double q = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      const double inv_l = std::exp(-params.log_lengthscales[d]);
      const double s = (x[d] - x2[d]) * inv_l;
      q += s * s;
    }
    return variance * std::exp(-0.5 * q);
  }
  const double inv_l = std::exp(-params.log_lengthscales[0]);
  const double s = std::sin(M_PI * (x[0] - x2[0]) / kind.period);
  return variance * std::exp(-2.0 * s * s * inv_l * inv_l);
}

RowMat kernel_matrix(const KernelKind& kind, const KernelParams& params,
                     const Eigen::Ref<const RowMat>& a,
                     const Eigen::Ref<const RowMat>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("kernel matrix inputs have different dimensions");
  }
  check_dims(kind, params, a.cols());
  RowMat k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      k(i, j) = kernel_eval(kind, params, a.row(i), b.row(j));
    }
  }
  return k;
}

double log_prior_hyper(const KernelParams& params,
                       const LogNormalPrior& lengthscale_prior,
                       const LogNormalPrior& variance_prior) {
  double total = 0.0;
  for (Eigen::Index d = 0; d < params.input_dim(); ++d) {
    total += normal_logpdf(params.log_lengthscales[d], lengthscale_prior.mean_log,
                           lengthscale_prior.var_log) -
             params.log_lengthscales[d];
  }
  total += normal_logpdf(params.log_variance, variance_prior.mean_log,
                         variance_prior.var_log) -
           params.log_variance;
  return total;
}

ExprGraph::NodeId kernel_matrix_graph(ExprGraph& g, const KernelKind& kind,
                                      ExprGraph::NodeId a, ExprGraph::NodeId b,
                                      ExprGraph::NodeId log_lengthscales,
                                      ExprGraph::NodeId log_variance) {
  const Eigen::Index n = g.value(a).rows();
  const Eigen::Index m = g.value(b).rows();
  const Eigen::Index dim = g.value(a).cols();
  if (g.value(b).cols() != dim) {
    throw DimensionMismatch("kernel matrix inputs have different dimensions");
  }
  auto variance = g.exp(log_variance);  // 1x1

  if (kind.tag == KernelKind::RbfArd) {
    if (g.value(log_lengthscales).rows() != 1 ||
        g.value(log_lengthscales).cols() != dim) {
      throw DimensionMismatch("log lengthscales must be a 1 x D row");
    }
    auto inv_ls = g.exp(g.neg(log_lengthscales));  // 1xD
    auto as = g.mul(a, g.broadcast(inv_ls, n, dim));
    auto bs = g.mul(b, g.broadcast(inv_ls, m, dim));
    auto a2 = g.sum(g.square(as), ExprGraph::Axis::Cols);  // n x 1
    auto ones_d = g.constant(Tensor::constant({1, dim}, 1.0));
    auto b2 = g.matmul(ones_d, g.square(bs), false, true);  // 1 x m
    auto cross = g.matmul(as, bs, false, true);             // n x m
    auto sqdist = g.sub(g.add(g.broadcast(a2, n, m), g.broadcast(b2, n, m)),
                        g.scale(cross, 2.0));
    return g.mul(g.broadcast(variance, n, m), g.exp(g.scale(sqdist, -0.5)));
  }

  if (dim != 1) throw DimensionMismatch("periodic kernel requires 1-d inputs");
  auto ones_1 = g.constant(Tensor::constant({1, 1}, 1.0));
  auto b_row = g.matmul(ones_1, b, false, true);  // 1 x m
  auto delta = g.sub(g.broadcast(a, n, m), g.broadcast(b_row, n, m));
  auto s = g.sin(g.scale(delta, M_PI / kind.period));
  auto inv_l2 = g.exp(g.scale(log_lengthscales, -2.0));  // 1x1
  auto expo = g.scale(g.mul(g.square(s), g.broadcast(inv_l2, n, m)), -2.0);
  return g.mul(g.broadcast(variance, n, m), g.exp(expo));
}

ExprGraph::NodeId log_prior_hyper_graph(ExprGraph& g,
                                        ExprGraph::NodeId log_lengthscales,
                                        ExprGraph::NodeId log_variance,
                                        const LogNormalPrior& lengthscale_prior,
                                        const LogNormalPrior& variance_prior) {
  auto ls_term = g.sub(
      g.sum(g.gaussian_logpdf(
          log_lengthscales,
          g.broadcast_like(g.constant(lengthscale_prior.mean_log), log_lengthscales),
          g.broadcast_like(g.constant(lengthscale_prior.var_log), log_lengthscales))),
      g.sum(log_lengthscales));
  auto var_term = g.sub(
      g.sum(g.gaussian_logpdf(log_variance,
                              g.constant(variance_prior.mean_log),
                              g.constant(variance_prior.var_log))),
      g.sum(log_variance));
  return g.add(ls_term, var_term);
}

}  // namespace sgpbae
