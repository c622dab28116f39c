#pragma once

#include <optional>

#include "sgpbae/graph.hpp"
#include "sgpbae/tensor.hpp"

namespace sgpbae {

// Hyperparameters live in log domain so the sampler explores an
// unconstrained space.
struct KernelParams {
  Eigen::VectorXd log_lengthscales;  // one per input dimension
  double log_variance = 0.0;

  Eigen::Index input_dim() const { return log_lengthscales.size(); }
};

struct LogNormalPrior {
  double mean_log = 0.0;
  double var_log = 1.0;
};

struct KernelKind {
  enum Tag { RbfArd, Periodic1d } tag = RbfArd;
  double period = 2.0 * M_PI;  // periodic only

  static KernelKind rbf_ard() { return {RbfArd, 0.0}; }
  static KernelKind periodic_1d(double period) { return {Periodic1d, period}; }
};

double kernel_eval(const KernelKind& kind, const KernelParams& params,
                   const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x2);

// Entry (i, j) is kernel_eval(row i of a, row j of b).
RowMat kernel_matrix(const KernelKind& kind, const KernelParams& params,
                     const Eigen::Ref<const RowMat>& a,
                     const Eigen::Ref<const RowMat>& b);

// Log density of the log-normal priors evaluated at exp(params), i.e. the
// Normal log density of the log-domain values minus the log values (the
// change-of-variables Jacobian).
double log_prior_hyper(const KernelParams& params,
                       const LogNormalPrior& lengthscale_prior,
                       const LogNormalPrior& variance_prior);

// Graph-side kernel pieces used by the energy functions. `a` and `b` are
// n x D and m x D nodes (constants or live values from a previous layer).
ExprGraph::NodeId kernel_matrix_graph(ExprGraph& g, const KernelKind& kind,
                                      ExprGraph::NodeId a, ExprGraph::NodeId b,
                                      ExprGraph::NodeId log_lengthscales,
                                      ExprGraph::NodeId log_variance);

ExprGraph::NodeId log_prior_hyper_graph(ExprGraph& g,
                                        ExprGraph::NodeId log_lengthscales,
                                        ExprGraph::NodeId log_variance,
                                        const LogNormalPrior& lengthscale_prior,
                                        const LogNormalPrior& variance_prior);

}  // namespace sgpbae
