#pragma once

#include <vector>

#include "sgpbae/kernels.hpp"
#include "sgpbae/rng.hpp"

namespace sgpbae {

// Inducing inputs S (shared across latent channels) with inducing
// variables u, one column per channel.
struct InducingSet {
  RowMat s;  // M x D
  RowMat u;  // M x C
};

// Non-informative uniform prior over inducing inputs.
struct UniformBox {
  Eigen::VectorXd lo, hi;

  bool contains(const Eigen::Ref<const RowMat>& s) const;
  // Per-row log density when inside the box.
  double log_density_per_row() const;
  static UniformBox from_data(const Eigen::Ref<const RowMat>& x,
                              double expand_fraction = 0.05);
};

struct SparseGPPrior {
  KernelKind kind;
  KernelParams params;
  InducingSet inducing;
  double sigma2 = 0.01;  // latent noise linking f to z; fixed, not sampled
  UniformBox inducing_input_prior;

  Eigen::Index num_inducing() const { return inducing.s.rows(); }
  Eigen::Index num_channels() const { return inducing.u.cols(); }
};

// Layer l maps width_{l-1} inputs to width_l outputs; the final width is
// the latent dimension C.
struct DeepGPPrior {
  std::vector<SparseGPPrior> layers;
};

struct FitcMoments {
  RowMat mean;          // b x C
  Eigen::VectorXd var;  // b, shared across channels, clamped at zero
};

// mean = K_xS K_SS^-1 u, var_n = k(x_n, x_n) - K_xS K_SS^-1 K_Sx diagonal.
FitcMoments fitc_moments(const SparseGPPrior& prior,
                         const Eigen::Ref<const RowMat>& x);

// sum_n sum_c log N(z_nc; mean_nc, var_n + sigma2).
double latent_marginal_logpdf(const Eigen::Ref<const RowMat>& z,
                              const Eigen::Ref<const RowMat>& mean,
                              const Eigen::Ref<const Eigen::VectorXd>& var,
                              double sigma2);

// sum_c log N(u_c; 0, K_SS) plus the uniform-box constant; -inf when S
// falls outside the box.
double log_prior_inducing(const SparseGPPrior& prior);

// Exact full-GP log density per channel, summed. Used as the dense oracle
// variant; guarded against large N.
double dense_gp_log_prior(const Eigen::Ref<const RowMat>& z,
                          const Eigen::Ref<const RowMat>& x,
                          const KernelKind& kind, const KernelParams& params);
constexpr Eigen::Index kDenseGpGuard = 5000;

// Hidden layers are sampled elementwise from their FITC conditionals; the
// final layer's moments are returned in closed form.
FitcMoments deep_gp_propagate(const DeepGPPrior& prior,
                              const Eigen::Ref<const RowMat>& x, Rng& rng);

enum class PredictMode { Mean, Sample };

RowMat predict_latent(const SparseGPPrior& prior,
                      const Eigen::Ref<const RowMat>& x_star, Rng& rng,
                      PredictMode mode);

// ---- graph-side builders used by the energy functions ----

// chol(K_SS + jitter I) with the jitter tied to the kernel variance in the
// graph, so hyperparameter gradients stay exact. jitter_multiplier
// implements the doubling escalation.
ExprGraph::NodeId gp_chol_kss_graph(ExprGraph& g, const KernelKind& kind,
                                    ExprGraph::NodeId s,
                                    ExprGraph::NodeId log_ls,
                                    ExprGraph::NodeId log_var,
                                    double jitter_multiplier);

struct FitcGraphMoments {
  ExprGraph::NodeId mean;  // b x C
  ExprGraph::NodeId var;   // b x 1, clamped at zero, excludes sigma2
};

FitcGraphMoments fitc_moments_graph(ExprGraph& g, const KernelKind& kind,
                                    ExprGraph::NodeId x, ExprGraph::NodeId s,
                                    ExprGraph::NodeId log_ls,
                                    ExprGraph::NodeId log_var,
                                    ExprGraph::NodeId chol_kss,
                                    ExprGraph::NodeId u);

// sum_c log N(u_c; 0, K_SS) for one inducing-variable block (no box term).
ExprGraph::NodeId log_prior_inducing_graph(ExprGraph& g,
                                           ExprGraph::NodeId chol_kss,
                                           ExprGraph::NodeId u);

}  // namespace sgpbae
