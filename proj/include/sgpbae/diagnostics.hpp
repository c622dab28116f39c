#pragma once

#include <string>
#include <vector>

#include "sgpbae/tensor.hpp"

namespace sgpbae {

// Draws from parallel chains over a common set of scalar dimensions.
struct ChainSet {
  std::vector<RowMat> chains;  // each draws x dims

  Eigen::Index num_chains() const { return static_cast<Eigen::Index>(chains.size()); }
  Eigen::Index num_draws() const { return chains.empty() ? 0 : chains[0].rows(); }
  Eigen::Index num_dims() const { return chains.empty() ? 0 : chains[0].cols(); }
  void validate() const;
};

// Classic Gelman-Rubin potential scale reduction per dimension:
//   R = sqrt(((n-1)/n W + B/n) / W)
// with B the between-chain variance (n * variance of chain means) and W the
// mean within-chain variance.
Eigen::VectorXd rhat(const ChainSet& cs);

double median(Eigen::VectorXd values);

struct Metrics {
  double rmse = 0.0;
  double mse = 0.0;
  double smse = 0.0;
  double mae = 0.0;
  double nll = 0.0;
};

// Computed over the mask-selected entries; smse standardizes by the
// population variance of the selected truth, nll is the per-entry mean
// Gaussian negative log likelihood.
Metrics metrics(const Eigen::Ref<const RowMat>& pred_mean,
                const Eigen::Ref<const RowMat>& pred_var,
                const Eigen::Ref<const RowMat>& truth,
                const Eigen::Ref<const RowMat>& mask);

// CSV with header "chain,draw,dim,value" and lossless 17-digit reals.
void export_traces(const ChainSet& cs, const std::string& path);
ChainSet load_traces(const std::string& path);

std::string metrics_report(const Metrics& m);

}  // namespace sgpbae
