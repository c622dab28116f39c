#pragma once

#include <functional>
#include <vector>

#include "sgpbae/tensor.hpp"

namespace sgpbae::testing {

// Central finite differences over every entry of every parameter tensor.
// `eval` rebuilds the scalar function from scratch at the given values.
inline std::vector<Tensor> finite_difference_gradients(
    const std::function<double(const std::vector<Tensor>&)>& eval,
    std::vector<Tensor> params, double h = 1e-5) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g = Tensor::zeros({params[p].rows(), params[p].cols()});
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      const double saved = params[p].data()[i];
      params[p].data()[i] = saved + h;
      const double up = eval(params);
      params[p].data()[i] = saved - h;
      const double down = eval(params);
      params[p].data()[i] = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Norm-wise relative error per parameter group; returns the worst group.
inline double max_group_relative_error(const std::vector<Tensor>& analytic,
                                       const std::vector<Tensor>& fd) {
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    const double diff = (analytic[p].data() - fd[p].data()).norm();
    const double denom = std::max(fd[p].data().norm(), 1e-8);
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

}  // namespace sgpbae::testing
