#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "sgpbae/tensor.hpp"

namespace sgpbae {

// Deterministic random stream. Normal draws use Box-Muller on top of
// mt19937_64 so sequences are reproducible across standard libraries
// (std::normal_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, bound).
  std::uint64_t integer(std::uint64_t bound);

  Eigen::VectorXd normal_vector(Eigen::Index n);
  RowMat normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // Sample k distinct indices from [0, n), ascending order.
  std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n,
                                                       Eigen::Index k);

  // Derive an independent stream; used to give each chain its own rng.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace sgpbae
