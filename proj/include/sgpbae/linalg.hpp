#pragma once

#include "sgpbae/tensor.hpp"

namespace sgpbae {

// Lower-triangular factor L with L L^T == A. The input is read as a
// symmetric matrix (lower triangle wins via symmetrization). Throws
// NotPositiveDefinite when a pivot is not strictly positive; callers are
// expected to have applied jitter already.
RowMat cholesky_decompose(const RowMat& a);
Tensor cholesky_decompose(const Tensor& a);

// Solves L X = B (or L^T X = B with transpose_l) for lower-triangular L.
// Throws SingularMatrix if a diagonal entry is exactly zero.
RowMat triangular_solve(const RowMat& l, const RowMat& b,
                        bool transpose_l = false);
Tensor triangular_solve(const Tensor& l, const Tensor& b,
                        bool transpose_l = false);

// Jitter policy for covariance factorizations: start at 1e-6 * mean(diag),
// double up to three times on failure, then give up.
struct JitteredCholesky {
  RowMat l;
  double jitter = 0.0;
};
JitteredCholesky cholesky_with_jitter(const RowMat& a);

constexpr double kJitterRelative = 1e-6;
constexpr int kJitterDoublings = 3;

}  // namespace sgpbae
