#include "sgpbae/linalg.hpp"

#include <cmath>

namespace sgpbae {

RowMat cholesky_decompose(const RowMat& a) {
  if (a.rows() != a.cols()) {
    throw ShapeMismatch("cholesky_decompose expects a square matrix");
  }
  const Eigen::Index n = a.rows();
  RowMat sym = 0.5 * (a + a.transpose());
  RowMat l = RowMat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = sym(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) {
      throw NotPositiveDefinite("cholesky pivot " + std::to_string(j) +
                                " is not positive");
    }
    d = std::sqrt(d);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (sym(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
    }
  }
  return l;
}

Tensor cholesky_decompose(const Tensor& a) {
  return Tensor::from_matrix(cholesky_decompose(RowMat(a.mat())));
}

RowMat triangular_solve(const RowMat& l, const RowMat& b, bool transpose_l) {
  if (l.rows() != l.cols()) {
    throw ShapeMismatch("triangular_solve expects a square factor");
  }
  if (l.cols() != b.rows()) {
    throw ShapeMismatch("triangular_solve shape mismatch");
  }
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (l(i, i) == 0.0) {
      throw SingularMatrix("triangular factor has a zero diagonal entry");
    }
  }
  if (transpose_l) {
    return l.transpose().triangularView<Eigen::Upper>().solve(b);
  }
  return l.triangularView<Eigen::Lower>().solve(b);
}

Tensor triangular_solve(const Tensor& l, const Tensor& b, bool transpose_l) {
  return Tensor::from_matrix(
      triangular_solve(RowMat(l.mat()), RowMat(b.mat()), transpose_l));
}

JitteredCholesky cholesky_with_jitter(const RowMat& a) {
  double jitter = kJitterRelative * a.diagonal().mean();
  for (int attempt = 0; attempt <= kJitterDoublings; ++attempt) {
    try {
      RowMat shifted = a;
      shifted.diagonal().array() += jitter;
      return {cholesky_decompose(shifted), jitter};
    } catch (const NotPositiveDefinite&) {
      if (attempt == kJitterDoublings) throw;
      jitter *= 2.0;
    }
  }
  throw NotPositiveDefinite("unreachable");
}

}  // namespace sgpbae
