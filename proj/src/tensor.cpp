#include "sgpbae/tensor.hpp"

#include <numeric>

namespace sgpbae {

namespace {

Eigen::Index shape_product(const std::vector<Eigen::Index>& shape) {
  Eigen::Index n = 1;
  for (Eigen::Index s : shape) {
    if (s < 0) throw ShapeMismatch("tensor shape entries must be nonnegative");
    n *= s;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<Eigen::Index> shape, Eigen::VectorXd data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeMismatch("tensor data length does not match shape product");
  }
}

Tensor Tensor::zeros(std::vector<Eigen::Index> shape) {
  Eigen::Index n = shape_product(shape);
  return Tensor(std::move(shape), Eigen::VectorXd::Zero(n));
}

Tensor Tensor::constant(std::vector<Eigen::Index> shape, double value) {
  Eigen::Index n = shape_product(shape);
  return Tensor(std::move(shape), Eigen::VectorXd::Constant(n, value));
}

Tensor Tensor::scalar(double value) {
  return Tensor({1, 1}, Eigen::VectorXd::Constant(1, value));
}

Tensor Tensor::identity(Eigen::Index n) {
  Tensor t = zeros({n, n});
  for (Eigen::Index i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMat>& m) {
  Tensor t = zeros({m.rows(), m.cols()});
  t.mat() = m;
  return t;
}

Tensor Tensor::column(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return Tensor({v.size(), 1}, v);
}

Tensor Tensor::row(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return Tensor({1, v.size()}, v);
}

Eigen::Index Tensor::rows() const {
  if (shape_.empty()) return 1;
  return shape_[0];
}

Eigen::Index Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 1 : 1;
  Eigen::Index c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

Eigen::Map<const RowMat> Tensor::mat() const {
  return {data_.data(), rows(), cols()};
}

Eigen::Map<RowMat> Tensor::mat() { return {data_.data(), rows(), cols()}; }

double Tensor::value() const {
  if (size() != 1) throw ShapeMismatch("tensor is not a scalar");
  return data_[0];
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) {
    throw std::invalid_argument(what + " contains NaN or Inf entries");
  }
}

}  // namespace sgpbae
