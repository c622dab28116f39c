#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <vector>

#include "sgpbae/errors.hpp"

namespace sgpbae {

// Row-major dense matrix; the working type for all 2-D numerics.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major array of 64-bit reals with an explicit shape. Storage is
// flat; rank can be anything, but everything that enters the expression
// graph is viewed as rank <= 2.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<Eigen::Index> shape, Eigen::VectorXd data);

  static Tensor zeros(std::vector<Eigen::Index> shape);
  static Tensor constant(std::vector<Eigen::Index> shape, double value);
  static Tensor scalar(double value);
  static Tensor identity(Eigen::Index n);
  static Tensor from_matrix(const Eigen::Ref<const RowMat>& m);
  static Tensor column(const Eigen::Ref<const Eigen::VectorXd>& v);
  static Tensor row(const Eigen::Ref<const Eigen::VectorXd>& v);

  const std::vector<Eigen::Index>& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(shape_.size()); }

  // Rank <= 2 view. Scalars are 1x1, rank-1 tensors are columns.
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  Eigen::Map<const RowMat> mat() const;
  Eigen::Map<RowMat> mat();

  Eigen::Map<const Eigen::ArrayXd> array() const {
    return {data_.data(), data_.size()};
  }
  Eigen::Map<Eigen::ArrayXd> array() { return {data_.data(), data_.size()}; }

  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& data() { return data_; }

  double operator()(Eigen::Index i, Eigen::Index j) const {
    return data_[i * cols() + j];
  }
  double& operator()(Eigen::Index i, Eigen::Index j) {
    return data_[i * cols() + j];
  }
  double value() const;  // requires size() == 1

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return data_.allFinite(); }
  // Model inputs reject NaN/Inf up front.
  void require_finite(const std::string& what) const;

 private:
  std::vector<Eigen::Index> shape_;
  Eigen::VectorXd data_;
};

}  // namespace sgpbae
