#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "thinker/core/errors.hpp"

namespace thinker::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array of Scalar with an arbitrary shape. Images use NCHW.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(numel(shape_))) {}
  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
      throw ArgumentError("Tensor: shape " + to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                          " elements");
    }
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }
  static Tensor scalar(Scalar value) { return constant({}, value); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ArgumentError("Tensor::dim: axis out of range for " + to_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }
  Index size() const noexcept { return data_.size(); }

  Vector& vec() noexcept { return data_; }
  const Vector& vec() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  // [dim0, rest] view.
  ConstMatrixMap rows() const { return matrix(rank() ? shape_[0] : 1, rank() ? size() / std::max<Index>(shape_[0], 1) : 1); }

  Scalar item() const {
    if (size() != 1) throw ArgumentError("Tensor::item: tensor has " + std::to_string(size()) + " elements");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ArgumentError("Tensor::matrix: " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " view of shape " + to_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

}  // namespace thinker::nn
