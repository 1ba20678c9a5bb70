#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ncomp/errors.hpp"
#include "ncomp/rng.hpp"

namespace ncomp {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index checked_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: no dimensions");
  Index n = 1;
  for (Index d : shape) {
    if (d < 1) throw ShapeError("invalid shape: dimension " + std::to_string(d) + " in " + shape_str(shape));
    n *= d;
  }
  return n;
}

// Dense n-dimensional array, row-major flat storage, templated on the scalar
// (float for the pipeline's storage precision, double for gradient checks).
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(static_cast<std::size_t>(checked_numel(shape_)), T{}) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_numel(shape_) != static_cast<Index>(data_.size())) {
      throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index size() const noexcept { return static_cast<Index>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  Index dim(Index axis) const {
    if (axis < 0 || axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename U>
  bool same_shape(const Tensor<U>& other) const {
    return shape_ == other.shape();
  }

  // Reshaping 2-D Eigen view over the flat storage; rows*cols must cover it.
  MatrixMap mat(Index rows, Index cols) {
    require_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap mat(Index rows, Index cols) const {
    require_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  void require_view(Index rows, Index cols) const {
    if (rows < 1 || cols < 1 || rows * cols != size()) {
      throw ShapeError("cannot view " + shape_str(shape_) + " as " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>(std::move(shape));
}

template <typename T>
Tensor<T> full(Shape shape, T value) {
  Tensor<T> t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

template <typename T>
Tensor<T> uniform(Rng& rng, Shape shape, T lo, T hi) {
  if (!(lo <= hi)) throw ValueError("uniform: lo > hi");
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  return t;
}

template <typename T>
Tensor<T> normal(Rng& rng, Shape shape, T mean, T stddev) {
  if (stddev < T{0}) throw ValueError("normal: negative stddev");
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
  return t;
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  for (Index i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
}

}  // namespace ncomp
