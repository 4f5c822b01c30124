#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace april {

using Shape = std::vector<int>;

inline long shape_size(const Shape& shape) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '{';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << '}';
  return out.str();
}

// Dense row-major tensor over a contiguous Eigen array. Rank is dynamic;
// the engine uses rank 1 for vectors and rank 3 ({H,W,C}) for feature maps.
template <typename Scalar_>
class TensorX {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TensorX() = default;
  explicit TensorX(Shape shape)
      : shape_(std::move(shape)), data_(Array::Zero(shape_size(shape_))) {}
  TensorX(Shape shape, std::initializer_list<Scalar> values)
      : shape_(std::move(shape)), data_(shape_size(shape_)) {
    if (static_cast<long>(values.size()) != size())
      throw std::invalid_argument("tensor value count does not match shape " + shape_str(shape_));
    long i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  static TensorX zeros(Shape shape) { return TensorX(std::move(shape)); }
  static TensorX constant(Shape shape, Scalar value) {
    TensorX t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }
  static TensorX from_vector(Shape shape, const Vector& v) {
    TensorX t(std::move(shape));
    if (v.size() != t.size())
      throw std::invalid_argument("vector size does not match shape " + shape_str(t.shape_));
    t.array() = v.array();
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  long size() const { return data_.size(); }
  bool same_shape(const TensorX& other) const { return shape_ == other.shape_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](long i) { return data_[i]; }
  Scalar operator[](long i) const { return data_[i]; }

  Scalar& at(int i, int j) { return data_[static_cast<long>(i) * dim(1) + j]; }
  Scalar at(int i, int j) const { return data_[static_cast<long>(i) * dim(1) + j]; }
  Scalar& at(int i, int j, int k) {
    return data_[(static_cast<long>(i) * dim(1) + j) * dim(2) + k];
  }
  Scalar at(int i, int j, int k) const {
    return data_[(static_cast<long>(i) * dim(1) + j) * dim(2) + k];
  }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Eigen::Map<Vector> vec() { return Eigen::Map<Vector>(data_.data(), data_.size()); }
  Eigen::Map<const Vector> vec() const {
    return Eigen::Map<const Vector>(data_.data(), data_.size());
  }

  bool all_finite() const { return data_.isFinite().all(); }
  void set_zero() { data_.setZero(); }

 private:
  Shape shape_;
  Array data_;
};

using Tensor = TensorX<double>;

}  // namespace april
