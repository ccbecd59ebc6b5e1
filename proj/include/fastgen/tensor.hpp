// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fastgen/errors.hpp"

namespace fastgen {

using Index = std::ptrdiff_t;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Hidden states for one stream position: rows are channels, columns are batch
/// elements. Row-major so that one channel is contiguous across the batch.
template <typename Scalar>
using Batch = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Batchf = Batch<float>;
using Vectorf = Vector<float>;

inline std::string shape_string(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major n-d array with an explicit shape.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    data_ = Vector<Scalar>::Zero(checked_size(shape_));
  }

  Tensor(std::vector<Index> shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Vector<Scalar>& values() { return data_; }
  const Vector<Scalar>& values() const { return data_; }

  template <typename... I>
  Scalar& operator()(I... idx) {
    return data_[offset(idx...)];
  }

  template <typename... I>
  const Scalar& operator()(I... idx) const {
    return data_[offset(idx...)];
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Index checked_size(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index e : shape) {
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
      n *= e;
    }
    return n;
  }

  template <typename... I>
  Index offset(I... idx) const {
    const Index ids[] = {static_cast<Index>(idx)...};
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : ids) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  std::vector<Index> shape_;
  Vector<Scalar> data_;
};

using Tensorf = Tensor<float>;

/// Filter bank for one layer. The kernel is [out, in, k] for 1D layers and
/// [out, in, kh, kw] for 2D layers; the trailing extents are addressed as one
/// flat tap index (row-major over kh x kw).
template <typename Scalar>
class ConvWeights {
 public:
  ConvWeights() = default;

  ConvWeights(Tensor<Scalar> kernel, Tensor<Scalar> bias) : kernel_(std::move(kernel)), bias_(std::move(bias)) {
    if (kernel_.rank() != 3 && kernel_.rank() != 4) {
      throw ShapeError("conv kernel must have rank 3 or 4, got " + shape_string(kernel_.shape()));
    }
    if (bias_.rank() != 1 || bias_.dim(0) != kernel_.dim(0)) {
      throw ShapeError("bias shape " + shape_string(bias_.shape()) + " does not match kernel " +
                       shape_string(kernel_.shape()));
    }
  }

  Index out_channels() const { return kernel_.dim(0); }
  Index in_channels() const { return kernel_.dim(1); }
  Index taps() const { return kernel_.size() / (out_channels() * in_channels()); }
  Index kernel_height() const { return kernel_.rank() == 4 ? kernel_.dim(2) : 1; }
  Index kernel_width() const { return kernel_.rank() == 4 ? kernel_.dim(3) : kernel_.dim(2); }

  /// Weight for (out channel, in channel, flat tap).
  Scalar w(Index o, Index c, Index tap) const { return kernel_.data()[(o * in_channels() + c) * taps() + tap]; }
  Scalar& w(Index o, Index c, Index tap) { return kernel_.data()[(o * in_channels() + c) * taps() + tap]; }
  Scalar b(Index o) const { return bias_.data()[o]; }

  Tensor<Scalar>& kernel() { return kernel_; }
  const Tensor<Scalar>& kernel() const { return kernel_; }
  Tensor<Scalar>& bias() { return bias_; }
  const Tensor<Scalar>& bias() const { return bias_; }

  friend bool operator==(const ConvWeights& a, const ConvWeights& b) {
    return a.kernel_ == b.kernel_ && a.bias_ == b.bias_;
  }

 private:
  Tensor<Scalar> kernel_;
  Tensor<Scalar> bias_;
};

using ConvWeightsf = ConvWeights<float>;

/// Multiply-accumulate and node-evaluation tally for one engine run.
struct OpCounter {
  std::uint64_t macs = 0;
  std::uint64_t node_evals = 0;

  void reset() { *this = OpCounter{}; }

  OpCounter& operator+=(const OpCounter& other) {
    macs += other.macs;
    node_evals += other.node_evals;
    return *this;
  }

  friend OpCounter operator-(OpCounter a, const OpCounter& b) {
    a.macs -= b.macs;
    a.node_evals -= b.node_evals;
    return a;
  }

  friend bool operator==(const OpCounter&, const OpCounter&) = default;
};

template <typename Derived>
void tanh_inplace(Eigen::DenseBase<Derived>& m) {
  using S = typename Derived::Scalar;
  m.derived() = m.derived().unaryExpr([](S x) { return std::tanh(x); });
}

}  // namespace fastgen
