// Copyright 2026 The pelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <initializer_list>
#include <utility>

#include "pelab/common.hpp"

namespace pelab {

/// Dense row-major N-dimensional array. Storage is a flat Eigen array so
/// whole-tensor arithmetic is written as Eigen expressions on `array()`, and
/// 2-D views for GEMM come from `matrix()`.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  /// Empty placeholder (no elements, `empty()` is true).
  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    data_ = Array::Zero(shape_numel(shape_));
  }

  Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
    check_extents();
    data_ = Array::Constant(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    if (static_cast<Index>(values.size()) != shape_numel(shape_)) {
      throw ShapeError("initializer has " + std::to_string(values.size()) +
                       " values for shape " + shape_to_string(shape_));
    }
    data_.resize(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, Array::Constant(1, v)); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }
  Index extent(int axis) const { return shape_[normalize_axis(axis, rank())]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  /// Scalar value of a one-element tensor.
  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
    return data_[0];
  }

  MatrixMap matrix(Index rows, Index cols, Index offset = 0) {
    return MatrixMap(data_.data() + offset, rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols, Index offset = 0) const {
    return ConstMatrixMap(data_.data() + offset, rows, cols);
  }

  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape_in_place(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape_in_place(std::move(shape));
    return std::move(*this);
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  void check_extents() const {
    for (Index e : shape_) {
      if (e < 1) throw ShapeError("non-positive extent in shape " + shape_to_string(shape_));
    }
  }

  void reshape_in_place(Shape shape) {
    if (shape_numel(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                       shape_to_string(shape));
    }
    shape_ = std::move(shape);
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
      throw ShapeError("index rank mismatch for shape " + shape_to_string(shape_));
    }
    Index off = 0;
    int axis = 0;
    for (Index i : idx) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  Array data_;
};

}  // namespace pelab
