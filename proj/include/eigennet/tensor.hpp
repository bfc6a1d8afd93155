// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eigennet/errors.hpp"

namespace eigennet {

using Shape = std::vector<std::size_t>;
using ClassIndex = std::uint32_t;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class Tape;
class Tensor;

namespace detail {

struct TensorState {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool has_grad = false;
  Tape* tape = nullptr;
  std::size_t node = 0;
};

std::shared_ptr<TensorState>& state_of(Tensor& t);
const std::shared_ptr<TensorState>& state_of(const Tensor& t);

}  // namespace detail

/// Dense row-major float64 array with an optional link into a Tape.
///
/// Tensor is a shared handle: copies alias the same storage, which is what
/// lets a parameter be watched on a tape and later receive its gradient.
/// Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values)
      : state_(std::make_shared<detail::TensorState>()) {
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             to_string(shape));
      }
    }
    if (numel(shape) != values.size()) {
      throw DimensionError("shape " + to_string(shape) + " holds " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    state_->shape = std::move(shape);
    state_->value = std::move(values);
  }

  static Tensor full(Shape shape, double fill) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, fill));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.state_->value[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const { return state_->shape; }
  std::size_t rank() const { return state_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return state_->shape.at(axis); }
  std::size_t size() const { return state_->value.size(); }

  std::span<const double> data() const { return state_->value; }
  std::span<double> mutable_data() { return state_->value; }
  const std::vector<double>& values() const { return state_->value; }

  double item() const {
    if (size() != 1) {
      throw RankError("item() needs a single-element tensor, got " +
                      to_string(shape()));
    }
    return state_->value[0];
  }

  double at(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw RankError("at(i, j) needs a matrix");
    return state_->value.at(i * dim(1) + j);
  }

  bool has_grad() const { return state_->has_grad; }
  std::span<const double> grad() const { return state_->grad; }
  std::span<double> mutable_grad() { return state_->grad; }

  /// Allocates (or resets) a zero gradient buffer of the tensor's shape.
  void zero_grad() {
    state_->grad.assign(size(), 0.0);
    state_->has_grad = true;
  }
  void clear_grad() {
    state_->grad.clear();
    state_->has_grad = false;
  }

  bool on_tape() const { return state_->tape != nullptr; }
  Tape* tape() const { return state_->tape; }
  std::size_t node_id() const { return state_->node; }

  Tensor clone() const {
    Tensor copy(shape(), state_->value);
    if (has_grad()) {
      copy.state_->grad = state_->grad;
      copy.state_->has_grad = true;
    }
    return copy;
  }

  bool aliases(const Tensor& other) const { return state_ == other.state_; }

 private:
  friend std::shared_ptr<detail::TensorState>& detail::state_of(Tensor&);
  friend const std::shared_ptr<detail::TensorState>& detail::state_of(
      const Tensor&);

  std::shared_ptr<detail::TensorState> state_;
};

namespace detail {
inline std::shared_ptr<TensorState>& state_of(Tensor& t) { return t.state_; }
inline const std::shared_ptr<TensorState>& state_of(const Tensor& t) {
  return t.state_;
}
}  // namespace detail

}  // namespace eigennet
