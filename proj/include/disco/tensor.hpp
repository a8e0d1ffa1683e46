// Copyright 2026 The disco-cpp Authors
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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "disco/errors.hpp"

namespace disco {

/// Dense row-major tensor of doubles with an optional gradient buffer of
/// identical shape. All library math runs at 64-bit precision; this keeps
/// the tolerance-based checks meaningful.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    v_.assign(checked_size(shape_), 0.0);
  }

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), v_(std::move(data)) {
    if (static_cast<std::int64_t>(v_.size()) != checked_size(shape_)) {
      throw ShapeError("tensor data size does not match shape");
    }
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.v_) x = value;
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

  // 2-D accessors. rows/cols require rank 2.
  int rows() const {
    require_rank(2);
    return shape_[0];
  }
  int cols() const {
    require_rank(2);
    return shape_[1];
  }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& at(int i) { return v_[static_cast<std::size_t>(i)]; }
  double at(int i) const { return v_[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return v_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void check_finite(const std::string& where) const {
    if (!all_finite()) throw NumericError("non-finite values in " + where);
  }

  // ---- gradient buffer -----------------------------------------------

  bool has_grad() const { return g_.has_value(); }

  /// Allocates (zeroed) the gradient buffer if absent.
  void ensure_grad() {
    if (!g_) g_.emplace(v_.size(), 0.0);
  }

  void zero_grad() {
    if (g_) std::fill(g_->begin(), g_->end(), 0.0);
  }

  void drop_grad() { g_.reset(); }

  std::vector<double>& grad() {
    ensure_grad();
    return *g_;
  }
  const std::vector<double>& grad() const {
    if (!g_) throw ValidationError("gradient buffer not allocated");
    return *g_;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static std::int64_t checked_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw ShapeError("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  void require_rank(int r) const {
    if (rank() != r) throw ShapeError("expected rank-" + std::to_string(r) + " tensor, got " + shape_str());
  }

  std::vector<int> shape_;
  std::vector<double> v_;
  std::optional<std::vector<double>> g_;
};

/// Row-major boolean matrix; the raw form of attention visibility.
struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;

  BoolMatrix() = default;
  BoolMatrix(int r, int c, bool fill = false)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill ? 1 : 0) {}

  bool at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool b) { v[static_cast<std::size_t>(r) * cols + c] = b ? 1 : 0; }

  static BoolMatrix full(int r, int c) { return BoolMatrix(r, c, true); }
};

/// Fixed-order pairwise tree sum. This is the documented reduction order for
/// batch-level accumulation, so results do not depend on evaluation schedule.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

}  // namespace disco
