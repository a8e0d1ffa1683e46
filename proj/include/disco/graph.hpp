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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "disco/rng.hpp"
#include "disco/tensor.hpp"

namespace disco {

/// Reverse-mode tape over coarse tensor operations. A Graph is built once per
/// forward pass; backward() runs the recorded closures in reverse creation
/// order, which is a valid topological order because ops only consume earlier
/// nodes. Gradients of `param` leaves accumulate into the bound external
/// tensors, so repeated backward calls without zero_grad() add up.
class Graph {
 public:
  struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----------------------------------------------------------

  /// Trainable leaf. Copies the current value in; backward accumulates into
  /// t.grad(). The tensor must outlive the graph.
  Value param(Tensor& t);

  /// Constant leaf (moved in); never receives gradient.
  Value input(Tensor t);

  /// Constant leaf referencing external storage without copying. The tensor
  /// must outlive the graph. Used by inference paths over frozen parameters.
  Value cref(const Tensor& t);

  // ---- operations -------------------------------------------------------

  /// C = op(A) * op(B) with optional transposes; inner extents must match.
  Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false);

  Value add(Value a, Value b);                 // same shape
  Value add_bias(Value x, Value bias);         // [r x c] + [c], broadcast over rows
  Value scale(Value x, double c);
  Value mul(Value a, Value b);                 // elementwise
  Value relu(Value x);

  /// Per-position normalization over the last extent, epsilon-stabilized
  /// (eps = 1e-5), then affine. Zero-variance rows map to the bias.
  Value layer_norm(Value x, Value gain, Value bias);

  /// Row-wise softmax restricted to visible columns. Masked entries are
  /// exactly zero; rows with no visible column yield an all-zero row.
  Value masked_softmax(Value scores, const BoolMatrix& visible);

  /// Fused multi-head attention: softmax(op(q_h k_h^T) / sqrt(d_h)) v_h per
  /// head, concatenated. `visible` gates key/value columns per query row;
  /// all-masked query rows produce zero context.
  Value attention(Value q, Value k, Value v, const BoolMatrix& visible, int num_heads);

  /// Gathers rows of `table` ([vocab x d]) at `ids`; backward scatter-adds.
  Value embedding(Value table, std::span<const int> ids);

  Value slice_rows(Value x, int begin, int count);

  /// Inverted dropout; identity when rate == 0. Deterministic given the
  /// stream state. rate must lie in [0, 1).
  Value dropout(Value x, double rate, RngStream& rng);

  /// Mean over rows (optionally weighted) of the smoothed negative log
  /// likelihood: (1-eps) * NLL(target) + eps * mean-over-vocab NLL.
  Value cross_entropy_smoothed(Value logits, std::span<const int> targets, double eps,
                               const std::vector<double>* row_weights = nullptr);

  Value sum(Value x);
  Value mean(Value x);

  /// Scalar combination sum_i w_i * s_i; every input must be scalar.
  Value combine_scalars(std::span<const Value> vals, std::span<const double> weights);

  // ---- execution ---------------------------------------------------------

  const Tensor& val(Value v) const { return node(v.id).out; }
  const Tensor& grad_of(Value v) const { return node(v.id).out_grad; }

  /// Reverse accumulation from a scalar loss. Throws on non-scalar input.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor out;
    Tensor out_grad;                       // allocated lazily in backward
    bool requires_grad = false;
    Tensor* external = nullptr;            // param leaves only
    const Tensor* external_const = nullptr;  // cref leaves only
    std::function<void(Graph&, int)> backward_fn;
    const char* op = "leaf";
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  const Tensor& out_of(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external_const ? *n.external_const : n.out;
  }

  Tensor& grad_buf(int id);
  Value push(Node n);
  void check(Value v, const char* op) const;

  std::vector<Node> nodes_;
  bool check_finite_;
};

/// Numerically stable row-wise log-softmax of a [r x c] tensor (plain math,
/// not recorded on any tape).
Tensor log_softmax_rows(const Tensor& logits);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::int64_t coords_checked = 0;
};

/// Compares reverse-mode gradients against central finite differences
/// (f(x+h) - f(x-h)) / 2h, coordinate-wise. `eval(true)` must recompute the
/// loss AND accumulate analytic gradients into the given tensors (from
/// zeroed buffers); `eval(false)` must recompute the loss only. When
/// max_coords > 0 and an rng is given, that many coordinates are sampled per
/// tensor; otherwise all coordinates are checked. The relative error
/// denominator is floored to keep near-zero gradients measured absolutely.
GradCheckReport grad_check(const std::function<double(bool)>& eval,
                           std::span<Tensor* const> params, double step = 1e-5,
                           int max_coords = 0, RngStream* rng = nullptr,
                           double denom_floor = 1e-2);

}  // namespace disco
