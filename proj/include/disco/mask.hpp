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

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "disco/rng.hpp"
#include "disco/tensor.hpp"

namespace disco {

/// Per-query-position observed sets over target positions: observed(n, m)
/// means position n may attend the token at position m. The diagonal is
/// always false; a position never observes itself. Rows are otherwise
/// unconstrained, so cyclic masks are legal inputs.
class VisibilityMask {
 public:
  explicit VisibilityMask(int n) : m_(n, n, false) {
    if (n < 1) throw ValidationError("visibility mask size must be >= 1");
  }

  int size() const { return m_.rows; }

  bool observed(int row, int col) const { return m_.at(row, col); }

  void set(int row, int col, bool b) {
    if (row == col && b) throw ValidationError("a position cannot observe itself");
    m_.set(row, col, b);
  }

  const BoolMatrix& matrix() const { return m_; }

  std::vector<int> observed_set(int row) const {
    std::vector<int> out;
    for (int m = 0; m < size(); ++m) {
      if (observed(row, m)) out.push_back(m);
    }
    return out;
  }

  int row_count(int row) const {
    int c = 0;
    for (int m = 0; m < size(); ++m) c += observed(row, m) ? 1 : 0;
    return c;
  }

  bool operator==(const VisibilityMask& o) const { return m_.v == o.m_.v && size() == o.size(); }

  /// FNV-1a over the bit pattern; used in decode traces.
  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : m_.v) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  BoolMatrix m_;
};

/// The training-objective mask: for each row independently, draw the visible
/// count u ~ Uniform{0..N-1} and then u distinct other positions uniformly
/// without replacement.
VisibilityMask sample_disco_mask(int n, RngStream& rng);

/// Shared-context mask: draws the masked count m ~ Uniform{1..N} and a
/// masked set of that size; every row observes the unmasked positions minus
/// itself. Returns the masked positions (sorted) so the loss can be
/// restricted to them.
std::pair<VisibilityMask, std::vector<int>> cmlm_mask(int n, RngStream& rng);

/// Row n observes exactly positions < n.
VisibilityMask autoregressive_mask(int n);

/// Row n observes {i : z(i) < z(n)}. `ranks` must be a bijection onto 1..N.
VisibilityMask from_order_mask(const std::vector<int>& ranks);

/// Everything visible except the diagonal.
VisibilityMask cloze_mask(int n);

/// Identical rows: every row observes the positions flagged in `observed`,
/// minus itself. The form used by shared-context (mask-predict) decoding.
VisibilityMask shared_observed_mask(const std::vector<std::uint8_t>& observed);

/// Descending-confidence ranks 1..N; ties broken toward the lower index.
std::vector<int> ranks_from_confidences(std::span<const double> confidence);

}  // namespace disco
