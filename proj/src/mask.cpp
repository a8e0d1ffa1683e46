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

#include "disco/mask.hpp"

#include <algorithm>
#include <numeric>

namespace disco {

VisibilityMask sample_disco_mask(int n, RngStream& rng) {
  VisibilityMask mask(n);
  for (int row = 0; row < n; ++row) {
    const int visible = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (visible == 0) continue;
    // Sample `visible` positions among the n-1 others.
    std::vector<int> picks = rng.sample_without_replacement(n - 1, visible);
    for (int p : picks) {
      const int col = p >= row ? p + 1 : p;  // skip the diagonal slot
      mask.set(row, col, true);
    }
  }
  return mask;
}

std::pair<VisibilityMask, std::vector<int>> cmlm_mask(int n, RngStream& rng) {
  const int masked_count = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
  std::vector<int> masked = rng.sample_without_replacement(n, masked_count);
  std::sort(masked.begin(), masked.end());
  std::vector<std::uint8_t> observed(static_cast<std::size_t>(n), 1);
  for (int m : masked) observed[static_cast<std::size_t>(m)] = 0;
  return {shared_observed_mask(observed), std::move(masked)};
}

VisibilityMask autoregressive_mask(int n) {
  VisibilityMask mask(n);
  for (int row = 1; row < n; ++row) {
    for (int col = 0; col < row; ++col) mask.set(row, col, true);
  }
  return mask;
}

VisibilityMask from_order_mask(const std::vector<int>& ranks) {
  const int n = static_cast<int>(ranks.size());
  if (n < 1) throw ValidationError("from_order_mask: empty rank vector");
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  for (int r : ranks) {
    if (r < 1 || r > n || seen[static_cast<std::size_t>(r - 1)]) {
      throw ValidationError("from_order_mask: ranks must be a permutation of 1..N");
    }
    seen[static_cast<std::size_t>(r - 1)] = 1;
  }
  VisibilityMask mask(n);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      if (ranks[static_cast<std::size_t>(col)] < ranks[static_cast<std::size_t>(row)]) {
        mask.set(row, col, true);
      }
    }
  }
  return mask;
}

VisibilityMask cloze_mask(int n) {
  VisibilityMask mask(n);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      if (row != col) mask.set(row, col, true);
    }
  }
  return mask;
}

VisibilityMask shared_observed_mask(const std::vector<std::uint8_t>& observed) {
  const int n = static_cast<int>(observed.size());
  VisibilityMask mask(n);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      if (row != col && observed[static_cast<std::size_t>(col)]) mask.set(row, col, true);
    }
  }
  return mask;
}

std::vector<int> ranks_from_confidences(std::span<const double> confidence) {
  const int n = static_cast<int>(confidence.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (confidence[static_cast<std::size_t>(a)] != confidence[static_cast<std::size_t>(b)]) {
      return confidence[static_cast<std::size_t>(a)] > confidence[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  std::vector<int> ranks(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
  return ranks;
}

}  // namespace disco
