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
#include <string_view>
#include <vector>

namespace disco {

/// Counter-based splittable random stream. The draw at a given (seed, counter)
/// is a pure function of both, so streams can be replayed, forked per label,
/// and remain stable under batch-size changes. Substreams are derived by
/// hashing (seed, label) and start at counter 0.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + kGolden * ++counter_;
    return mix(z);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Multiply-shift mapping; deterministic.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  int next_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double next_gaussian() {
    double u1 = next_real();
    double u2 = next_real();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = mix(seed_ ^ kSplit);
    s = mix(s ^ (a * kC1));
    s = mix(s ^ (b * kC2));
    s = mix(s ^ (c * kC3));
    return RngStream(s);
  }

  RngStream substream(std::string_view label, std::uint64_t b = 0, std::uint64_t c = 0) const {
    return substream(fnv1a(label), b, c);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  /// k distinct values from {0, ..., n-1}, order arbitrary but deterministic.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: fix positions n-1 .. n-k.
    for (int i = 0; i < k; ++i) {
      int r = static_cast<int>(next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(n - 1 - i)], pool[static_cast<std::size_t>(r)]);
    }
    return std::vector<int>(pool.end() - k, pool.end());
  }

  /// Uniform random permutation returning ranks 1..n (rank of each index).
  std::vector<int> random_ranks(int n) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle(order);
    std::vector<int> ranks(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
    return ranks;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
      h ^= static_cast<std::uint8_t>(ch);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSplit = 0x6a09e667f3bcc909ULL;
  static constexpr std::uint64_t kC1 = 0xbf58476d1ce4e5b9ULL;
  static constexpr std::uint64_t kC2 = 0x94d049bb133111ebULL;
  static constexpr std::uint64_t kC3 = 0xd6e8feb86659fd93ULL;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ULL;
    z ^= z >> 33;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace disco
