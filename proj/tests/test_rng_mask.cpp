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

#include <doctest.h>

#include <cmath>
#include <set>

#include "disco/mask.hpp"
#include "disco/rng.hpp"

using namespace disco;

TEST_CASE("rng replays from (seed, counter) and separates substreams") {
  RngStream a(42);
  std::vector<std::uint64_t> first;
  for (int i = 0; i < 16; ++i) first.push_back(a.next_u64());

  RngStream b(42);
  for (int i = 0; i < 16; ++i) CHECK(b.next_u64() == first[static_cast<std::size_t>(i)]);

  RngStream mid(42, 8);
  for (int i = 8; i < 16; ++i) CHECK(mid.next_u64() == first[static_cast<std::size_t>(i)]);

  RngStream root(42);
  RngStream s1 = root.substream("mask", 1, 2);
  RngStream s2 = root.substream("mask", 1, 3);
  RngStream s3 = root.substream("dropout", 1, 2);
  CHECK(s1.next_u64() != s2.next_u64());
  CHECK(root.substream("mask", 1, 2).next_u64() == RngStream(42).substream("mask", 1, 2).next_u64());
  CHECK(s1.seed() != s3.seed());
}

TEST_CASE("rng uniform and gaussian are sane") {
  RngStream rng(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.next_real();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 20000 - 0.5) < 0.01);

  double gsum = 0.0, gsq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double z = rng.next_gaussian();
    gsum += z;
    gsq += z * z;
  }
  CHECK(std::abs(gsum / 20000) < 0.03);
  CHECK(std::abs(gsq / 20000 - 1.0) < 0.05);
}

TEST_CASE("sample_without_replacement yields distinct in-range values") {
  RngStream rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.next_int(1, 12);
    const int k = rng.next_int(0, n);
    auto picks = rng.sample_without_replacement(n, k);
    CHECK(static_cast<int>(picks.size()) == k);
    std::set<int> uniq(picks.begin(), picks.end());
    CHECK(static_cast<int>(uniq.size()) == k);
    for (int p : picks) {
      CHECK(p >= 0);
      CHECK(p < n);
    }
  }
}

TEST_CASE("sample_disco_mask boundary and diagonal") {
  RngStream rng(1);
  VisibilityMask one = sample_disco_mask(1, rng);
  CHECK(one.size() == 1);
  CHECK_FALSE(one.observed(0, 0));

  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.next_int(1, 10);
    VisibilityMask m = sample_disco_mask(n, rng);
    for (int i = 0; i < n; ++i) CHECK_FALSE(m.observed(i, i));
  }
}

TEST_CASE("sample_disco_mask row-visibility follows the uniform-count law") {
  // Monte-Carlo oracle: mean visible count per row is (N-1)/2.
  RngStream rng(2026);
  const int n = 8;
  const int draws = 100000;
  std::int64_t total = 0;
  for (int d = 0; d < draws; ++d) {
    VisibilityMask m = sample_disco_mask(n, rng);
    for (int r = 0; r < n; ++r) total += m.row_count(r);
  }
  const double mean = static_cast<double>(total) / (static_cast<double>(draws) * n);
  CHECK(std::abs(mean - 3.5) <= 0.05);
}

TEST_CASE("cmlm_mask structure and boundary") {
  RngStream rng(3);
  auto [m1, masked1] = cmlm_mask(1, rng);
  CHECK(masked1 == std::vector<int>{0});
  CHECK_FALSE(m1.observed(0, 0));

  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.next_int(1, 9);
    auto [m, masked] = cmlm_mask(n, rng);
    CHECK(!masked.empty());
    // All rows identical off the diagonal.
    for (int col = 0; col < n; ++col) {
      bool expect = m.observed(col == 0 ? (n > 1 ? 1 : 0) : 0, col);
      for (int row = 0; row < n; ++row) {
        if (row == col) {
          CHECK_FALSE(m.observed(row, col));
        } else {
          CHECK(m.observed(row, col) == expect);
        }
      }
    }
    // Masked positions are exactly the unobserved columns.
    for (int mp : masked) {
      for (int row = 0; row < n; ++row) CHECK_FALSE(m.observed(row, mp));
    }
  }
}

TEST_CASE("cmlm_mask masked-count law at N=9") {
  RngStream rng(2027);
  const int draws = 100000;
  std::int64_t total = 0;
  for (int d = 0; d < draws; ++d) {
    auto [m, masked] = cmlm_mask(9, rng);
    total += static_cast<std::int64_t>(masked.size());
  }
  const double mean = static_cast<double>(total) / draws;
  CHECK(std::abs(mean - 5.0) <= 0.05);
}

TEST_CASE("autoregressive and order masks") {
  VisibilityMask ar = autoregressive_mask(4);
  CHECK(ar.row_count(0) == 0);
  CHECK(ar.row_count(3) == 3);
  CHECK(ar == from_order_mask({1, 2, 3, 4}));

  VisibilityMask rl = from_order_mask({4, 3, 2, 1});
  CHECK(rl.row_count(0) == 3);
  CHECK(rl.row_count(3) == 0);
  CHECK(rl.observed(0, 3));
  CHECK_FALSE(rl.observed(3, 0));

  // Ranks from confidences [0.9, 0.2, 0.5]: rows see {}, {0,2}, {0}.
  std::vector<double> conf{0.9, 0.2, 0.5};
  auto ranks = ranks_from_confidences(conf);
  CHECK(ranks == std::vector<int>{1, 3, 2});
  VisibilityMask m = from_order_mask(ranks);
  CHECK(m.observed_set(0).empty());
  CHECK(m.observed_set(1) == std::vector<int>{0, 2});
  CHECK(m.observed_set(2) == std::vector<int>{0});

  CHECK_THROWS_AS(from_order_mask({1, 1, 2}), ValidationError);
  CHECK_THROWS_AS(from_order_mask({0, 1, 2}), ValidationError);
}

TEST_CASE("cloze mask") {
  VisibilityMask two = cloze_mask(2);
  CHECK(two.observed(0, 1));
  CHECK(two.observed(1, 0));
  CHECK_FALSE(two.observed(0, 0));

  VisibilityMask one = cloze_mask(1);
  CHECK(one.row_count(0) == 0);

  VisibilityMask five = cloze_mask(5);
  for (int r = 0; r < 5; ++r) CHECK(five.row_count(r) == 4);
}

TEST_CASE("from_order_mask is acyclic; sampled masks may contain cycles") {
  RngStream rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.next_int(2, 9);
    auto ranks = rng.random_ranks(n);
    VisibilityMask m = from_order_mask(ranks);
    for (int a = 0; a < n; ++a) {
      CHECK_FALSE(m.observed(a, a));
      for (int b = 0; b < n; ++b) {
        CHECK_FALSE((m.observed(a, b) && m.observed(b, a)));
        // Transitivity of the strict order.
        for (int c = 0; c < n; ++c) {
          if (m.observed(a, b) && m.observed(b, c)) CHECK(m.observed(a, c));
        }
      }
    }
  }
  // Cloze masks contain two-cycles by construction.
  VisibilityMask cz = cloze_mask(3);
  CHECK(cz.observed(0, 1));
  CHECK(cz.observed(1, 0));
}

TEST_CASE("mask sampling is deterministic given the stream state") {
  RngStream a(99);
  RngStream b(99);
  for (int i = 0; i < 20; ++i) {
    VisibilityMask ma = sample_disco_mask(7, a);
    VisibilityMask mb = sample_disco_mask(7, b);
    CHECK(ma == mb);
  }
  CHECK(a.counter() == b.counter());
}

TEST_CASE("ranks_from_confidences breaks ties toward lower index") {
  std::vector<double> conf{0.5, 0.5, 0.9};
  CHECK(ranks_from_confidences(conf) == std::vector<int>{2, 3, 1});
}
