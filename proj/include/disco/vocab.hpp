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

#include <string>
#include <unordered_map>
#include <vector>

#include "disco/errors.hpp"

namespace disco {

/// Special token ids, fixed across all vocabularies. LENGTH is prepended to
/// encoder input (never stored in corpora); MASK is consumed only by the
/// CMLM architecture.
namespace specials {
constexpr int kPad = 0;
constexpr int kEos = 1;
constexpr int kLength = 2;
constexpr int kUnk = 3;
constexpr int kMask = 4;
constexpr int kCount = 5;

const char* name(int id);
}  // namespace specials

/// Token table. Content ids start at specials::kCount; the vocabulary file
/// stores one content token per line, line number = id - specials::kCount.
class Vocab {
 public:
  Vocab() = default;

  static Vocab from_tokens(std::vector<std::string> tokens);

  /// Builds from tokenized sentences keeping tokens with frequency >=
  /// min_freq, in first-seen order.
  static Vocab build(const std::vector<std::vector<std::string>>& sentences, int min_freq = 1);

  int size() const { return specials::kCount + static_cast<int>(tokens_.size()); }

  /// Id lookup; unknown tokens map to UNK.
  int id(const std::string& token) const;

  const std::string& token(int id) const;

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace disco
