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

#include <stdexcept>
#include <string>

namespace disco {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes and one-line diagnostics.

// Tensor extents do not line up (matmul inner dims, mask sizes, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A sequence exceeds a configured capacity (max positions, length bins,
// token budget).
struct LengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An argument violates a documented precondition (non-permutation order,
// beam size < 1, empty corpus).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A file or stream does not parse (misaligned bitext, bad checkpoint magic,
// config schema violations).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A token or bin id is out of range for its table.
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A NaN or Inf escaped an operation; always a bug or a diverged run.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace disco
