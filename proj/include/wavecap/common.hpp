// Copyright 2026 The wavecap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

// The library is built twice: the default float build used for training and
// a double build used for gradient verification. Each lives in its own inline
// namespace so that both can be linked into one test binary.
#ifdef WAVECAP_REAL_DOUBLE
#define WAVECAP_ABI f64
#else
#define WAVECAP_ABI f32
#endif

namespace wavecap {
inline namespace WAVECAP_ABI {

#ifdef WAVECAP_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or channel counts.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse (non-scalar loss, bad token index, fully masked attention row).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or audio input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Corpus or caption content that cannot be used.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace WAVECAP_ABI
}  // namespace wavecap
