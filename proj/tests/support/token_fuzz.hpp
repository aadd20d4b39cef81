// Copyright 2026 The IoT-MP Authors
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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oracle.hpp"

namespace oracle {

/// Seeded mutations of a valid three-segment token. Every result differs
/// from the input.
class TokenMutator {
 public:
  explicit TokenMutator(std::uint64_t seed) : rng_(seed) {}

  enum class Kind { SegmentEdit, SegmentSwap, Truncate, ExpiryTamper, Splice, Count };
  static const char* name(Kind k);

  std::string mutate(const std::string& token, Kind* kind_out = nullptr);

 private:
  static std::vector<std::string> split(const std::string& token);
  static std::string join(const std::vector<std::string>& parts);
  char random_char();

  std::mt19937_64 rng_;
};

}  // namespace oracle
