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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iotmp::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
Digest hmac_sha256(std::string_view key, std::string_view data);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view data);
std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex);

/// Unpadded base64url (RFC 4648 section 5).
std::string base64url_encode(std::span<const std::uint8_t> bytes);
std::string base64url_encode(std::string_view text);
/// Strict decoder: rejects padding, foreign characters, impossible lengths and
/// non-canonical trailing bits, so that every accepted text has exactly one
/// byte sequence and vice versa.
std::optional<std::string> base64url_decode(std::string_view text);

bool constant_time_equal(std::string_view a, std::string_view b) noexcept;

/// Source of secrets and generated identifiers. Live services draw from the
/// OS CSPRNG; simulations use a seeded stream so that runs replay exactly.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::string hex(std::size_t n_bytes);
};

class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::mt19937_64 engine_;
};

}  // namespace iotmp::crypto
