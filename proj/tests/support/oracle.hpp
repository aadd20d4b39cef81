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

// Reference implementations used only as test oracles. They share no code
// with the library (which uses OpenSSL) so a bug in one cannot hide in both.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

using Digest = std::array<std::uint8_t, 32>;

/// Straight transcription of the SHA-256 compression function.
Digest sha256(std::string_view data);
/// HMAC with a 64-byte block: H((K ^ opad) || H((K ^ ipad) || m)).
Digest hmac_sha256(std::string_view key, std::string_view data);

std::string hex(const Digest& d);
std::string base64url(std::string_view bytes);
std::optional<std::string> unbase64url(std::string_view text);

}  // namespace oracle
