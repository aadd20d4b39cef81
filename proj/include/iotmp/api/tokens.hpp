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

#include <mutex>
#include <optional>
#include <string>

#include "iotmp/core/ids.hpp"
#include "iotmp/crypto/digest.hpp"
#include "iotmp/manager/kv_store.hpp"

namespace iotmp::api {

enum class Role { IotApp, ManagementApp };

std::string_view to_string(Role r);
/// Accepts "iot_app" and "management_app". Throws BadRequest.
Role parse_role(std::string_view text);

struct AppRegistration {
  AppId appid;
  std::string secret;  // 64 hex characters; only returned by register_app
  Role role = Role::IotApp;
  TimeMs created_at = 0;
};

/// Registered applications. Only a SHA256 of each secret is kept.
class AppRegistry {
 public:
  AppRegistry(manager::KvStore& store, crypto::RandomSource& random);

  /// Uses `requested` when given and free, otherwise generates an AppID.
  /// A supplied `secret` (64 hex characters) enrolls an application already
  /// registered on another manager of the same deployment.
  /// Errors: AppIDTaken, InvalidIdentifier, BadRequest.
  AppRegistration register_app(const std::optional<std::string>& requested, Role role, TimeMs now,
                               const std::optional<std::string>& secret = std::nullopt);

  struct Entry {
    AppId appid;
    Role role = Role::IotApp;
    std::string secret_sha256;
    TimeMs created_at = 0;
  };
  std::optional<Entry> find(const std::string& appid) const;
  std::size_t size() const;

 private:
  manager::KvStore& store_;
  crypto::RandomSource& random_;
  mutable std::mutex mu_;
};

struct TokenClaims {
  AppId appid;
  Role role = Role::IotApp;
  TimeMs exp = 0;
};

/// Three-part tokens: base64url(header).base64url(payload).base64url(sig)
/// where sig = HMAC-SHA256(server secret, "header.payload") over the encoded
/// segments and the payload is {appid, exp, proof = hex(SHA256(app secret))}.
class TokenService {
 public:
  static constexpr TimeMs kDefaultTtlMs = 3'600'000;

  TokenService(std::string server_secret, const AppRegistry& apps, TimeMs ttl_ms = kDefaultTtlMs);

  /// Errors: BadCredentials.
  std::string mint(const std::string& appid, const std::string& secret, TimeMs now) const;
  /// Errors: Unauthorized (structure, encoding, signature, claims, expiry or
  /// an application that is no longer registered).
  TokenClaims verify(std::string_view token, TimeMs now) const;

  TimeMs ttl_ms() const noexcept { return ttl_ms_; }
  /// The exact header segment every token carries.
  static std::string header_segment();

 private:
  std::string server_secret_;
  const AppRegistry& apps_;
  TimeMs ttl_ms_;
};

}  // namespace iotmp::api
