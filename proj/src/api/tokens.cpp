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

#include "iotmp/api/tokens.hpp"

#include <algorithm>

#include "iotmp/core/json_codec.hpp"

namespace iotmp::api {

namespace {

constexpr const char* kApps = "apps";

[[noreturn]] void unauthorized(const std::string& why) { throw Error(Errc::Unauthorized, why); }

std::vector<std::string_view> split_dots(std::string_view token) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = token.find('.', start);
    parts.push_back(token.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

}  // namespace

std::string_view to_string(Role r) { return r == Role::ManagementApp ? "management_app" : "iot_app"; }

Role parse_role(std::string_view text) {
  if (text == "iot_app") return Role::IotApp;
  if (text == "management_app") return Role::ManagementApp;
  throw Error(Errc::BadRequest, "role must be iot_app or management_app");
}

AppRegistry::AppRegistry(manager::KvStore& store, crypto::RandomSource& random) : store_(store), random_(random) {}

AppRegistration AppRegistry::register_app(const std::optional<std::string>& requested, Role role, TimeMs now,
                                          const std::optional<std::string>& secret) {
  if (secret) {
    const auto bytes = crypto::from_hex(*secret);
    if (!bytes || bytes->size() != 32) throw Error(Errc::BadRequest, "secret must be 64 hex characters");
  }
  std::lock_guard lock(mu_);
  AppRegistration reg;
  if (requested) {
    reg.appid = AppId(*requested);
    if (store_.get(kApps, reg.appid.str())) throw Error(Errc::AppIDTaken, reg.appid.str());
  } else {
    do {
      reg.appid = AppId("app-" + random_.hex(8));
    } while (store_.get(kApps, reg.appid.str()));
  }
  reg.secret = secret ? *secret : random_.hex(32);
  reg.role = role;
  reg.created_at = now;
  store_.put(kApps, reg.appid.str(),
             Json{{"appid", reg.appid.str()},
                  {"role", std::string(to_string(role))},
                  {"secret_sha256", crypto::sha256_hex(reg.secret)},
                  {"created_at", now}});
  return reg;
}

std::optional<AppRegistry::Entry> AppRegistry::find(const std::string& appid) const {
  auto j = store_.get(kApps, appid);
  if (!j) return std::nullopt;
  Entry e;
  e.appid = AppId(j->at("appid").get<std::string>());
  e.role = parse_role(j->at("role").get<std::string>());
  e.secret_sha256 = j->at("secret_sha256").get<std::string>();
  e.created_at = j->at("created_at").get<TimeMs>();
  return e;
}

std::size_t AppRegistry::size() const { return store_.size(kApps); }

TokenService::TokenService(std::string server_secret, const AppRegistry& apps, TimeMs ttl_ms)
    : server_secret_(std::move(server_secret)), apps_(apps), ttl_ms_(ttl_ms) {
  if (server_secret_.empty()) throw Error(Errc::ConfigInvalid, "server secret must not be empty");
}

std::string TokenService::header_segment() {
  static const std::string segment = crypto::base64url_encode(std::string_view(R"({"alg":"HS256","typ":"JWT"})"));
  return segment;
}

std::string TokenService::mint(const std::string& appid, const std::string& secret, TimeMs now) const {
  auto app = apps_.find(appid);
  const auto proof = crypto::sha256_hex(secret);
  if (!app || !crypto::constant_time_equal(proof, app->secret_sha256)) {
    throw Error(Errc::BadCredentials, "unknown application or wrong secret");
  }
  const Json payload{{"appid", appid}, {"exp", now + ttl_ms_}, {"proof", proof}};
  const auto signing_input = header_segment() + "." + crypto::base64url_encode(std::string_view(payload.dump()));
  const auto sig = crypto::hmac_sha256(server_secret_, signing_input);
  return signing_input + "." + crypto::base64url_encode(sig);
}

TokenClaims TokenService::verify(std::string_view token, TimeMs now) const {
  const auto parts = split_dots(token);
  if (parts.size() != 3) unauthorized("token must have three segments");
  if (parts[0] != header_segment()) unauthorized("unsupported token header");
  const auto sig = crypto::base64url_decode(parts[2]);
  if (!sig || sig->size() != 32) unauthorized("bad signature encoding");
  const auto signing_input = std::string(token.substr(0, parts[0].size() + 1 + parts[1].size()));
  const auto expected = crypto::hmac_sha256(server_secret_, signing_input);
  if (!crypto::constant_time_equal(*sig, std::string_view(reinterpret_cast<const char*>(expected.data()), expected.size()))) {
    unauthorized("signature mismatch");
  }
  const auto payload_text = crypto::base64url_decode(parts[1]);
  if (!payload_text) unauthorized("bad payload encoding");
  Json payload;
  try {
    payload = Json::parse(*payload_text);
  } catch (const Json::exception&) {
    unauthorized("payload is not JSON");
  }
  if (!payload.is_object() || payload.size() != 3 || !payload.contains("appid") || !payload["appid"].is_string() ||
      !payload.contains("exp") || !payload["exp"].is_number_integer() || !payload.contains("proof") ||
      !payload["proof"].is_string()) {
    unauthorized("malformed claims");
  }
  const auto appid = payload["appid"].get<std::string>();
  const auto exp = payload["exp"].get<TimeMs>();
  if (now >= exp) unauthorized("token expired");
  auto app = apps_.find(appid);
  if (!app || !crypto::constant_time_equal(payload["proof"].get<std::string>(), app->secret_sha256)) {
    unauthorized("application not registered");
  }
  return TokenClaims{app->appid, app->role, exp};
}

}  // namespace iotmp::api
