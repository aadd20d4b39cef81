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
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iotmp/api/tokens.hpp"
#include "iotmp/manager/manager.hpp"
#include "iotmp/net/runtime.hpp"

namespace iotmp::api {

struct ApiConfig {
  std::string server_secret;
  TimeMs token_ttl_ms = TokenService::kDefaultTtlMs;
  /// Honour the X-IoTMP-Time header as the policy clock (what-if previews).
  bool what_if_time_override = false;
  /// When set, POST /apps requires a matching X-Operator-Key header.
  std::optional<std::string> operator_key;
};

/// Maps an error code to its HTTP status.
int http_status(Errc code);

/// JSON error body {"error": <code>, "detail": <text>} with its status.
net::HttpResponse error_response(const Error& e);
net::HttpResponse json_response(int status, const Json& body);

/// REST front of one manager. Every read of thing data runs
/// verify -> security check -> privacy decision (location attributes) -> store,
/// and each stage is recorded so tests can check the order.
class ManagementApi {
 public:
  ManagementApi(manager::Manager& manager, ApiConfig config, crypto::RandomSource& random);

  void handle(const net::HttpRequest& req, net::HttpReply reply);
  net::HttpHandler handler();

  AppRegistry& apps() noexcept { return apps_; }
  const TokenService& tokens() const noexcept { return tokens_; }
  manager::Manager& manager() noexcept { return manager_; }

  struct StageEvent {
    std::uint64_t request = 0;
    std::string stage;  // verify, sm, pm, store, device
    bool ok = false;
  };
  std::vector<StageEvent> stage_log() const;
  void clear_stage_log();

 private:
  struct Call;
  using CallPtr = std::shared_ptr<Call>;

  void dispatch(const CallPtr& call);
  void stage(const Call& call, std::string_view name, bool ok);
  TokenClaims authenticate(Call& call);
  void require_management(Call& call);
  void require_owner(Call& call, const Mtid& mtid);
  /// Throws UnknownMT or Forbidden.
  void security_gate(Call& call, const Mtid& mtid);
  TimeMs policy_time(const Call& call) const;

  void get_attribute(const CallPtr& call, const Mtid& mtid, const std::string& attribute);
  void post_actuation(const CallPtr& call, const Mtid& mtid);
  void post_data(Call& call, const Mtid& mtid);
  void get_status(const CallPtr& call, const Mtid& mtid);
  void list_things(Call& call);
  void list_alerts(Call& call);
  void profiles(Call& call, const Mtid& mtid);
  void policies(Call& call, const Mtid& mtid);

  manager::Manager& manager_;
  ApiConfig config_;
  AppRegistry apps_;
  TokenService tokens_;

  mutable std::mutex log_mu_;
  std::deque<StageEvent> log_;
  std::uint64_t next_request_ = 0;
};

}  // namespace iotmp::api
