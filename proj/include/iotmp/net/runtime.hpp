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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iotmp/core/error.hpp"

namespace iotmp::net {

using TimerId = std::uint64_t;

/// Clock plus timers. Implementations serialize every callback they run, so
/// services driven by one executor never see concurrent callbacks.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual TimeMs now() const = 0;
  virtual TimerId schedule(TimeMs delay_ms, std::function<void()> fn) = 0;
  virtual void cancel(TimerId id) = 0;
  void post(std::function<void()> fn) { schedule(0, std::move(fn)); }
};

struct FrameHandler {
  std::function<void(const std::string& from, std::vector<std::uint8_t> frame)> on_frame;
  /// The link to `peer` went away (disconnect, outage, closed socket).
  std::function<void(const std::string& peer)> on_link_down;
};

/// Agent protocol transport carrying core-model frames between addressed
/// endpoints.
class FrameTransport {
 public:
  virtual ~FrameTransport() = default;
  virtual void bind(const std::string& address, FrameHandler handler) = 0;
  virtual void unbind(const std::string& address) = 0;
  /// Returns false when `to` cannot be reached right now. A true return does
  /// not guarantee delivery.
  virtual bool send(const std::string& from, const std::string& to, std::vector<std::uint8_t> frame) = 0;
};

struct HttpRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::map<std::string, std::string> headers;  // keys lowercase
  std::string body;
  bool secure = false;

  std::optional<std::string> header(std::string_view name) const;
};

struct HttpResponse {
  int status = 200;
  std::map<std::string, std::string> headers;  // keys lowercase
  std::string body;

  bool operator==(const HttpResponse&) const = default;
};

using HttpReply = std::function<void(HttpResponse)>;
using HttpHandler = std::function<void(const HttpRequest&, HttpReply)>;

class HttpClient {
 public:
  virtual ~HttpClient() = default;
  /// `done` receives nullopt when the endpoint is unreachable or does not
  /// answer within `timeout_ms`.
  virtual void request(const std::string& address, HttpRequest req, TimeMs timeout_ms,
                       std::function<void(std::optional<HttpResponse>)> done) = 0;
};

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

/// Splits "/a/b?x=1&y=2" into decoded path segments and query parameters.
Target parse_target(std::string_view target);
std::string url_encode(std::string_view text);

}  // namespace iotmp::net
