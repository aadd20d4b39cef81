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
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotmp/agent/agent.hpp"
#include "iotmp/api/management_api.hpp"
#include "iotmp/manager/manager.hpp"
#include "iotmp/moms/moms.hpp"
#include "iotmp/net/runtime.hpp"

namespace iotmp::sim {

/// Simulated clock with an explicit event queue. Events run in (time,
/// insertion order), so a run is a pure function of its inputs.
class SimExecutor final : public net::Executor {
 public:
  explicit SimExecutor(TimeMs start = 0) : now_(start) {}

  TimeMs now() const override { return now_; }
  net::TimerId schedule(TimeMs delay_ms, std::function<void()> fn) override;
  void cancel(net::TimerId id) override;

  /// Runs one event; false when the queue is empty.
  bool step();
  /// Runs every event due at or before `t`, then sets the clock to `t`.
  void run_until(TimeMs t);
  void run_for(TimeMs d) { run_until(now_ + d); }
  std::size_t pending() const noexcept { return queue_.size(); }
  std::uint64_t executed() const noexcept { return executed_; }

 private:
  using Key = std::pair<TimeMs, std::uint64_t>;
  TimeMs now_;
  std::uint64_t next_ = 0;
  std::uint64_t executed_ = 0;
  std::map<Key, std::function<void()>> queue_;
  std::map<net::TimerId, Key> index_;
};

struct TraceEvent {
  TimeMs t = 0;
  std::string actor;
  std::string kind;
  std::string digest;  // first 16 hex digits of the payload's SHA256
};

/// Ordered record of everything observable on the simulated network.
class Trace {
 public:
  void record(TimeMs t, std::string actor, std::string kind, std::string_view payload);
  const std::vector<TraceEvent>& events() const noexcept { return events_; }
  /// SHA256 over the canonical serialization: one "t|actor|kind|digest\n" line per event.
  std::string digest() const;
  std::string serialize() const;
  std::size_t count(std::string_view kind) const;

 private:
  std::vector<TraceEvent> events_;
};

enum class FaultKind { Disconnect, DropPct, ManagerOutage };
std::string_view to_string(FaultKind k);
FaultKind parse_fault_kind(std::string_view text);

/// In-process network carrying frames and HTTP exchanges with a fixed
/// latency. Every address belongs to a node (an agent's MTID, a ManagerID,
/// "moms"); faults apply to nodes.
class SimNetwork final : public net::FrameTransport, public net::HttpClient {
 public:
  SimNetwork(SimExecutor& executor, Trace& trace, std::uint64_t seed, TimeMs latency_ms = 5);

  // FrameTransport
  void bind(const std::string& address, net::FrameHandler handler) override;
  void unbind(const std::string& address) override;
  bool send(const std::string& from, const std::string& to, std::vector<std::uint8_t> frame) override;

  // HttpClient, for callers outside any node (test drivers, probes)
  void request(const std::string& address, net::HttpRequest req, TimeMs timeout_ms,
               std::function<void(std::optional<net::HttpResponse>)> done) override;
  /// Requests from `origin` fail while that node is down.
  void request_from(const std::string& origin, const std::string& address, net::HttpRequest req,
                    TimeMs timeout_ms, std::function<void(std::optional<net::HttpResponse>)> done);
  /// HTTP client bound to one node.
  std::unique_ptr<net::HttpClient> client_for(const std::string& node);

  /// Requests reaching this listener are marked secure or plaintext.
  void listen(const std::string& address, bool secure, net::HttpHandler handler);
  void assign(const std::string& address, const std::string& node);
  bool has_node(const std::string& node) const { return nodes_.count(node) != 0; }

  /// Takes the node off the network; links to it drop at both ends. Calls
  /// nest: the node is back once every `true` has been matched by a `false`.
  void set_down(const std::string& node, bool down);
  bool is_down(const std::string& node) const;
  /// Percentage of frames to or from the node that are silently lost.
  void set_drop_pct(const std::string& node, double pct);

  struct Stats {
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_delivered = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t frames_refused = 0;
    std::uint64_t http_requests = 0;
    std::uint64_t http_unreachable = 0;
  };
  const Stats& stats() const noexcept { return stats_; }
  std::map<std::string, std::uint64_t> delivered_by_kind() const { return delivered_by_kind_; }

 private:
  struct Listener {
    bool secure = false;
    net::HttpHandler handler;
  };
  std::string node_of(const std::string& address) const;
  bool reachable(const std::string& address) const;
  bool drop(const std::string& from, const std::string& to);

  SimExecutor& executor_;
  Trace& trace_;
  agent::SampleRng rng_;
  TimeMs latency_ms_;
  std::map<std::string, net::FrameHandler> endpoints_;
  std::map<std::string, Listener> listeners_;
  std::map<std::string, std::string> node_of_;
  std::map<std::string, std::set<std::string>> nodes_;  // node -> addresses
  std::map<std::string, int> down_;
  std::map<std::string, double> drop_pct_;
  std::set<std::pair<std::string, std::string>> links_;  // unordered pairs, stored sorted
  std::map<std::string, std::uint64_t> delivered_by_kind_;
  Stats stats_;
};

// ---------------------------------------------------------------------------
// scenario scripts

struct ManagerSpec {
  manager::ManagerConfig config;
};

struct FleetSpec {
  std::size_t count = 0;
  /// Agents are spread round-robin over these managers (Method I), or all
  /// probe these managers (Method II).
  std::vector<std::string> managers;
  agent::JoinMethod join_method = agent::JoinMethod::Direct;
  Json profile = "thermometer";
  std::string prefix = "mt";
  TimeMs update_period_ms = 1000;
  std::vector<agent::AlertRule> alert_rules;
  /// Allowlisted at the managers; otherwise the agents wait for approval.
  bool preapproved = true;
  std::optional<std::string> admin;  // descriptor Admin attribute
  /// Agents fronted by a host get AgentIDs "<host>_<mtid>".
  std::optional<std::string> host;
};

struct AppSpec {
  std::string appid;
  api::Role role = api::Role::IotApp;
};

struct FaultSpec {
  TimeMs at = 0;
  std::string target;
  FaultKind kind = FaultKind::Disconnect;
  TimeMs duration = 0;
  double pct = 0;
};

struct ProbeSpec {
  TimeMs at = 0;
  std::string name;
  std::string via;  // listener address
  std::optional<std::string> app;  // sends that application's token
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> headers;
  Json body;  // null for no body
  std::optional<int> expect_status;
  /// JSON pointer -> expected value in the response body.
  std::map<std::string, Json> expect_json;
};

struct ScenarioScript {
  std::uint64_t seed = 1;
  TimeMs start_time = 0;
  TimeMs duration_ms = 60'000;
  TimeMs latency_ms = 5;
  Json hierarchy;  // null: bundled world
  std::vector<ManagerSpec> managers;
  bool moms = true;
  std::vector<FleetSpec> fleets;
  std::vector<AppSpec> apps;
  std::vector<FaultSpec> faults;
  std::vector<ProbeSpec> probes;
};

/// Errors: ScriptInvalid.
ScenarioScript script_from_json(const Json& j);

struct ProbeResult {
  std::string name;
  TimeMs at = 0;
  bool passed = false;
  int status = 0;
  std::string body;
  std::string detail;
};

// ---------------------------------------------------------------------------

/// A whole deployment on one simulated clock: managers with their APIs (a
/// TLS listener and a plaintext one each), the MoMs, and agent fleets.
class SimWorld {
 public:
  /// Plaintext listeners sit next to the secure ones under this suffix.
  static constexpr const char* kPlainSuffix = "-plain";
  static constexpr const char* kMoms = "moms";

  explicit SimWorld(const ScenarioScript& script);
  ~SimWorld();
  SimWorld(const SimWorld&) = delete;
  SimWorld& operator=(const SimWorld&) = delete;

  SimExecutor& executor() noexcept { return executor_; }
  SimNetwork& network() noexcept { return network_; }
  Trace& trace() noexcept { return trace_; }
  const privacy::GeoHierarchy& hierarchy() const noexcept { return *hierarchy_; }
  std::shared_ptr<const privacy::GeoHierarchy> hierarchy_ptr() const noexcept { return hierarchy_; }

  manager::Manager& manager(const std::string& managerid);
  api::ManagementApi& api(const std::string& managerid);
  std::vector<std::string> manager_ids() const;
  moms::Moms* moms() noexcept { return moms_.get(); }
  agent::Agent* agent(const std::string& mtid);
  std::vector<agent::Agent*> agents();

  /// Precondition: n >= 1 (throws PreconditionFailed). Agents start at once.
  std::vector<agent::Agent*> spawn_fleet(std::size_t n, const FleetSpec& spec);
  /// Target is an MTID or a ManagerID. Errors: UnknownTarget.
  void inject_fault(const std::string& target, FaultKind kind, TimeMs duration, double pct = 0);

  /// Registers the application on every manager with one shared secret and
  /// returns a token minted for it.
  std::string register_app(const std::string& appid, api::Role role);
  const std::string& token(const std::string& appid) const;

  /// Issues an HTTP call on the simulated network and waits for the answer.
  net::HttpResponse call(const std::string& address, net::HttpRequest req, TimeMs timeout_ms = 30'000);
  net::HttpResponse call(const std::string& address, const std::string& method, const std::string& target,
                         const std::optional<std::string>& app, const Json& body = nullptr,
                         std::map<std::string, std::string> headers = {});

  void run_until(TimeMs t) { executor_.run_until(t); }
  void run_for(TimeMs d) { executor_.run_for(d); }
  TimeMs now() const { return executor_.now(); }

  std::size_t total_records() const;

 private:
  struct ManagerNode {
    std::unique_ptr<net::HttpClient> client;
    std::unique_ptr<manager::Manager> manager;
    std::unique_ptr<api::ManagementApi> api;
  };

  SimExecutor executor_;
  Trace trace_;
  SimNetwork network_;
  std::uint64_t seed_;
  crypto::SeededRandom random_;
  std::shared_ptr<const privacy::GeoHierarchy> hierarchy_;
  std::map<std::string, ManagerNode> managers_;
  std::unique_ptr<moms::Moms> moms_;
  std::map<std::string, std::unique_ptr<agent::Agent>> agents_;
  std::map<std::string, std::string> tokens_;
  std::map<std::string, std::size_t> prefix_counter_;
  std::size_t leaf_cursor_ = 0;
  std::size_t fleet_counter_ = 0;
};

struct ScenarioReport {
  std::vector<ProbeResult> probes;
  std::string trace_digest;
  std::string trace_text;  // canonical serialization the digest is taken over
  std::size_t trace_events = 0;
  std::size_t records = 0;
  bool all_passed() const;
  Json to_json() const;
};

/// Builds the world, runs it to the script's end on the simulated clock and
/// evaluates every probe. Errors: ScriptInvalid.
ScenarioReport run_scenario(const ScenarioScript& script);

}  // namespace iotmp::sim
