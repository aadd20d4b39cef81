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
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/json_codec.hpp"
#include "iotmp/core/message.hpp"
#include "iotmp/manager/kv_store.hpp"
#include "iotmp/net/runtime.hpp"
#include "iotmp/privacy/geo.hpp"
#include "iotmp/privacy/policy.hpp"
#include "iotmp/security/security_module.hpp"

namespace iotmp::manager {

enum class Approval { Pending, Approved, Revoked };
enum class Connection { Connected, Disconnected };

std::string_view to_string(Approval a);
std::string_view to_string(Connection c);

struct ManagedThingRecord {
  Mtid mtid;
  AgentId agentid;
  ValidatedDescriptor descriptor;
  std::optional<std::string> host;
  /// Fixed location from the descriptor, or the latest MobileLocation reading.
  std::optional<SemanticLocation> loc;
  std::string security_ref;  // key of the profile and policy set
  Connection connection = Connection::Disconnected;
  std::string agent_address;  // transport peer of the live connection
  TimeMs created_at = 0;
  TimeMs last_seen = 0;
  std::optional<double> battery;  // last BatteryLife seen
  std::optional<TimeMs> last_rtt_ms;
};

Json to_json(const ManagedThingRecord& r, Approval approval);

struct StoredReading {
  BehaviouralAttribute reading;
  /// "agent" for device traffic, "app:<AppID>" for contributed data.
  std::string source;
  std::string store_key;
};

struct StoredAlert {
  Mtid mtid;
  std::uint64_t seq = 0;
  std::string attribute;
  AttributeValue value;
  TimeMs ts = 0;
  TimeMs received_at = 0;
};

Json to_json(const StoredAlert& a);

struct ManagementStatus {
  Mtid mtid;
  std::optional<double> battery;
  bool link_up = false;
  std::optional<TimeMs> last_rtt_ms;
  TimeMs last_seen = 0;
  std::map<std::string, std::uint64_t> message_counters;
};

Json to_json(const ManagementStatus& s);

struct TimeRange {
  std::optional<TimeMs> from;  // inclusive
  std::optional<TimeMs> to;    // inclusive
  bool contains(TimeMs t) const noexcept { return (!from || t >= *from) && (!to || t <= *to); }
};

/// Stored data for one attribute: either its time series or, for management
/// attributes, the descriptor value.
struct QueryResult {
  std::vector<BehaviouralAttribute> readings;
  std::optional<ManagementAttribute> management;
};

struct SetResult {
  std::string attribute;
  std::string state;
};

struct ManagerConfig {
  ManagerId managerid;
  std::string agent_address;  // frame endpoint
  /// HTTP address published to the MoMs (the TLS listener).
  std::string api_address;
  std::optional<std::string> moms_address;
  std::string moms_key;
  std::set<std::string> allowlist;  // pre-approved AgentIDs
  std::set<std::string> admins;
  /// Maximum number of records; joins beyond it are rejected.
  std::optional<std::size_t> capacity;
  TimeMs device_timeout_ms = 5000;
  TimeMs publish_period_ms = 10'000;
  TimeMs publish_retry_ms = 1000;
  std::optional<std::string> storage_path;
};

struct ManagerStats {
  std::uint64_t updates_stored = 0;
  std::uint64_t quarantined = 0;  // UPDATE/ALERT frames refused for admission state
  std::uint64_t alerts_stored = 0;
  std::uint64_t alert_duplicates = 0;
  std::uint64_t join_acks = 0;
  std::uint64_t records_created = 0;
  std::uint64_t publishes_ok = 0;
  std::uint64_t publishes_failed = 0;
};

/// The manager: agent connections, registration, the thing store, device
/// round trips and topology publication. Frame and timer handling runs on the
/// executor; the mutex makes read accessors safe from other threads.
class Manager {
 public:
  template <class T>
  using Callback = std::function<void(Result<T>)>;

  Manager(ManagerConfig config, net::Executor& executor, net::FrameTransport& transport,
          net::HttpClient* http, std::shared_ptr<const privacy::GeoHierarchy> hierarchy);
  ~Manager();
  Manager(const Manager&) = delete;
  Manager& operator=(const Manager&) = delete;

  /// Binds the agent endpoint and starts periodic topology publication.
  void start();
  void stop();

  const ManagerConfig& config() const noexcept { return config_; }
  const ManagerId& id() const noexcept { return config_.managerid; }
  net::Executor& executor() noexcept { return executor_; }
  KvStore& store() noexcept { return *store_; }
  const KvStore& store() const noexcept { return *store_; }
  security::SecurityModule& security() noexcept { return security_; }
  privacy::PrivacyModule& privacy() noexcept { return privacy_; }
  const privacy::GeoHierarchy& hierarchy() const noexcept { return privacy_.hierarchy(); }

  // store reads
  std::optional<ManagedThingRecord> record(const Mtid& mtid) const;
  std::vector<ManagedThingRecord> records() const;
  std::vector<Mtid> mtids() const;
  std::size_t record_count() const;
  Approval approval_of(const ManagedThingRecord& r) const;
  /// Errors: UnknownMT, UnknownAttribute.
  QueryResult query_mt(const Mtid& mtid, const std::string& attribute, const TimeRange& range = {}) const;
  std::vector<StoredReading> stored_readings(const Mtid& mtid, const std::string& attribute) const;
  std::size_t reading_count() const;
  std::vector<StoredAlert> alerts(std::optional<Mtid> mtid = std::nullopt) const;
  std::map<std::string, std::uint64_t> counters(const Mtid& mtid) const;
  ManagerStats stats() const;

  // device round trips; UnknownMT is reported through the callback
  void get_live(const Mtid& mtid, const std::string& attribute, Callback<std::vector<BehaviouralAttribute>> cb);
  void actuate(const Mtid& mtid, const std::string& attribute, const std::string& value, Callback<SetResult> cb);
  void mgmt_status(const Mtid& mtid, Callback<ManagementStatus> cb);

  // management mutations
  /// Pre-approves an AgentID that has not joined yet.
  void allow_agent(const std::string& agentid);
  AgentId approve_agent(const AgentId& agentid, const std::string& admin);
  AgentId revoke_agent(const AgentId& agentid, const std::string& admin);
  /// Appends contributed readings tagged with the application. Errors: UnknownMT.
  void contribute(const Mtid& mtid, const std::string& appid, std::vector<BehaviouralAttribute> readings);
  /// Replaces the given management attributes; ID cannot change. Errors:
  /// UnknownMT, MalformedDescriptor.
  ManagedThingRecord put_attributes(const Mtid& mtid, const std::vector<ManagementAttribute>& attrs);
  /// Removes the record with its readings, alerts, profile and policies.
  void delete_thing(const Mtid& mtid);
  std::size_t delete_readings(const Mtid& mtid, const std::string& attribute, const TimeRange& range);
  /// Errors: UnknownMT, InvalidPolicy, DuplicatePolicy, LevelOutOfRange.
  void set_policies(const Mtid& mtid, std::vector<privacy::DisclosurePolicy> policies);

  /// Sends the current topology now (and keeps retrying on failure).
  void publish_topology();
  Json topology_payload() const;

 private:
  struct PendingRequest {
    net::TimerId timer = 0;
    TimeMs sent_at = 0;
    std::function<void(std::optional<ProtocolMessage>)> done;
  };

  ProtocolMessage make(MessageKind kind, std::optional<Mtid> mtid = std::nullopt);
  void send(const std::string& to, const ProtocolMessage& msg);
  void reply_error(const std::string& to, const ProtocolMessage& req, std::string_view code);
  /// Sends `msg` to the thing's agent and waits up to the device timeout.
  /// A disconnected record waits the full timeout without sending.
  void device_request(const Mtid& mtid, ProtocolMessage msg, std::function<void(std::optional<ProtocolMessage>)> done);

  void on_frame(const std::string& from, std::vector<std::uint8_t> frame);
  void on_link_down(const std::string& peer);
  void handle_join(const std::string& from, const ProtocolMessage& msg);
  void handle_discovery(const std::string& from, const ProtocolMessage& msg);
  void handle_reconnect(const std::string& from, const ProtocolMessage& msg);
  void handle_update(const std::string& from, const ProtocolMessage& msg);
  void handle_alert(const std::string& from, const ProtocolMessage& msg);
  /// Admission check shared by UPDATE and ALERT. Returns the record when
  /// the frame may be stored, after replying with an ERROR otherwise.
  std::optional<ManagedThingRecord> admit_traffic(const std::string& from, const ProtocolMessage& msg);

  // caller holds mu_
  void append_reading_locked(const Mtid& mtid, BehaviouralAttribute r, const std::string& source);
  void persist_record_locked(const ManagedThingRecord& r);
  ManagedThingRecord* find_locked(const Mtid& mtid);

  void load_from_store();
  void topology_changed();
  void schedule_publish(TimeMs delay);

  ManagerConfig config_;
  net::Executor& executor_;
  net::FrameTransport& transport_;
  net::HttpClient* http_;
  std::unique_ptr<KvStore> store_;
  security::SecurityModule security_;
  privacy::PrivacyModule privacy_;

  mutable std::mutex mu_;
  std::map<Mtid, ManagedThingRecord> records_;
  std::map<Mtid, std::map<std::string, std::vector<StoredReading>>> readings_;
  std::map<std::pair<Mtid, std::uint64_t>, StoredAlert> alerts_;
  std::map<Mtid, std::map<std::string, std::uint64_t>> counters_;
  std::map<std::string, std::uint64_t> reading_serial_;  // per (mtid|attr) key suffix
  ManagerStats stats_;

  std::uint64_t seq_ = 0;
  std::map<std::uint64_t, PendingRequest> pending_;
  bool running_ = false;
  bool bound_ = false;
  net::TimerId publish_timer_ = 0;
  bool publish_in_flight_ = false;
  bool publish_dirty_ = false;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

/// Loads a manager config file. Throws ConfigInvalid.
ManagerConfig manager_config_from_json(const Json& j);

}  // namespace iotmp::manager
