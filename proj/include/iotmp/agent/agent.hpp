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
#include <vector>

#include "iotmp/agent/profile.hpp"
#include "iotmp/core/attributes.hpp"
#include "iotmp/core/message.hpp"
#include "iotmp/net/runtime.hpp"

namespace iotmp::agent {

enum class Phase { Unregistered, Joining, PendingApproval, Registered, Disconnected };

std::string_view to_string(Phase p);

enum class JoinMethod { Direct, Associate };

struct Registration {
  Mtid mtid;
  AgentId agentid;
  std::string manager_address;

  bool operator==(const Registration&) const = default;
};

struct JoinOutcome {
  enum class Status { PendingApproval, Registered } status = Status::PendingApproval;
  Registration registration;
};

/// Exponential backoff with full jitter: attempt k waits uniformly in
/// [0, min(cap, base * 2^k)].
struct Backoff {
  TimeMs base_ms = 1000;
  TimeMs cap_ms = 32000;

  TimeMs ceiling(unsigned attempt) const noexcept;
  TimeMs delay(unsigned attempt, SampleRng& rng) const;
};

struct AgentConfig {
  std::string address;  // this agent's transport endpoint
  JoinMethod join_method = JoinMethod::Direct;
  std::string manager_address;         // Method I
  std::vector<std::string> discovery;  // Method II
  ValidatedDescriptor descriptor;
  /// Set when this agent fronts another device (the agent is not on the thing).
  std::optional<std::string> host;
  DeviceProfile profile;
  std::vector<std::string> behavioural_config;  // attributes this thing reports
  std::vector<AlertRule> alert_rules;
  TimeMs update_period_ms = 1000;  // 0 disables periodic reporting
  TimeMs response_timeout_ms = 2000;
  TimeMs discovery_window_ms = 500;
  TimeMs alert_retry_ms = 1000;
  unsigned max_alert_attempts = 30;
  Backoff backoff;
  std::uint64_t seed = 1;
  double battery_drain_per_update = 0.01;
};

/// Loads an agent config file (see README for the schema). Throws ConfigInvalid.
AgentConfig agent_config_from_json(const Json& j);

struct AgentStats {
  std::uint64_t updates_sent = 0;
  std::uint64_t updates_acked = 0;
  std::uint64_t updates_rejected = 0;
  std::uint64_t alerts_emitted = 0;
  std::uint64_t alert_transmissions = 0;
  std::uint64_t alerts_acked = 0;
  std::uint64_t reconnect_attempts = 0;
  std::uint64_t joins_completed = 0;
};

/// Agent for one managed thing. All entry points run on the executor's
/// thread; nothing here is safe to call concurrently.
class Agent {
 public:
  using JoinCallback = std::function<void(Result<JoinOutcome>)>;
  using AckCallback = std::function<void(Result<std::uint64_t>)>;

  Agent(AgentConfig config, net::Executor& executor, net::FrameTransport& transport);
  ~Agent();
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  /// Runs the configured join method, keeps reporting on the update period
  /// and reconnects after link loss.
  void start();
  void stop();

  // Method I. Precondition: Unregistered (throws PreconditionFailed).
  void direct_join(const std::string& manager_address, JoinCallback cb);
  // Method II. Precondition: Unregistered.
  void associate_join(const std::vector<std::string>& endpoints, JoinCallback cb);
  // Method III. Precondition: Disconnected with a saved registration.
  void reconnect(JoinCallback cb);

  /// Precondition: attribute in behavioural_config (throws PreconditionFailed).
  /// Not being joined is reported through the callback as NotRegistered.
  void send_update(BehaviouralAttribute reading, AckCallback cb = {});
  /// Samples every configured attribute and reports it.
  void report_now();

  ProtocolMessage handle_get(const ProtocolMessage& req);
  ProtocolMessage handle_set(const ProtocolMessage& instr);
  ProtocolMessage handle_mgmt_get(const ProtocolMessage& req);
  void emit_alert(const std::string& attribute, const AttributeValue& value);

  /// Transport-side notification that the manager link dropped.
  void on_link_down();

  Phase phase() const noexcept { return phase_; }
  /// Only present while Registered or Disconnected.
  std::optional<Registration> saved_registration() const;
  const AgentConfig& config() const noexcept { return config_; }
  const Mtid& mtid() const noexcept { return config_.descriptor.id(); }
  const AgentStats& stats() const noexcept { return stats_; }
  double battery() const noexcept { return battery_; }
  std::optional<BehaviouralAttribute> latest(const std::string& attribute) const;
  std::optional<std::string> actuator_state(const std::string& attribute) const;
  std::uint64_t last_seq() const noexcept { return seq_; }

 private:
  struct Pending {
    net::TimerId timer = 0;
    std::function<void(std::optional<ProtocolMessage>)> done;
  };
  struct OutstandingAlert {
    ProtocolMessage msg;
    unsigned attempts = 0;
    net::TimerId timer = 0;
  };
  struct Advert {
    std::string address;
    std::string managerid;
    double load = 0;
  };

  ProtocolMessage make(MessageKind kind, bool with_mtid = true);
  std::vector<BodyEntry> join_body() const;
  bool send_frame(const std::string& to, const ProtocolMessage& msg);
  /// Sends and waits for the reply correlated by seq; nullopt on timeout.
  bool request(const std::string& to, ProtocolMessage msg,
               std::function<void(std::optional<ProtocolMessage>)> done);
  void on_frame(const std::string& from, std::vector<std::uint8_t> frame);
  void complete_join(const ProtocolMessage& ack, const std::string& manager_address, const JoinCallback& cb);
  void try_adverts(std::vector<Advert> adverts, std::size_t index, bool any_rejected, JoinCallback cb);
  void run_configured_join();
  void schedule_reconnect();
  void schedule_report();
  void transmit_alert(std::uint64_t seq);
  void flush_alerts();
  void set_phase(Phase p);

  AgentConfig config_;
  net::Executor& executor_;
  net::FrameTransport& transport_;
  SampleRng rng_;
  Phase phase_ = Phase::Unregistered;
  std::optional<Registration> registration_;
  std::uint64_t seq_ = 0;
  bool running_ = false;
  bool bound_ = false;
  unsigned reconnect_attempt_ = 0;
  net::TimerId reconnect_timer_ = 0;
  net::TimerId report_timer_ = 0;
  std::size_t sample_step_ = 0;
  double battery_ = 100.0;
  std::map<std::uint64_t, Pending> pending_;
  std::map<std::uint64_t, OutstandingAlert> alerts_;
  std::vector<Advert> adverts_;
  std::optional<std::uint64_t> discovery_round_;
  std::map<std::string, BehaviouralAttribute> latest_;
  std::map<std::string, std::string> actuators_;
  std::map<std::size_t, bool> rule_armed_;
  AgentStats stats_;
};

}  // namespace iotmp::agent
