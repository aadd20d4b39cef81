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

#include "iotmp/agent/agent.hpp"

#include <algorithm>

namespace iotmp::agent {

namespace {

Error precondition(const std::string& what) { return Error(Errc::PreconditionFailed, what); }

Errc code_from_reply(const ProtocolMessage& reply, Errc fallback) {
  auto code = reply.control_string(ctl::kCode);
  if (!code) return fallback;
  if (*code == "UnknownRegistration") return Errc::UnknownRegistration;
  if (*code == "UnapprovedAgent") return Errc::RejectedUnapproved;
  if (*code == "DuplicateMTID" || *code == "MalformedDescriptor") return Errc::JoinRejected;
  return fallback;
}

BodyEntry entry(std::string_view name, AttributeValue value) {
  return BodyEntry{std::string(name), std::move(value), std::nullopt, std::nullopt};
}

}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Unregistered: return "Unregistered";
    case Phase::Joining: return "Joining";
    case Phase::PendingApproval: return "PendingApproval";
    case Phase::Registered: return "Registered";
    case Phase::Disconnected: return "Disconnected";
  }
  return "?";
}

TimeMs Backoff::ceiling(unsigned attempt) const noexcept {
  TimeMs c = base_ms;
  for (unsigned i = 0; i < attempt && c < cap_ms; ++i) c *= 2;
  return std::min(c, cap_ms);
}

TimeMs Backoff::delay(unsigned attempt, SampleRng& rng) const {
  const auto c = ceiling(attempt);
  return static_cast<TimeMs>(rng.uniform01() * static_cast<double>(c + 1));
}

Agent::Agent(AgentConfig config, net::Executor& executor, net::FrameTransport& transport)
    : config_(std::move(config)), executor_(executor), transport_(transport), rng_(config_.seed) {
  for (const auto& name : config_.behavioural_config) {
    if (config_.profile.sensor(name) == nullptr) {
      throw Error(Errc::ConfigInvalid, "behavioural attribute '" + name + "' is not produced by profile '" +
                                           config_.profile.name + "'");
    }
  }
  for (const auto& a : config_.profile.actuators) actuators_[a.attribute] = a.initial;
  if (const auto* b = config_.descriptor.find(attr::kBatteryLife)) battery_ = std::get<double>(b->value);
  transport_.bind(config_.address,
                  net::FrameHandler{[this](const std::string& from, std::vector<std::uint8_t> frame) {
                                      on_frame(from, std::move(frame));
                                    },
                                    [this](const std::string& peer) {
                                      // Links to managers probed during discovery do not matter.
                                      if (registration_ && registration_->manager_address == peer) on_link_down();
                                    }});
  bound_ = true;
}

Agent::~Agent() {
  stop();
  for (auto& [_, p] : pending_) executor_.cancel(p.timer);
  for (auto& [_, a] : alerts_) executor_.cancel(a.timer);
  if (bound_) transport_.unbind(config_.address);
}

void Agent::set_phase(Phase p) { phase_ = p; }

std::optional<Registration> Agent::saved_registration() const {
  if (phase_ == Phase::Registered || phase_ == Phase::Disconnected) return registration_;
  return std::nullopt;
}

std::optional<BehaviouralAttribute> Agent::latest(const std::string& attribute) const {
  auto it = latest_.find(attribute);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Agent::actuator_state(const std::string& attribute) const {
  auto it = actuators_.find(attribute);
  if (it == actuators_.end()) return std::nullopt;
  return it->second;
}

ProtocolMessage Agent::make(MessageKind kind, bool with_mtid) {
  ProtocolMessage m;
  m.kind = kind;
  m.seq = ++seq_;
  m.sender = registration_ ? registration_->agentid.str() : mtid().str();
  if (with_mtid) m.mtid = mtid();
  return m;
}

std::vector<BodyEntry> Agent::join_body() const {
  std::vector<BodyEntry> body;
  for (const auto& a : config_.descriptor.attributes()) {
    body.push_back(BodyEntry{a.name, a.value, a.unit, std::nullopt});
  }
  if (config_.host) body.push_back(entry(ctl::kHost, *config_.host));
  return body;
}

bool Agent::send_frame(const std::string& to, const ProtocolMessage& msg) {
  return transport_.send(config_.address, to, encode_message(msg));
}

bool Agent::request(const std::string& to, ProtocolMessage msg,
                    std::function<void(std::optional<ProtocolMessage>)> done) {
  const auto seq = msg.seq;
  if (!send_frame(to, msg)) return false;
  Pending p;
  p.done = std::move(done);
  p.timer = executor_.schedule(config_.response_timeout_ms, [this, seq] {
    auto it = pending_.find(seq);
    if (it == pending_.end()) return;
    auto cb = std::move(it->second.done);
    pending_.erase(it);
    cb(std::nullopt);
  });
  pending_[seq] = std::move(p);
  return true;
}

void Agent::start() {
  if (running_) return;
  running_ = true;
  if (phase_ == Phase::Unregistered) run_configured_join();
  schedule_report();
}

void Agent::stop() {
  running_ = false;
  if (reconnect_timer_ != 0) executor_.cancel(reconnect_timer_);
  if (report_timer_ != 0) executor_.cancel(report_timer_);
  reconnect_timer_ = 0;
  report_timer_ = 0;
}

void Agent::run_configured_join() {
  auto done = [this](Result<JoinOutcome> r) {
    if (r.ok()) {
      reconnect_attempt_ = 0;
    } else if (running_) {
      schedule_reconnect();
    }
  };
  if (config_.join_method == JoinMethod::Direct) {
    direct_join(config_.manager_address, done);
  } else {
    associate_join(config_.discovery, done);
  }
}

void Agent::schedule_reconnect() {
  if (!running_ || reconnect_timer_ != 0) return;
  const auto delay = config_.backoff.delay(reconnect_attempt_, rng_);
  ++reconnect_attempt_;
  reconnect_timer_ = executor_.schedule(delay, [this] {
    reconnect_timer_ = 0;
    if (!running_) return;
    if (phase_ == Phase::Disconnected && registration_) {
      reconnect([this](Result<JoinOutcome> r) {
        if (r.ok()) {
          reconnect_attempt_ = 0;
          return;
        }
        if (!running_) return;
        if (phase_ == Phase::Unregistered) {
          // The manager no longer knows us: fall back to a fresh join.
          run_configured_join();
        } else {
          schedule_reconnect();
        }
      });
    } else if (phase_ == Phase::Unregistered) {
      run_configured_join();
    }
  });
}

void Agent::complete_join(const ProtocolMessage& ack, const std::string& manager_address, const JoinCallback& cb) {
  const auto status = ack.control_string(ctl::kStatus).value_or("rejected");
  const auto agentid = ack.control_string(ctl::kAgentId);
  if (status == "rejected" || !agentid || !is_valid_identifier(*agentid)) {
    registration_.reset();
    set_phase(Phase::Unregistered);
    cb(Error(Errc::JoinRejected, "manager " + manager_address + " refused the join"));
    return;
  }
  registration_ = Registration{mtid(), AgentId(*agentid), manager_address};
  set_phase(status == "registered" ? Phase::Registered : Phase::PendingApproval);
  ++stats_.joins_completed;
  JoinOutcome out;
  out.status = phase_ == Phase::Registered ? JoinOutcome::Status::Registered : JoinOutcome::Status::PendingApproval;
  out.registration = *registration_;
  cb(out);
  flush_alerts();
}

void Agent::direct_join(const std::string& manager_address, JoinCallback cb) {
  if (phase_ != Phase::Unregistered) {
    throw precondition("direct_join requires Unregistered, agent is " + std::string(to_string(phase_)));
  }
  if (manager_address.empty()) throw precondition("no manager address configured");
  set_phase(Phase::Joining);
  auto msg = make(MessageKind::DirectJoin);
  msg.body = join_body();
  const bool sent = request(manager_address, msg, [this, manager_address, cb](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      set_phase(Phase::Unregistered);
      cb(Error(Errc::TransportUnreachable, "no JOIN-ACK from " + manager_address));
      return;
    }
    if (reply->kind != MessageKind::JoinAck) {
      set_phase(Phase::Unregistered);
      cb(Error(code_from_reply(*reply, Errc::JoinRejected), manager_address));
      return;
    }
    complete_join(*reply, manager_address, cb);
  });
  if (!sent) {
    set_phase(Phase::Unregistered);
    cb(Error(Errc::TransportUnreachable, manager_address));
  }
}

void Agent::associate_join(const std::vector<std::string>& endpoints, JoinCallback cb) {
  if (phase_ != Phase::Unregistered) {
    throw precondition("associate_join requires Unregistered, agent is " + std::string(to_string(phase_)));
  }
  set_phase(Phase::Joining);
  adverts_.clear();
  const auto round = seq_ + 1;
  discovery_round_ = round;
  for (const auto& ep : endpoints) {
    auto msg = make(MessageKind::AssociateReq, /*with_mtid=*/false);
    send_frame(ep, msg);
  }
  executor_.schedule(config_.discovery_window_ms, [this, round, cb] {
    if (discovery_round_ != round) return;
    discovery_round_.reset();
    auto adverts = std::move(adverts_);
    adverts_.clear();
    std::sort(adverts.begin(), adverts.end(), [](const Advert& a, const Advert& b) {
      return a.load != b.load ? a.load < b.load : a.managerid < b.managerid;
    });
    try_adverts(std::move(adverts), 0, false, cb);
  });
}

void Agent::try_adverts(std::vector<Advert> adverts, std::size_t index, bool any_rejected, JoinCallback cb) {
  if (index >= adverts.size()) {
    set_phase(Phase::Unregistered);
    if (adverts.empty()) {
      cb(Error(Errc::NoManagerDiscovered));
    } else {
      cb(Error(Errc::JoinRejected, any_rejected ? "every advertised manager refused" : "no manager answered"));
    }
    return;
  }
  const auto address = adverts[index].address;
  auto msg = make(MessageKind::AssociateReq);
  msg.body = join_body();
  auto next = [this, adverts, index, cb](bool rejected) {
    try_adverts(adverts, index + 1, rejected, cb);
  };
  const bool sent = request(address, msg, [this, address, cb, next](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      next(false);
      return;
    }
    if (reply->kind == MessageKind::JoinAck && reply->control_string(ctl::kStatus) != "rejected") {
      complete_join(*reply, address, cb);
      return;
    }
    next(true);
  });
  if (!sent) next(false);
}

void Agent::reconnect(JoinCallback cb) {
  if (phase_ != Phase::Disconnected || !registration_) {
    throw precondition("reconnect requires Disconnected with a saved registration");
  }
  ++stats_.reconnect_attempts;
  const auto address = registration_->manager_address;
  auto msg = make(MessageKind::Reconnect);
  msg.body.push_back(entry(ctl::kAgentId, registration_->agentid.str()));
  const bool sent = request(address, msg, [this, address, cb](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      cb(Error(Errc::TransportUnreachable, "no answer to RECONNECT from " + address));
      return;
    }
    if (reply->kind == MessageKind::Error) {
      const auto code = code_from_reply(*reply, Errc::UnknownRegistration);
      if (code == Errc::UnknownRegistration) {
        registration_.reset();
        set_phase(Phase::Unregistered);
      }
      cb(Error(code, address));
      return;
    }
    if (reply->kind != MessageKind::JoinAck) {
      cb(Error(Errc::JoinRejected, address));
      return;
    }
    complete_join(*reply, address, cb);
  });
  if (!sent) cb(Error(Errc::TransportUnreachable, address));
}

void Agent::on_link_down() {
  if (phase_ == Phase::Registered || phase_ == Phase::PendingApproval) {
    set_phase(Phase::Disconnected);
  }
  if (running_ && (phase_ == Phase::Disconnected || phase_ == Phase::Unregistered)) schedule_reconnect();
}

void Agent::send_update(BehaviouralAttribute reading, AckCallback cb) {
  if (std::find(config_.behavioural_config.begin(), config_.behavioural_config.end(), reading.name) ==
      config_.behavioural_config.end()) {
    throw precondition("'" + reading.name + "' is not in this thing's behavioural configuration");
  }
  if (!cb) cb = [](Result<std::uint64_t>) {};
  if (phase_ != Phase::Registered && phase_ != Phase::PendingApproval) {
    cb(Error(Errc::NotRegistered, std::string(to_string(phase_))));
    return;
  }
  auto msg = make(MessageKind::Update);
  msg.body.push_back(BodyEntry{reading.name, reading.value, reading.unit, reading.timestamp});
  const auto seq = msg.seq;
  ++stats_.updates_sent;
  const bool sent = request(registration_->manager_address, msg, [this, seq, cb](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      cb(Error(Errc::TransportUnreachable, "UPDATE not acknowledged"));
    } else if (reply->kind == MessageKind::Ack) {
      ++stats_.updates_acked;
      cb(seq);
    } else {
      ++stats_.updates_rejected;
      cb(Error(code_from_reply(*reply, Errc::RejectedUnapproved)));
    }
  });
  if (!sent) cb(Error(Errc::TransportUnreachable, registration_->manager_address));
}

void Agent::report_now() {
  const auto now = executor_.now();
  for (const auto& name : config_.behavioural_config) {
    const auto* spec = config_.profile.sensor(name);
    BehaviouralAttribute reading{name, sample_sensor(*spec, now, sample_step_, rng_), spec->unit, now};
    latest_[name] = reading;
    battery_ = std::max(0.0, battery_ - config_.battery_drain_per_update);
    if (phase_ == Phase::Registered || phase_ == Phase::PendingApproval) send_update(reading);
    for (std::size_t i = 0; i < config_.alert_rules.size(); ++i) {
      const auto& rule = config_.alert_rules[i];
      if (rule.attribute != name) continue;
      const bool match = rule.matches(reading.value);
      const bool was = rule_armed_[i];
      rule_armed_[i] = match;
      if (match && !was) emit_alert(name, reading.value);
    }
  }
  ++sample_step_;
}

void Agent::schedule_report() {
  if (!running_ || config_.update_period_ms <= 0) return;
  report_timer_ = executor_.schedule(config_.update_period_ms, [this] {
    report_timer_ = 0;
    if (!running_) return;
    report_now();
    schedule_report();
  });
}

ProtocolMessage Agent::handle_get(const ProtocolMessage& req) {
  const auto now = executor_.now();
  auto reply_error = [&](std::string_view code) {
    auto m = make(MessageKind::Error);
    m.body = {entry(ctl::kReplyTo, static_cast<double>(req.seq)), entry(ctl::kCode, std::string(code))};
    return m;
  };
  if (phase_ != Phase::Registered) return reply_error("NotRegistered");

  std::vector<std::string> names;
  for (const auto& e : req.body) {
    if (!e.name.empty() && e.name[0] != '$') names.push_back(e.name);
  }
  if (names.empty()) {
    for (const auto& s : config_.behavioural_config) names.push_back(s);
    for (const auto& [a, _] : actuators_) names.push_back(a);
    for (const auto& a : config_.descriptor.attributes()) names.push_back(a.name);
    if (config_.descriptor.find(attr::kBatteryLife) == nullptr) names.emplace_back(attr::kBatteryLife);
  }
  auto resp = make(MessageKind::Update);
  resp.body.push_back(entry(ctl::kReplyTo, static_cast<double>(req.seq)));
  for (const auto& name : names) {
    if (const auto* spec = config_.profile.sensor(name)) {
      BehaviouralAttribute reading{name, sample_sensor(*spec, now, sample_step_, rng_), spec->unit, now};
      latest_[name] = reading;
      resp.body.push_back(BodyEntry{name, reading.value, reading.unit, now});
    } else if (auto it = actuators_.find(name); it != actuators_.end()) {
      resp.body.push_back(BodyEntry{name, it->second, std::nullopt, now});
    } else if (name == attr::kBatteryLife) {
      resp.body.push_back(BodyEntry{name, battery_, std::string("%"), now});
    } else if (const auto* m = config_.descriptor.find(name)) {
      resp.body.push_back(BodyEntry{name, m->value, m->unit, now});
    } else {
      return reply_error("UnknownAttribute");
    }
  }
  return resp;
}

ProtocolMessage Agent::handle_set(const ProtocolMessage& instr) {
  auto reply_error = [&](std::string_view code) {
    auto m = make(MessageKind::Error);
    m.body = {entry(ctl::kReplyTo, static_cast<double>(instr.seq)), entry(ctl::kCode, std::string(code))};
    return m;
  };
  if (phase_ != Phase::Registered) return reply_error("NotRegistered");
  std::vector<std::pair<std::string, std::string>> changes;
  for (const auto& e : instr.body) {
    if (e.name.empty() || e.name[0] == '$') continue;
    const auto* act = config_.profile.actuator(e.name);
    if (act == nullptr) return reply_error("NotActuatable");
    const auto* v = std::get_if<std::string>(&e.value);
    if (v == nullptr || std::find(act->allowed.begin(), act->allowed.end(), *v) == act->allowed.end()) {
      return reply_error("ActuationFailed");
    }
    changes.emplace_back(e.name, *v);
  }
  if (changes.empty()) return reply_error("NotActuatable");
  auto ack = make(MessageKind::Ack);
  ack.body.push_back(entry(ctl::kReplyTo, static_cast<double>(instr.seq)));
  ack.body.push_back(entry(ctl::kResult, std::string("ok")));
  for (const auto& [name, value] : changes) {
    actuators_[name] = value;
    ack.body.push_back(BodyEntry{name, value, std::nullopt, executor_.now()});
  }
  return ack;
}

ProtocolMessage Agent::handle_mgmt_get(const ProtocolMessage& req) {
  auto ack = make(MessageKind::Ack);
  ack.body.push_back(entry(ctl::kReplyTo, static_cast<double>(req.seq)));
  ack.body.push_back(BodyEntry{std::string(attr::kBatteryLife), battery_, std::string("%"), executor_.now()});
  if (auto fw = config_.descriptor.string_value(attr::kFirmwareVersion)) {
    ack.body.push_back(entry(attr::kFirmwareVersion, *fw));
  }
  return ack;
}

void Agent::emit_alert(const std::string& attribute, const AttributeValue& value) {
  auto msg = make(MessageKind::Alert);
  msg.body.push_back(BodyEntry{attribute, value, std::nullopt, executor_.now()});
  const auto seq = msg.seq;
  alerts_[seq] = OutstandingAlert{std::move(msg), 0, 0};
  ++stats_.alerts_emitted;
  if (registration_ && (phase_ == Phase::Registered || phase_ == Phase::PendingApproval)) transmit_alert(seq);
}

void Agent::transmit_alert(std::uint64_t seq) {
  auto it = alerts_.find(seq);
  if (it == alerts_.end()) return;
  auto& out = it->second;
  if (out.timer != 0) executor_.cancel(out.timer);
  out.timer = 0;
  if (out.attempts >= config_.max_alert_attempts) {
    alerts_.erase(it);
    return;
  }
  ++out.attempts;
  ++stats_.alert_transmissions;
  out.msg.sender = registration_ ? registration_->agentid.str() : out.msg.sender;
  if (registration_) send_frame(registration_->manager_address, out.msg);
  out.timer = executor_.schedule(config_.alert_retry_ms, [this, seq] {
    auto a = alerts_.find(seq);
    if (a == alerts_.end()) return;
    a->second.timer = 0;
    if (phase_ == Phase::Registered || phase_ == Phase::PendingApproval) transmit_alert(seq);
  });
}

void Agent::flush_alerts() {
  std::vector<std::uint64_t> seqs;
  for (const auto& [seq, a] : alerts_) {
    if (a.timer == 0) seqs.push_back(seq);
  }
  for (auto s : seqs) transmit_alert(s);
}

void Agent::on_frame(const std::string& from, std::vector<std::uint8_t> frame) {
  ProtocolMessage msg;
  try {
    msg = decode_message(frame);
  } catch (const Error&) {
    return;
  }
  if (auto re = msg.reply_to()) {
    if (auto it = pending_.find(*re); it != pending_.end()) {
      executor_.cancel(it->second.timer);
      auto done = std::move(it->second.done);
      pending_.erase(it);
      done(std::move(msg));
      return;
    }
    if (auto it = alerts_.find(*re); it != alerts_.end()) {
      if (it->second.timer != 0) executor_.cancel(it->second.timer);
      if (msg.kind == MessageKind::Ack) ++stats_.alerts_acked;
      alerts_.erase(it);
      return;
    }
  }
  const bool from_manager = registration_ && registration_->manager_address == from;
  switch (msg.kind) {
    case MessageKind::AssociateResp:
      if (discovery_round_) {
        adverts_.push_back(Advert{from, msg.control_string(ctl::kManagerId).value_or(from),
                                  msg.control_number(ctl::kLoad).value_or(0.0)});
      }
      break;
    case MessageKind::Get:
      if (from_manager) send_frame(from, handle_get(msg));
      break;
    case MessageKind::Set:
      if (from_manager) send_frame(from, handle_set(msg));
      break;
    case MessageKind::MgmtGet:
      if (from_manager) send_frame(from, handle_mgmt_get(msg));
      break;
    case MessageKind::JoinAck:
      if (!from_manager) break;
      if (msg.control_string(ctl::kStatus) == "registered" && phase_ == Phase::PendingApproval) {
        set_phase(Phase::Registered);
        flush_alerts();
      } else if (msg.control_string(ctl::kStatus) == "rejected") {
        registration_.reset();
        set_phase(Phase::Unregistered);
        stop();
      }
      break;
    default:
      break;
  }
}

AgentConfig agent_config_from_json(const Json& j) {
  try {
    AgentConfig c;
    c.descriptor = validate_descriptor(management_attributes_from_json(j.at("descriptor")));
    c.address = j.value("address", "agent-" + c.descriptor.id().str());
    const auto method = j.value("join_method", std::string("direct"));
    if (method == "direct") {
      c.join_method = JoinMethod::Direct;
    } else if (method == "associate") {
      c.join_method = JoinMethod::Associate;
    } else {
      throw Error(Errc::ConfigInvalid, "join_method must be direct or associate");
    }
    c.manager_address = j.value("manager", std::string());
    c.discovery = j.value("discovery", std::vector<std::string>{});
    if (c.join_method == JoinMethod::Direct && c.manager_address.empty()) {
      throw Error(Errc::ConfigInvalid, "direct join needs 'manager'");
    }
    if (c.join_method == JoinMethod::Associate && c.discovery.empty()) {
      throw Error(Errc::ConfigInvalid, "associate join needs 'discovery'");
    }
    if (j.contains("host")) c.host = j["host"].get<std::string>();
    c.profile = profile_from_json(j.value("profile", Json("thermometer")));
    if (j.contains("behavioural")) {
      c.behavioural_config = j["behavioural"].get<std::vector<std::string>>();
    } else {
      for (const auto& s : c.profile.sensors) c.behavioural_config.push_back(s.attribute);
    }
    for (const auto& r : j.value("alert_rules", Json::array())) c.alert_rules.push_back(alert_rule_from_json(r));
    c.update_period_ms = j.value("update_period_ms", c.update_period_ms);
    c.response_timeout_ms = j.value("response_timeout_ms", c.response_timeout_ms);
    c.discovery_window_ms = j.value("discovery_window_ms", c.discovery_window_ms);
    c.alert_retry_ms = j.value("alert_retry_ms", c.alert_retry_ms);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid) throw;
    throw Error(Errc::ConfigInvalid, e.what());
  }
}

}  // namespace iotmp::agent
