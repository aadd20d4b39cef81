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

#include "iotmp/manager/manager.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace iotmp::manager {

namespace {

constexpr const char* kThings = "things";
constexpr const char* kReadings = "readings";
constexpr const char* kAlerts = "alerts";
constexpr const char* kSecurity = "security";
constexpr const char* kPolicies = "policies";

BodyEntry control(std::string_view name, AttributeValue value) {
  return BodyEntry{std::string(name), std::move(value), std::nullopt, std::nullopt};
}

// Fixed-width keys keep the store's lexical order equal to numeric order.
std::string ordered_number(TimeMs t) {
  const auto shifted = static_cast<std::uint64_t>(t) ^ (std::uint64_t{1} << 63);
  char buf[24];
  std::snprintf(buf, sizeof buf, "%020llu", static_cast<unsigned long long>(shifted));
  return buf;
}

std::string reading_prefix(const Mtid& mtid, const std::string& attribute) {
  return mtid.str() + "|" + attribute + "|";
}

Json reading_json(const StoredReading& r) {
  Json j{{"name", r.reading.name}, {"value", to_json(r.reading.value)}, {"ts", r.reading.timestamp},
         {"source", r.source}};
  if (r.reading.unit) j["unit"] = *r.reading.unit;
  return j;
}

StoredReading reading_from_json(const Json& j) {
  StoredReading r;
  r.reading.name = j.at("name").get<std::string>();
  r.reading.value = value_from_json(j.at("value"));
  r.reading.timestamp = j.at("ts").get<TimeMs>();
  if (j.contains("unit")) r.reading.unit = j["unit"].get<std::string>();
  r.source = j.at("source").get<std::string>();
  return r;
}

StoredAlert alert_from_json(const Json& j) {
  StoredAlert a;
  a.mtid = Mtid(j.at("mtid").get<std::string>());
  a.seq = j.at("seq").get<std::uint64_t>();
  a.attribute = j.at("attribute").get<std::string>();
  a.value = value_from_json(j.at("value"));
  a.ts = j.at("ts").get<TimeMs>();
  a.received_at = j.at("received_at").get<TimeMs>();
  return a;
}

bool is_management_name(const ManagedThingRecord& r, const std::string& name) {
  return is_builtin_management(name) || r.descriptor.find(name) != nullptr;
}

}  // namespace

std::string_view to_string(Approval a) {
  switch (a) {
    case Approval::Pending: return "Pending";
    case Approval::Approved: return "Approved";
    case Approval::Revoked: return "Revoked";
  }
  return "Pending";
}

std::string_view to_string(Connection c) {
  return c == Connection::Connected ? "Connected" : "Disconnected";
}

Json to_json(const ManagedThingRecord& r, Approval approval) {
  Json j{{"mtid", r.mtid.str()},
         {"agentid", r.agentid.str()},
         {"approval", std::string(to_string(approval))},
         {"connection", std::string(to_string(r.connection))},
         {"attributes", to_json(r.descriptor.attributes())},
         {"security_ref", r.security_ref},
         {"created_at", r.created_at},
         {"last_seen", r.last_seen}};
  if (r.host) j["host"] = *r.host;
  if (r.battery) j["battery"] = *r.battery;
  return j;
}

Json to_json(const StoredAlert& a) {
  return Json{{"mtid", a.mtid.str()}, {"seq", a.seq},   {"attribute", a.attribute},
              {"value", to_json(a.value)}, {"ts", a.ts}, {"received_at", a.received_at}};
}

Json to_json(const ManagementStatus& s) {
  Json j{{"mtid", s.mtid.str()},
         {"link", s.link_up ? "up" : "down"},
         {"last_seen", s.last_seen},
         {"message_counters", s.message_counters}};
  j["battery"] = s.battery ? Json(*s.battery) : Json(nullptr);
  j["last_rtt_ms"] = s.last_rtt_ms ? Json(*s.last_rtt_ms) : Json(nullptr);
  return j;
}

Manager::Manager(ManagerConfig config, net::Executor& executor, net::FrameTransport& transport,
                 net::HttpClient* http, std::shared_ptr<const privacy::GeoHierarchy> hierarchy)
    : config_(std::move(config)),
      executor_(executor),
      transport_(transport),
      http_(http),
      store_(config_.storage_path ? std::make_unique<KvStore>(*config_.storage_path) : std::make_unique<KvStore>()),
      security_(config_.admins),
      privacy_(std::move(hierarchy)) {
  load_from_store();
  security_.set_change_listener([this] { store_->put(kSecurity, "state", security_.to_json()); });
}

Manager::~Manager() {
  *alive_ = false;
  stop();
  for (auto& [_, p] : pending_) executor_.cancel(p.timer);
}

void Manager::load_from_store() {
  if (auto sec = store_->get(kSecurity, "state")) security_.load_json(*sec);
  for (const auto& [key, j] : store_->scan(kThings)) {
    ManagedThingRecord r;
    r.mtid = Mtid(j.at("mtid").get<std::string>());
    r.agentid = AgentId(j.at("agentid").get<std::string>());
    r.descriptor = validate_descriptor(management_attributes_from_json(j.at("attributes")));
    if (j.contains("host")) r.host = j["host"].get<std::string>();
    if (j.contains("loc")) r.loc = location_from_json(j["loc"]);
    if (j.contains("battery")) r.battery = j["battery"].get<double>();
    r.security_ref = j.at("security_ref").get<std::string>();
    r.created_at = j.at("created_at").get<TimeMs>();
    r.last_seen = j.at("last_seen").get<TimeMs>();
    records_[r.mtid] = std::move(r);
  }
  for (const auto& [key, j] : store_->scan(kReadings)) {
    auto r = reading_from_json(j);
    const auto mtid = Mtid(key.substr(0, key.find('|')));
    auto& series = readings_[mtid][r.reading.name];
    r.store_key = key;
    series.push_back(std::move(r));
    reading_serial_[key.substr(0, key.rfind('|'))]++;
  }
  for (auto& [_, by_attr] : readings_) {
    for (auto& [_, series] : by_attr) {
      std::stable_sort(series.begin(), series.end(), [](const StoredReading& a, const StoredReading& b) {
        return a.reading.timestamp < b.reading.timestamp;
      });
    }
  }
  for (const auto& [key, j] : store_->scan(kAlerts)) {
    auto a = alert_from_json(j);
    alerts_[{a.mtid, a.seq}] = a;
  }
  for (const auto& [key, j] : store_->scan(kPolicies)) {
    std::vector<privacy::DisclosurePolicy> set;
    for (const auto& p : j) set.push_back(privacy::policy_from_json(p));
    privacy_.set_policies(Mtid(key), std::move(set));
  }
}

void Manager::start() {
  if (running_) return;
  running_ = true;
  if (!bound_) {
    transport_.bind(config_.agent_address,
                    net::FrameHandler{[this](const std::string& from, std::vector<std::uint8_t> frame) {
                                        on_frame(from, std::move(frame));
                                      },
                                      [this](const std::string& peer) { on_link_down(peer); }});
    bound_ = true;
  }
  schedule_publish(0);
}

void Manager::stop() {
  running_ = false;
  if (publish_timer_ != 0) executor_.cancel(publish_timer_);
  publish_timer_ = 0;
  if (bound_) {
    transport_.unbind(config_.agent_address);
    bound_ = false;
  }
}

// ---------------------------------------------------------------------------
// store reads

std::optional<ManagedThingRecord> Manager::record(const Mtid& mtid) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(mtid);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<ManagedThingRecord> Manager::records() const {
  std::lock_guard lock(mu_);
  std::vector<ManagedThingRecord> out;
  for (const auto& [_, r] : records_) out.push_back(r);
  return out;
}

std::vector<Mtid> Manager::mtids() const {
  std::lock_guard lock(mu_);
  std::vector<Mtid> out;
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

std::size_t Manager::record_count() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

Approval Manager::approval_of(const ManagedThingRecord& r) const {
  switch (security_.admission_state(r.agentid)) {
    case security::AdmissionState::Approved: return Approval::Approved;
    case security::AdmissionState::Revoked: return Approval::Revoked;
    default: return Approval::Pending;
  }
}

QueryResult Manager::query_mt(const Mtid& mtid, const std::string& attribute, const TimeRange& range) const {
  std::lock_guard lock(mu_);
  auto rec = records_.find(mtid);
  if (rec == records_.end()) throw Error(Errc::UnknownMT, mtid.str());
  QueryResult out;
  if (const auto* m = rec->second.descriptor.find(attribute)) {
    out.management = *m;
    return out;
  }
  if (attribute == attr::kBatteryLife && rec->second.battery) {
    out.management = ManagementAttribute{std::string(attr::kBatteryLife), *rec->second.battery, std::string("%")};
    return out;
  }
  auto by_mt = readings_.find(mtid);
  const std::vector<StoredReading>* series = nullptr;
  if (by_mt != readings_.end()) {
    auto s = by_mt->second.find(attribute);
    if (s != by_mt->second.end()) series = &s->second;
  }
  if (series == nullptr) throw Error(Errc::UnknownAttribute, mtid.str() + "/" + attribute);
  for (const auto& r : *series) {
    if (range.contains(r.reading.timestamp)) out.readings.push_back(r.reading);
  }
  return out;
}

std::vector<StoredReading> Manager::stored_readings(const Mtid& mtid, const std::string& attribute) const {
  std::lock_guard lock(mu_);
  auto by_mt = readings_.find(mtid);
  if (by_mt == readings_.end()) return {};
  auto s = by_mt->second.find(attribute);
  return s == by_mt->second.end() ? std::vector<StoredReading>{} : s->second;
}

std::size_t Manager::reading_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, by_attr] : readings_) {
    for (const auto& [_, series] : by_attr) n += series.size();
  }
  return n;
}

std::vector<StoredAlert> Manager::alerts(std::optional<Mtid> mtid) const {
  std::lock_guard lock(mu_);
  std::vector<StoredAlert> out;
  for (const auto& [key, a] : alerts_) {
    if (!mtid || key.first == *mtid) out.push_back(a);
  }
  return out;
}

std::map<std::string, std::uint64_t> Manager::counters(const Mtid& mtid) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find(mtid);
  return it == counters_.end() ? std::map<std::string, std::uint64_t>{} : it->second;
}

ManagerStats Manager::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

// ---------------------------------------------------------------------------
// store writes (mu_ held)

ManagedThingRecord* Manager::find_locked(const Mtid& mtid) {
  auto it = records_.find(mtid);
  return it == records_.end() ? nullptr : &it->second;
}

void Manager::persist_record_locked(const ManagedThingRecord& r) {
  Json j = to_json(r, Approval::Pending);
  j.erase("approval");
  j.erase("connection");
  if (r.loc) j["loc"] = to_json(*r.loc);
  store_->put(kThings, r.mtid.str(), std::move(j));
}

void Manager::append_reading_locked(const Mtid& mtid, BehaviouralAttribute r, const std::string& source) {
  auto& series = readings_[mtid][r.name];
  const auto base = reading_prefix(mtid, r.name) + ordered_number(r.timestamp);
  const auto serial = reading_serial_[base]++;
  char suffix[24];
  std::snprintf(suffix, sizeof suffix, "|%010llu", static_cast<unsigned long long>(serial));
  StoredReading stored{std::move(r), source, base + suffix};
  store_->put(kReadings, stored.store_key, reading_json(stored));
  // Readings are kept sorted by timestamp; equal timestamps keep arrival order.
  auto pos = std::upper_bound(series.begin(), series.end(), stored.reading.timestamp,
                              [](TimeMs t, const StoredReading& s) { return t < s.reading.timestamp; });
  series.insert(pos, std::move(stored));
}

// ---------------------------------------------------------------------------
// frames

ProtocolMessage Manager::make(MessageKind kind, std::optional<Mtid> mtid) {
  ProtocolMessage m;
  m.kind = kind;
  m.seq = ++seq_;
  m.sender = config_.managerid.str();
  m.mtid = std::move(mtid);
  return m;
}

void Manager::send(const std::string& to, const ProtocolMessage& msg) {
  transport_.send(config_.agent_address, to, encode_message(msg));
}

void Manager::reply_error(const std::string& to, const ProtocolMessage& req, std::string_view code) {
  auto m = make(MessageKind::Error, req.mtid);
  m.body = {control(ctl::kReplyTo, static_cast<double>(req.seq)), control(ctl::kCode, std::string(code))};
  send(to, m);
}

void Manager::on_frame(const std::string& from, std::vector<std::uint8_t> frame) {
  ProtocolMessage msg;
  try {
    msg = decode_message(frame);
  } catch (const Error&) {
    return;
  }
  if (msg.mtid) {
    std::lock_guard lock(mu_);
    if (records_.count(*msg.mtid) != 0) counters_[*msg.mtid][std::string(to_string(msg.kind))]++;
  }
  if (auto re = msg.reply_to()) {
    if (auto it = pending_.find(*re); it != pending_.end()) {
      executor_.cancel(it->second.timer);
      auto p = std::move(it->second);
      pending_.erase(it);
      if (msg.mtid) {
        std::lock_guard lock(mu_);
        if (auto* r = find_locked(*msg.mtid)) {
          r->last_rtt_ms = executor_.now() - p.sent_at;
          r->last_seen = executor_.now();
        }
      }
      p.done(std::move(msg));
      return;
    }
  }
  switch (msg.kind) {
    case MessageKind::DirectJoin: handle_join(from, msg); break;
    case MessageKind::AssociateReq:
      if (msg.mtid) {
        handle_join(from, msg);
      } else {
        handle_discovery(from, msg);
      }
      break;
    case MessageKind::Reconnect: handle_reconnect(from, msg); break;
    case MessageKind::Update: handle_update(from, msg); break;
    case MessageKind::Alert: handle_alert(from, msg); break;
    default: break;
  }
}

void Manager::on_link_down(const std::string& peer) {
  std::lock_guard lock(mu_);
  for (auto& [_, r] : records_) {
    if (r.connection == Connection::Connected && r.agent_address == peer) {
      r.connection = Connection::Disconnected;
      r.last_seen = executor_.now();
    }
  }
}

void Manager::handle_discovery(const std::string& from, const ProtocolMessage& msg) {
  auto m = make(MessageKind::AssociateResp);
  m.body = {control(ctl::kReplyTo, static_cast<double>(msg.seq)),
            control(ctl::kManagerId, config_.managerid.str()),
            control(ctl::kLoad, static_cast<double>(record_count()))};
  send(from, m);
}

void Manager::handle_join(const std::string& from, const ProtocolMessage& msg) {
  const auto now = executor_.now();
  auto ack = [&](std::string_view status, const std::optional<AgentId>& agentid, std::string_view code = {}) {
    auto m = make(MessageKind::JoinAck, msg.mtid);
    m.body.push_back(control(ctl::kReplyTo, static_cast<double>(msg.seq)));
    m.body.push_back(control(ctl::kStatus, std::string(status)));
    if (agentid) m.body.push_back(control(ctl::kAgentId, agentid->str()));
    if (!code.empty()) m.body.push_back(control(ctl::kCode, std::string(code)));
    send(from, m);
    std::lock_guard lock(mu_);
    ++stats_.join_acks;
  };

  std::vector<ManagementAttribute> attrs;
  std::optional<std::string> host;
  for (const auto& e : msg.body) {
    if (e.name == ctl::kHost) {
      if (const auto* h = std::get_if<std::string>(&e.value)) host = *h;
      continue;
    }
    if (!e.name.empty() && e.name[0] == '$') continue;
    attrs.push_back(ManagementAttribute{e.name, e.value, e.unit});
  }
  std::optional<ValidatedDescriptor> descriptor;
  try {
    descriptor = validate_descriptor(std::move(attrs));
    if (auto loc = descriptor->fixed_location()) hierarchy().validate(*loc);
  } catch (const Error&) {
    ack("rejected", std::nullopt, "MalformedDescriptor");
    return;
  }
  if (descriptor->id() != *msg.mtid) {
    ack("rejected", std::nullopt, "MalformedDescriptor");
    return;
  }
  std::optional<AgentId> agentid;
  try {
    agentid = AgentId(host ? *host + "_" + msg.mtid->str() : msg.mtid->str());
  } catch (const Error&) {
    ack("rejected", std::nullopt, "MalformedDescriptor");
    return;
  }

  bool created = false;
  {
    std::unique_lock lock(mu_);
    auto* existing = find_locked(*msg.mtid);
    if (existing != nullptr) {
      if (existing->connection == Connection::Connected && existing->agent_address != from) {
        lock.unlock();
        ack("rejected", std::nullopt, "DuplicateMTID");
        return;
      }
      if (existing->agentid != *agentid) {
        lock.unlock();
        ack("rejected", std::nullopt, "DuplicateMTID");
        return;
      }
      // A fresh join for a known, idle MTID reuses its record.
      existing->descriptor = *descriptor;
      if (auto loc = descriptor->fixed_location()) existing->loc = loc;
      existing->connection = Connection::Connected;
      existing->agent_address = from;
      existing->last_seen = now;
      persist_record_locked(*existing);
    } else {
      if (config_.capacity && records_.size() >= *config_.capacity) {
        lock.unlock();
        ack("rejected", std::nullopt, "AtCapacity");
        return;
      }
      ManagedThingRecord r;
      r.mtid = *msg.mtid;
      r.agentid = *agentid;
      r.descriptor = *descriptor;
      r.host = host;
      r.loc = descriptor->fixed_location();
      r.security_ref = msg.mtid->str();
      r.connection = Connection::Connected;
      r.agent_address = from;
      r.created_at = now;
      r.last_seen = now;
      if (const auto* b = descriptor->find(attr::kBatteryLife)) r.battery = std::get<double>(b->value);
      persist_record_locked(r);
      records_[r.mtid] = std::move(r);
      ++stats_.records_created;
      created = true;
    }
  }

  auto state = security_.admission_state(*agentid);
  if (state == security::AdmissionState::Unknown) {
    security_.admit_agent(*agentid);
    bool allowed = false;
    {
      std::lock_guard lock(mu_);
      allowed = config_.allowlist.count(agentid->str()) != 0;
    }
    if (allowed) security_.approve_agent(*agentid, "allowlist", now);
    state = security_.admission_state(*agentid);
  }
  if (!security_.profile(*msg.mtid)) {
    security::SecurityProfile profile;
    profile.mtid = *msg.mtid;
    if (auto admin = descriptor->string_value(attr::kAdmin)) {
      profile.owner = *admin;
    } else {
      profile.owner = config_.admins.empty() ? "admin" : *config_.admins.begin();
    }
    security_.create_profile(std::move(profile));
  }
  if (state == security::AdmissionState::Revoked) {
    ack("rejected", agentid, "UnapprovedAgent");
  } else {
    ack(state == security::AdmissionState::Approved ? "registered" : "pending", agentid);
  }
  if (created) topology_changed();
}

void Manager::allow_agent(const std::string& agentid) {
  std::lock_guard lock(mu_);
  config_.allowlist.insert(agentid);
}

void Manager::handle_reconnect(const std::string& from, const ProtocolMessage& msg) {
  const auto claimed = msg.control_string(ctl::kAgentId);
  std::optional<AgentId> agentid;
  {
    std::lock_guard lock(mu_);
    auto* r = find_locked(*msg.mtid);
    if (r != nullptr && claimed && r->agentid.str() == *claimed) {
      r->connection = Connection::Connected;
      r->agent_address = from;
      r->last_seen = executor_.now();
      agentid = r->agentid;
    }
  }
  if (!agentid) {
    reply_error(from, msg, "UnknownRegistration");
    return;
  }
  const auto state = security_.admission_state(*agentid);
  auto m = make(MessageKind::JoinAck, msg.mtid);
  m.body.push_back(control(ctl::kReplyTo, static_cast<double>(msg.seq)));
  std::string status = "pending";
  if (state == security::AdmissionState::Approved) status = "registered";
  if (state == security::AdmissionState::Revoked) status = "rejected";
  m.body.push_back(control(ctl::kStatus, status));
  m.body.push_back(control(ctl::kAgentId, agentid->str()));
  send(from, m);
  std::lock_guard lock(mu_);
  ++stats_.join_acks;
}

std::optional<ManagedThingRecord> Manager::admit_traffic(const std::string& from, const ProtocolMessage& msg) {
  std::optional<ManagedThingRecord> rec = record(*msg.mtid);
  if (!rec) {
    reply_error(from, msg, "UnknownMT");
    return std::nullopt;
  }
  if (rec->agentid.str() != msg.sender || !security_.is_approved(rec->agentid)) {
    {
      std::lock_guard lock(mu_);
      ++stats_.quarantined;
    }
    reply_error(from, msg, "UnapprovedAgent");
    return std::nullopt;
  }
  std::lock_guard lock(mu_);
  auto* r = find_locked(*msg.mtid);
  r->connection = Connection::Connected;
  r->agent_address = from;
  r->last_seen = executor_.now();
  return *r;
}

void Manager::handle_update(const std::string& from, const ProtocolMessage& msg) {
  auto rec = admit_traffic(from, msg);
  if (!rec) return;
  std::vector<BehaviouralAttribute> readings;
  try {
    for (const auto& e : msg.body) {
      if (e.name.empty() || e.name[0] == '$') continue;
      check_attribute_name(e.name, AttributeClass::Behavioural);
      check_attribute_value(e.name, e.value, AttributeClass::Behavioural);
      if (const auto* loc = std::get_if<SemanticLocation>(&e.value)) hierarchy().validate(*loc);
      readings.push_back(BehaviouralAttribute{e.name, e.value, e.unit, e.ts.value_or(executor_.now())});
    }
  } catch (const Error&) {
    reply_error(from, msg, "MalformedValue");
    return;
  }
  {
    std::lock_guard lock(mu_);
    auto* r = find_locked(*msg.mtid);
    for (auto& reading : readings) {
      if (reading.name == attr::kMobileLocation) r->loc = std::get<SemanticLocation>(reading.value);
      append_reading_locked(*msg.mtid, std::move(reading), "agent");
      ++stats_.updates_stored;
    }
    persist_record_locked(*r);
  }
  auto ack = make(MessageKind::Ack, msg.mtid);
  ack.body.push_back(control(ctl::kReplyTo, static_cast<double>(msg.seq)));
  send(from, ack);
}

void Manager::handle_alert(const std::string& from, const ProtocolMessage& msg) {
  auto rec = admit_traffic(from, msg);
  if (!rec) return;
  const BodyEntry* entry = nullptr;
  for (const auto& e : msg.body) {
    if (!e.name.empty() && e.name[0] != '$') {
      entry = &e;
      break;
    }
  }
  {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(*msg.mtid, msg.seq);
    if (alerts_.count(key) != 0) {
      ++stats_.alert_duplicates;
    } else {
      StoredAlert a{*msg.mtid, msg.seq, entry->name, entry->value, entry->ts.value_or(executor_.now()),
                    executor_.now()};
      store_->put(kAlerts, msg.mtid->str() + "|" + ordered_number(static_cast<TimeMs>(msg.seq)), to_json(a));
      alerts_[key] = std::move(a);
      ++stats_.alerts_stored;
    }
  }
  auto ack = make(MessageKind::Ack, msg.mtid);
  ack.body.push_back(control(ctl::kReplyTo, static_cast<double>(msg.seq)));
  send(from, ack);
}

// ---------------------------------------------------------------------------
// device round trips

void Manager::device_request(const Mtid& mtid, ProtocolMessage msg,
                             std::function<void(std::optional<ProtocolMessage>)> done) {
  std::optional<std::string> address;
  {
    std::lock_guard lock(mu_);
    auto* r = find_locked(mtid);
    if (r != nullptr && r->connection == Connection::Connected) address = r->agent_address;
  }
  const auto seq = msg.seq;
  PendingRequest p;
  p.sent_at = executor_.now();
  p.done = std::move(done);
  p.timer = executor_.schedule(config_.device_timeout_ms, [this, seq] {
    auto it = pending_.find(seq);
    if (it == pending_.end()) return;
    auto cb = std::move(it->second.done);
    pending_.erase(it);
    cb(std::nullopt);
  });
  pending_[seq] = std::move(p);
  if (address) send(*address, msg);
}

void Manager::get_live(const Mtid& mtid, const std::string& attribute,
                       Callback<std::vector<BehaviouralAttribute>> cb) {
  if (!record(mtid)) {
    cb(Error(Errc::UnknownMT, mtid.str()));
    return;
  }
  auto msg = make(MessageKind::Get, mtid);
  if (!attribute.empty()) msg.body.push_back(control(attribute, std::monostate{}));
  device_request(mtid, std::move(msg), [this, mtid, cb](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      cb(Error(Errc::DeviceTimeout, mtid.str()));
      return;
    }
    if (reply->kind == MessageKind::Error) {
      const auto code = reply->control_string(ctl::kCode).value_or("");
      cb(Error(code == "UnknownAttribute" ? Errc::UnknownAttribute : Errc::DeviceTimeout, code));
      return;
    }
    std::vector<BehaviouralAttribute> values;
    {
      std::lock_guard lock(mu_);
      auto* r = find_locked(mtid);
      if (r == nullptr) {
        cb(Error(Errc::UnknownMT, mtid.str()));
        return;
      }
      for (const auto& e : reply->body) {
        if (e.name.empty() || e.name[0] == '$') continue;
        BehaviouralAttribute v{e.name, e.value, e.unit, e.ts.value_or(executor_.now())};
        if (e.name == attr::kBatteryLife) {
          if (const auto* d = std::get_if<double>(&e.value)) r->battery = *d;
        } else if (!is_management_name(*r, e.name)) {
          if (e.name == attr::kMobileLocation) {
            if (const auto* loc = std::get_if<SemanticLocation>(&e.value)) r->loc = *loc;
          }
          append_reading_locked(mtid, v, "agent");
        }
        values.push_back(std::move(v));
      }
      persist_record_locked(*r);
    }
    cb(std::move(values));
  });
}

void Manager::actuate(const Mtid& mtid, const std::string& attribute, const std::string& value,
                      Callback<SetResult> cb) {
  if (!record(mtid)) {
    cb(Error(Errc::UnknownMT, mtid.str()));
    return;
  }
  auto msg = make(MessageKind::Set, mtid);
  msg.body.push_back(control(attribute, value));
  device_request(mtid, std::move(msg), [mtid, attribute, value, cb](std::optional<ProtocolMessage> reply) {
    if (!reply) {
      cb(Error(Errc::DeviceTimeout, mtid.str()));
      return;
    }
    if (reply->kind != MessageKind::Ack) {
      const auto code = reply->control_string(ctl::kCode).value_or("");
      if (code == "NotActuatable") {
        cb(Error(Errc::NotActuatable, attribute));
      } else if (code == "ActuationFailed") {
        cb(Error(Errc::ActuationFailed, attribute));
      } else {
        cb(Error(Errc::DeviceTimeout, code));
      }
      return;
    }
    SetResult out{attribute, value};
    if (const auto* e = reply->find(attribute)) {
      if (const auto* s = std::get_if<std::string>(&e->value)) out.state = *s;
    }
    cb(out);
  });
}

void Manager::mgmt_status(const Mtid& mtid, Callback<ManagementStatus> cb) {
  auto rec = record(mtid);
  if (!rec) {
    cb(Error(Errc::UnknownMT, mtid.str()));
    return;
  }
  auto snapshot = [this, mtid](bool link_up) {
    ManagementStatus s;
    s.mtid = mtid;
    std::lock_guard lock(mu_);
    if (auto* r = find_locked(mtid)) {
      s.battery = r->battery;
      s.last_rtt_ms = r->last_rtt_ms;
      s.last_seen = r->last_seen;
    }
    if (auto c = counters_.find(mtid); c != counters_.end()) s.message_counters = c->second;
    s.link_up = link_up;
    return s;
  };
  if (rec->connection != Connection::Connected) {
    cb(snapshot(false));
    return;
  }
  auto msg = make(MessageKind::MgmtGet, mtid);
  device_request(mtid, std::move(msg), [this, mtid, cb, snapshot](std::optional<ProtocolMessage> reply) {
    if (reply && reply->kind == MessageKind::Ack) {
      if (const auto* b = reply->find(attr::kBatteryLife)) {
        if (const auto* d = std::get_if<double>(&b->value)) {
          std::lock_guard lock(mu_);
          if (auto* r = find_locked(mtid)) {
            r->battery = *d;
            persist_record_locked(*r);
          }
        }
      }
      cb(snapshot(true));
      return;
    }
    cb(snapshot(false));
  });
}

// ---------------------------------------------------------------------------
// management mutations

AgentId Manager::approve_agent(const AgentId& agentid, const std::string& admin) {
  security_.approve_agent(agentid, admin, executor_.now());
  std::optional<std::pair<std::string, Mtid>> target;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, r] : records_) {
      if (r.agentid == agentid && r.connection == Connection::Connected) target = {r.agent_address, id};
    }
  }
  if (target) {
    auto m = make(MessageKind::JoinAck, target->second);
    m.body = {control(ctl::kStatus, std::string("registered")), control(ctl::kAgentId, agentid.str())};
    send(target->first, m);
  }
  return agentid;
}

AgentId Manager::revoke_agent(const AgentId& agentid, const std::string& admin) {
  security_.revoke_agent(agentid, admin, executor_.now());
  std::optional<std::pair<std::string, Mtid>> target;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, r] : records_) {
      if (r.agentid == agentid && r.connection == Connection::Connected) {
        target = {r.agent_address, id};
        r.connection = Connection::Disconnected;
      }
    }
  }
  if (target) {
    auto m = make(MessageKind::JoinAck, target->second);
    m.body = {control(ctl::kStatus, std::string("rejected")), control(ctl::kAgentId, agentid.str())};
    send(target->first, m);
  }
  return agentid;
}

void Manager::contribute(const Mtid& mtid, const std::string& appid, std::vector<BehaviouralAttribute> readings) {
  for (const auto& r : readings) {
    check_attribute_name(r.name, AttributeClass::Behavioural);
    check_attribute_value(r.name, r.value, AttributeClass::Behavioural);
    if (const auto* loc = std::get_if<SemanticLocation>(&r.value)) hierarchy().validate(*loc);
  }
  std::lock_guard lock(mu_);
  if (find_locked(mtid) == nullptr) throw Error(Errc::UnknownMT, mtid.str());
  for (auto& r : readings) append_reading_locked(mtid, std::move(r), "app:" + appid);
}

ManagedThingRecord Manager::put_attributes(const Mtid& mtid, const std::vector<ManagementAttribute>& attrs) {
  std::lock_guard lock(mu_);
  auto* r = find_locked(mtid);
  if (r == nullptr) throw Error(Errc::UnknownMT, mtid.str());
  std::map<std::string, ManagementAttribute> merged;
  for (const auto& a : r->descriptor.attributes()) merged[a.name] = a;
  for (const auto& a : attrs) merged[a.name] = a;
  std::vector<ManagementAttribute> list;
  for (auto& [_, a] : merged) list.push_back(std::move(a));
  auto next = validate_descriptor(std::move(list));
  if (next.id() != mtid) throw Error(Errc::MalformedDescriptor, "ID cannot change");
  if (auto loc = next.fixed_location()) hierarchy().validate(*loc);
  r->descriptor = std::move(next);
  const bool mobile = readings_.count(mtid) != 0 && readings_[mtid].count(std::string(attr::kMobileLocation)) != 0;
  if (!mobile) r->loc = r->descriptor.fixed_location();
  if (const auto* b = r->descriptor.find(attr::kBatteryLife)) r->battery = std::get<double>(b->value);
  persist_record_locked(*r);
  return *r;
}

void Manager::delete_thing(const Mtid& mtid) {
  std::optional<ManagedThingRecord> removed;
  {
    std::lock_guard lock(mu_);
    auto it = records_.find(mtid);
    if (it == records_.end()) throw Error(Errc::UnknownMT, mtid.str());
    removed = std::move(it->second);
    records_.erase(it);
    readings_.erase(mtid);
    counters_.erase(mtid);
    for (auto a = alerts_.begin(); a != alerts_.end();) {
      a = a->first.first == mtid ? alerts_.erase(a) : std::next(a);
    }
    store_->erase(kThings, mtid.str());
    store_->erase_prefix(kReadings, mtid.str() + "|");
    store_->erase_prefix(kAlerts, mtid.str() + "|");
    store_->erase(kPolicies, mtid.str());
  }
  security_.erase_profile(mtid);
  security_.forget_agent(removed->agentid);
  privacy_.erase(mtid);
  if (removed->connection == Connection::Connected) {
    auto m = make(MessageKind::JoinAck, mtid);
    m.body = {control(ctl::kStatus, std::string("rejected")), control(ctl::kAgentId, removed->agentid.str())};
    send(removed->agent_address, m);
  }
  topology_changed();
}

std::size_t Manager::delete_readings(const Mtid& mtid, const std::string& attribute, const TimeRange& range) {
  std::lock_guard lock(mu_);
  if (find_locked(mtid) == nullptr) throw Error(Errc::UnknownMT, mtid.str());
  auto by_mt = readings_.find(mtid);
  if (by_mt == readings_.end()) return 0;
  auto s = by_mt->second.find(attribute);
  if (s == by_mt->second.end()) return 0;
  std::size_t n = 0;
  auto& series = s->second;
  for (auto it = series.begin(); it != series.end();) {
    if (range.contains(it->reading.timestamp)) {
      store_->erase(kReadings, it->store_key);
      it = series.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

void Manager::set_policies(const Mtid& mtid, std::vector<privacy::DisclosurePolicy> policies) {
  if (!record(mtid)) throw Error(Errc::UnknownMT, mtid.str());
  privacy::validate_policy_set(policies, mtid, hierarchy());
  Json j = Json::array();
  for (const auto& p : policies) j.push_back(privacy::to_json(p));
  store_->put(kPolicies, mtid.str(), std::move(j));
  privacy_.set_policies(mtid, std::move(policies));
}

// ---------------------------------------------------------------------------
// topology publication

Json Manager::topology_payload() const {
  Json mtids = Json::array();
  for (const auto& id : this->mtids()) mtids.push_back(id.str());
  return Json{{"managerid", config_.managerid.str()}, {"address", config_.api_address}, {"mtids", mtids}};
}

void Manager::topology_changed() {
  if (publish_in_flight_) {
    publish_dirty_ = true;
  } else {
    schedule_publish(0);
  }
}

void Manager::schedule_publish(TimeMs delay) {
  if (!running_ || !config_.moms_address || http_ == nullptr) return;
  if (publish_timer_ != 0) executor_.cancel(publish_timer_);
  publish_timer_ = executor_.schedule(delay, [this] {
    publish_timer_ = 0;
    publish_topology();
  });
}

void Manager::publish_topology() {
  if (!config_.moms_address || http_ == nullptr) return;
  if (publish_in_flight_) {
    publish_dirty_ = true;
    return;
  }
  publish_in_flight_ = true;
  publish_dirty_ = false;
  net::HttpRequest req;
  req.method = "POST";
  req.target = "/topology";
  req.headers["content-type"] = "application/json";
  req.headers["x-manager-key"] = config_.moms_key;
  req.body = topology_payload().dump();
  req.secure = true;
  std::weak_ptr<bool> alive = alive_;
  http_->request(*config_.moms_address, std::move(req), config_.device_timeout_ms,
                 [this, alive](std::optional<net::HttpResponse> resp) {
                   if (alive.expired()) return;
                   publish_in_flight_ = false;
                   const bool ok = resp && resp->status >= 200 && resp->status < 300;
                   {
                     std::lock_guard lock(mu_);
                     ++(ok ? stats_.publishes_ok : stats_.publishes_failed);
                   }
                   if (!ok) {
                     schedule_publish(config_.publish_retry_ms);
                   } else {
                     schedule_publish(publish_dirty_ ? 0 : config_.publish_period_ms);
                   }
                 });
}

// ---------------------------------------------------------------------------

ManagerConfig manager_config_from_json(const Json& j) {
  try {
    ManagerConfig c;
    c.managerid = ManagerId(j.at("managerid").get<std::string>());
    c.agent_address = j.value("agent_address", c.managerid.str());
    c.api_address = j.value("api_address", c.managerid.str() + "-api");
    if (j.contains("moms")) c.moms_address = j["moms"].get<std::string>();
    c.moms_key = j.value("moms_key", std::string());
    c.allowlist = j.value("allowlist", std::set<std::string>{});
    c.admins = j.value("admins", std::set<std::string>{});
    if (j.contains("capacity")) c.capacity = j["capacity"].get<std::size_t>();
    c.device_timeout_ms = j.value("device_timeout_ms", c.device_timeout_ms);
    c.publish_period_ms = j.value("publish_period_ms", c.publish_period_ms);
    c.publish_retry_ms = j.value("publish_retry_ms", c.publish_retry_ms);
    if (j.contains("storage")) c.storage_path = j["storage"].get<std::string>();
    if (c.device_timeout_ms <= 0 || c.publish_period_ms <= 0 || c.publish_retry_ms <= 0) {
      throw Error(Errc::ConfigInvalid, "timeouts and periods must be positive");
    }
    return c;
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid) throw;
    throw Error(Errc::ConfigInvalid, e.what());
  }
}

}  // namespace iotmp::manager
