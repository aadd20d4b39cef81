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

#include "iotmp/core/message.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "iotmp/core/json_codec.hpp"

namespace iotmp {

namespace {

constexpr std::array<std::pair<MessageKind, std::string_view>, 12> kKindNames = {{
    {MessageKind::DirectJoin, "DIRECT-JOIN"},
    {MessageKind::AssociateReq, "ASSOCIATE-REQ"},
    {MessageKind::AssociateResp, "ASSOCIATE-RESP"},
    {MessageKind::Reconnect, "RECONNECT"},
    {MessageKind::JoinAck, "JOIN-ACK"},
    {MessageKind::Get, "GET"},
    {MessageKind::Set, "SET"},
    {MessageKind::Update, "UPDATE"},
    {MessageKind::Alert, "ALERT"},
    {MessageKind::MgmtGet, "MGMT-GET"},
    {MessageKind::Ack, "ACK"},
    {MessageKind::Error, "ERROR"},
}};

constexpr int kWireVersion = 1;

[[noreturn]] void invalid(const std::string& why) { throw Error(Errc::InvalidKindBody, why); }

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::MalformedFrame, why); }

bool has_attribute_entry(const ProtocolMessage& m) {
  return std::any_of(m.body.begin(), m.body.end(),
                     [](const BodyEntry& e) { return !e.name.empty() && e.name[0] != '$'; });
}

bool finite_value(const AttributeValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return std::isfinite(*d);
  if (const auto* l = std::get_if<SemanticLocation>(&v)) {
    return std::isfinite(l->lat) && std::isfinite(l->lon);
  }
  return true;
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<MessageKind> parse_message_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

const BodyEntry* ProtocolMessage::find(std::string_view name) const {
  auto it = std::find_if(body.begin(), body.end(), [&](const BodyEntry& e) { return e.name == name; });
  return it == body.end() ? nullptr : &*it;
}

std::optional<std::string> ProtocolMessage::control_string(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr || !std::holds_alternative<std::string>(e->value)) return std::nullopt;
  return std::get<std::string>(e->value);
}

std::optional<double> ProtocolMessage::control_number(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr || !std::holds_alternative<double>(e->value)) return std::nullopt;
  return std::get<double>(e->value);
}

std::optional<std::uint64_t> ProtocolMessage::reply_to() const {
  auto n = control_number(ctl::kReplyTo);
  if (!n || *n < 0) return std::nullopt;
  return static_cast<std::uint64_t>(*n);
}

void validate_message(const ProtocolMessage& msg) {
  if (msg.sender.empty()) invalid("sender missing");
  const bool mtid_optional =
      msg.kind == MessageKind::AssociateReq || msg.kind == MessageKind::AssociateResp;
  if (!mtid_optional && !msg.mtid) invalid(std::string(to_string(msg.kind)) + " without mtid");
  for (const auto& e : msg.body) {
    if (e.name.empty()) invalid("body entry without name");
    if (!finite_value(e.value)) invalid("non-finite value for " + e.name);
  }
  switch (msg.kind) {
    case MessageKind::Update:
    case MessageKind::Set:
    case MessageKind::Alert:
      if (!has_attribute_entry(msg)) invalid(std::string(to_string(msg.kind)) + " with empty body");
      break;
    case MessageKind::JoinAck: {
      auto status = msg.control_string(ctl::kStatus);
      if (!status || (*status != "pending" && *status != "registered" && *status != "rejected")) {
        invalid("JOIN-ACK without valid $status");
      }
      break;
    }
    case MessageKind::Error:
      if (!msg.control_string(ctl::kCode)) invalid("ERROR without $code");
      break;
    case MessageKind::Ack:
      if (!msg.reply_to()) invalid("ACK without $re");
      break;
    case MessageKind::AssociateResp:
      if (!msg.control_string(ctl::kManagerId) || !msg.control_number(ctl::kLoad)) {
        invalid("ASSOCIATE-RESP without $managerid/$load");
      }
      break;
    default:
      break;
  }
}

Json to_json(const SemanticLocation& loc) {
  return Json{{"path", loc.path}, {"lat", loc.lat}, {"lon", loc.lon}};
}

SemanticLocation location_from_json(const Json& j) {
  if (!j.is_object() || j.size() != 3 || !j.contains("path") || !j.contains("lat") ||
      !j.contains("lon") || !j["path"].is_array() || !j["lat"].is_number() ||
      !j["lon"].is_number()) {
    throw Error(Errc::MalformedValue, "location must be {path, lat, lon}");
  }
  SemanticLocation loc;
  for (const auto& p : j["path"]) {
    if (!p.is_string()) throw Error(Errc::MalformedValue, "location path element");
    loc.path.push_back(p.get<std::string>());
  }
  loc.lat = j["lat"].get<double>();
  loc.lon = j["lon"].get<double>();
  return loc;
}

Json to_json(const AttributeValue& value) {
  struct Visitor {
    Json operator()(std::monostate) const { return nullptr; }
    Json operator()(bool b) const { return b; }
    Json operator()(double d) const { return d; }
    Json operator()(const std::string& s) const { return s; }
    Json operator()(const SemanticLocation& l) const { return to_json(l); }
  };
  return std::visit(Visitor{}, value);
}

AttributeValue value_from_json(const Json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object()) return location_from_json(j);
  throw Error(Errc::MalformedValue, "unsupported value shape");
}

Json to_json(const std::vector<ManagementAttribute>& attrs) {
  Json out = Json::array();
  for (const auto& a : attrs) {
    Json e{{"name", a.name}, {"value", to_json(a.value)}};
    if (a.unit) e["unit"] = *a.unit;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManagementAttribute> management_attributes_from_json(const Json& j) {
  auto bad = [](const std::string& why) { return Error(Errc::MalformedValue, why); };
  std::vector<ManagementAttribute> attrs;
  auto unit_of = [&](const Json& e) -> std::optional<std::string> {
    if (!e.contains("unit")) return std::nullopt;
    if (!e["unit"].is_string()) throw bad("unit must be a string");
    return e["unit"].get<std::string>();
  };
  if (j.is_object()) {
    for (const auto& [name, v] : j.items()) {
      ManagementAttribute a;
      a.name = name;
      if (v.is_object() && v.contains("value")) {
        a.value = value_from_json(v["value"]);
        a.unit = unit_of(v);
      } else {
        a.value = value_from_json(v);
      }
      attrs.push_back(std::move(a));
    }
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("value")) {
        throw bad("attribute entries need a string name and a value");
      }
      attrs.push_back(ManagementAttribute{e["name"].get<std::string>(), value_from_json(e["value"]), unit_of(e)});
    }
  } else {
    throw bad("attributes must be an object or an array");
  }
  return attrs;
}

Json to_json(const ProtocolMessage& msg) {
  Json body = Json::array();
  for (const auto& e : msg.body) {
    Json entry{{"name", e.name}, {"value", to_json(e.value)}};
    if (e.unit) entry["unit"] = *e.unit;
    if (e.ts) entry["ts"] = *e.ts;
    body.push_back(std::move(entry));
  }
  Json j{{"v", kWireVersion},
         {"kind", std::string(to_string(msg.kind))},
         {"seq", msg.seq},
         {"sender", msg.sender},
         {"body", std::move(body)}};
  if (msg.mtid) j["mtid"] = msg.mtid->str();
  return j;
}

ProtocolMessage message_from_json(const Json& j) {
  if (!j.is_object()) malformed("frame body is not an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "v" && key != "kind" && key != "seq" && key != "sender" && key != "mtid" &&
        key != "body") {
      malformed("unknown key '" + key + "'");
    }
  }
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != kWireVersion) {
    malformed("missing or unsupported v");
  }
  if (!j.contains("kind") || !j["kind"].is_string()) malformed("missing kind");
  auto kind = parse_message_kind(j["kind"].get<std::string>());
  if (!kind) malformed("unknown kind");
  if (!j.contains("seq") || !j["seq"].is_number_unsigned()) malformed("missing seq");
  if (!j.contains("sender") || !j["sender"].is_string()) malformed("missing sender");

  ProtocolMessage msg;
  msg.kind = *kind;
  msg.seq = j["seq"].get<std::uint64_t>();
  msg.sender = j["sender"].get<std::string>();
  if (j.contains("mtid")) {
    if (!j["mtid"].is_string() || !is_valid_identifier(j["mtid"].get<std::string>())) {
      malformed("bad mtid");
    }
    msg.mtid = Mtid(j["mtid"].get<std::string>());
  }
  if (j.contains("body")) {
    if (!j["body"].is_array()) malformed("body is not an array");
    for (const auto& e : j["body"]) {
      if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("value")) {
        malformed("bad body entry");
      }
      for (const auto& [key, _] : e.items()) {
        if (key != "name" && key != "value" && key != "unit" && key != "ts") {
          malformed("unknown body key '" + key + "'");
        }
      }
      BodyEntry entry;
      entry.name = e["name"].get<std::string>();
      try {
        entry.value = value_from_json(e["value"]);
      } catch (const Error& err) {
        malformed(err.what());
      }
      if (e.contains("unit")) {
        if (!e["unit"].is_string()) malformed("bad unit");
        entry.unit = e["unit"].get<std::string>();
      }
      if (e.contains("ts")) {
        if (!e["ts"].is_number_integer()) malformed("bad ts");
        entry.ts = e["ts"].get<TimeMs>();
      }
      msg.body.push_back(std::move(entry));
    }
  }
  try {
    validate_message(msg);
  } catch (const Error& err) {
    malformed(err.what());
  }
  return msg;
}

std::vector<std::uint8_t> encode_message(const ProtocolMessage& msg) {
  validate_message(msg);
  const std::string text = to_json(msg).dump();
  if (text.size() > kMaxFramePayload) invalid("frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + text.size());
  const auto n = static_cast<std::uint32_t>(text.size());
  out.push_back(static_cast<std::uint8_t>(n >> 24));
  out.push_back(static_cast<std::uint8_t>(n >> 16));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  out.push_back(static_cast<std::uint8_t>(n));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

namespace {

std::uint32_t read_length(std::span<const std::uint8_t> bytes) {
  return (static_cast<std::uint32_t>(bytes[0]) << 24) | (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

ProtocolMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) malformed("short header");
  const auto n = read_length(bytes);
  if (n > kMaxFramePayload) malformed("oversize frame");
  if (bytes.size() - kFrameHeaderSize != n) malformed("length header does not match payload");
  const auto payload = bytes.subspan(kFrameHeaderSize);
  Json j = Json::parse(payload.begin(), payload.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) malformed("payload is not JSON");
  return message_from_json(j);
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> FrameReader::next() {
  if (buffer_.size() < kFrameHeaderSize) return std::nullopt;
  const auto n = read_length(buffer_);
  if (n > kMaxFramePayload) malformed("oversize frame");
  const std::size_t total = kFrameHeaderSize + n;
  if (buffer_.size() < total) return std::nullopt;
  std::vector<std::uint8_t> frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  return frame;
}

Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  }
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str());
}

}  // namespace iotmp
