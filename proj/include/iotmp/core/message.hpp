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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/error.hpp"
#include "iotmp/core/ids.hpp"

namespace iotmp {

enum class MessageKind {
  DirectJoin,
  AssociateReq,
  AssociateResp,
  Reconnect,
  JoinAck,
  Get,
  Set,
  Update,
  Alert,
  MgmtGet,
  Ack,
  Error,
};

std::string_view to_string(MessageKind kind);
std::optional<MessageKind> parse_message_kind(std::string_view text);

/// One name/value pair in a message body. Names starting with '$' are protocol
/// control fields (status, correlation, error codes); attribute names can never
/// start with '$', so the two never collide.
struct BodyEntry {
  std::string name;
  AttributeValue value;
  std::optional<std::string> unit;
  std::optional<TimeMs> ts;

  bool operator==(const BodyEntry&) const = default;
};

namespace ctl {
inline constexpr std::string_view kStatus = "$status";
inline constexpr std::string_view kAgentId = "$agentid";
inline constexpr std::string_view kCode = "$code";
inline constexpr std::string_view kReplyTo = "$re";
inline constexpr std::string_view kManagerId = "$managerid";
inline constexpr std::string_view kLoad = "$load";
inline constexpr std::string_view kHost = "$host";
inline constexpr std::string_view kResult = "$result";
}  // namespace ctl

struct ProtocolMessage {
  MessageKind kind = MessageKind::Get;
  std::uint64_t seq = 0;
  std::string sender;
  std::optional<Mtid> mtid;
  std::vector<BodyEntry> body;

  bool operator==(const ProtocolMessage&) const = default;

  const BodyEntry* find(std::string_view name) const;
  std::optional<std::string> control_string(std::string_view name) const;
  std::optional<double> control_number(std::string_view name) const;
  /// Sequence number this message answers, when it is a response.
  std::optional<std::uint64_t> reply_to() const;
};

inline constexpr std::size_t kFrameHeaderSize = 4;
inline constexpr std::size_t kMaxFramePayload = 1U << 20;

/// Throws InvalidKindBody when mandatory fields for `msg.kind` are missing.
void validate_message(const ProtocolMessage& msg);

/// 4-byte big-endian length followed by canonical UTF-8 JSON.
std::vector<std::uint8_t> encode_message(const ProtocolMessage& msg);

/// Inverse of encode_message. Any truncation, trailing data, bad length,
/// bad JSON, unknown key, or kind/body violation is MalformedFrame.
ProtocolMessage decode_message(std::span<const std::uint8_t> bytes);

/// Splits a byte stream into complete frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete frame (header included), or nullopt when more bytes are
  /// needed. Throws MalformedFrame when the header announces an oversize frame.
  std::optional<std::vector<std::uint8_t>> next();

 private:
  std::vector<std::uint8_t> buffer_;
};

}  // namespace iotmp
