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
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace iotmp {

using TimeMs = std::int64_t;

enum class Errc {
  // descriptors and identifiers
  MissingID,
  DuplicateAttributeName,
  MalformedValue,
  ReservedAttributeName,
  InvalidIdentifier,
  // wire format
  InvalidKindBody,
  MalformedFrame,
  // agent
  PreconditionFailed,
  TransportUnreachable,
  JoinRejected,
  NoManagerDiscovered,
  UnknownRegistration,
  NotRegistered,
  RejectedUnapproved,
  UnknownAttribute,
  NotActuatable,
  ActuationFailed,
  // manager
  DuplicateMTID,
  MalformedDescriptor,
  UnapprovedAgent,
  UnknownMT,
  DeviceTimeout,
  MoMsUnreachable,
  // security
  AlreadyKnown,
  NotPending,
  NotOwner,
  UnknownAgent,
  // privacy
  LevelOutOfRange,
  PathNotInHierarchy,
  InvalidLocation,
  InvalidPolicy,
  DuplicatePolicy,
  // api
  AppIDTaken,
  BadCredentials,
  Unauthorized,
  Forbidden,
  RoleForbidden,
  BadRequest,
  // moms
  NotFound,
  MalformedTopology,
  ManagerUnreachable,
  // sim and cli
  ScriptInvalid,
  UnknownTarget,
  ConfigInvalid,
  BindFailure,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                          : std::string(to_string(code)) + ": " + detail),
        code_(code) {}
  explicit Error(Errc code) : Error(code, {}) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Value-or-error carried through asynchronous completions, where throwing
/// across an event loop boundary is not an option.
template <class T>
class Result {
 public:
  Result(T value) : data_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Error error) : data_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const noexcept { return std::holds_alternative<T>(data_); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const& {
    if (!ok()) throw std::get<Error>(data_);
    return std::get<T>(data_);
  }
  T& value() & {
    if (!ok()) throw std::get<Error>(data_);
    return std::get<T>(data_);
  }
  const Error& error() const& { return std::get<Error>(data_); }
  Errc code() const { return std::get<Error>(data_).code(); }

 private:
  std::variant<T, Error> data_;
};

}  // namespace iotmp
