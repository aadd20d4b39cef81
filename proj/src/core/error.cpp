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

#include "iotmp/core/error.hpp"

namespace iotmp {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingID: return "MissingID";
    case Errc::DuplicateAttributeName: return "DuplicateAttributeName";
    case Errc::MalformedValue: return "MalformedValue";
    case Errc::ReservedAttributeName: return "ReservedAttributeName";
    case Errc::InvalidIdentifier: return "InvalidIdentifier";
    case Errc::InvalidKindBody: return "InvalidKindBody";
    case Errc::MalformedFrame: return "MalformedFrame";
    case Errc::PreconditionFailed: return "PreconditionFailed";
    case Errc::TransportUnreachable: return "TransportUnreachable";
    case Errc::JoinRejected: return "JoinRejected";
    case Errc::NoManagerDiscovered: return "NoManagerDiscovered";
    case Errc::UnknownRegistration: return "UnknownRegistration";
    case Errc::NotRegistered: return "NotRegistered";
    case Errc::RejectedUnapproved: return "RejectedUnapproved";
    case Errc::UnknownAttribute: return "UnknownAttribute";
    case Errc::NotActuatable: return "NotActuatable";
    case Errc::ActuationFailed: return "ActuationFailed";
    case Errc::DuplicateMTID: return "DuplicateMTID";
    case Errc::MalformedDescriptor: return "MalformedDescriptor";
    case Errc::UnapprovedAgent: return "UnapprovedAgent";
    case Errc::UnknownMT: return "UnknownMT";
    case Errc::DeviceTimeout: return "DeviceTimeout";
    case Errc::MoMsUnreachable: return "MoMsUnreachable";
    case Errc::AlreadyKnown: return "AlreadyKnown";
    case Errc::NotPending: return "NotPending";
    case Errc::NotOwner: return "NotOwner";
    case Errc::UnknownAgent: return "UnknownAgent";
    case Errc::LevelOutOfRange: return "LevelOutOfRange";
    case Errc::PathNotInHierarchy: return "PathNotInHierarchy";
    case Errc::InvalidLocation: return "InvalidLocation";
    case Errc::InvalidPolicy: return "InvalidPolicy";
    case Errc::DuplicatePolicy: return "DuplicatePolicy";
    case Errc::AppIDTaken: return "AppIDTaken";
    case Errc::BadCredentials: return "BadCredentials";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::Forbidden: return "Forbidden";
    case Errc::RoleForbidden: return "RoleForbidden";
    case Errc::BadRequest: return "BadRequest";
    case Errc::NotFound: return "NotFound";
    case Errc::MalformedTopology: return "MalformedTopology";
    case Errc::ManagerUnreachable: return "ManagerUnreachable";
    case Errc::ScriptInvalid: return "ScriptInvalid";
    case Errc::UnknownTarget: return "UnknownTarget";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

}  // namespace iotmp
