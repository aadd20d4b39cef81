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

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotmp/core/error.hpp"
#include "iotmp/core/ids.hpp"
#include "iotmp/core/json_codec.hpp"

namespace iotmp::security {

struct SecurityProfile {
  Mtid mtid;
  std::set<std::string> authorized_entities;  // AppIDs
  bool secure_only = false;
  std::string owner;

  bool operator==(const SecurityProfile&) const = default;
};

enum class AdmissionState { Unknown, Pending, Approved, Revoked };

std::string_view to_string(AdmissionState s);

struct AgentAdmission {
  AgentId agentid;
  AdmissionState state = AdmissionState::Unknown;
  std::string approved_by;
  TimeMs approved_at = 0;

  bool operator==(const AgentAdmission&) const = default;
};

/// Which gate of the policy check refused a request.
enum class DenialPoint { None, InsecureChannel, RequesterNotApproved };

std::string_view to_string(DenialPoint p);

struct PolicyVerdict {
  bool allowed = false;
  DenialPoint denied_at = DenialPoint::None;
};

/// The two-gate check as a pure function: the channel gate runs before the
/// requester gate.
PolicyVerdict check_policy(const SecurityProfile& profile, const std::string& requester,
                           bool channel_secure);

struct ProfileChange {
  enum class Kind { AddEntity, RemoveEntity, SetSecureOnly } kind;
  std::string entity;
  bool secure_only = false;

  static ProfileChange add(std::string app) { return {Kind::AddEntity, std::move(app), false}; }
  static ProfileChange remove(std::string app) { return {Kind::RemoveEntity, std::move(app), false}; }
  static ProfileChange set_secure_only(bool on) { return {Kind::SetSecureOnly, {}, on}; }
};

Json to_json(const SecurityProfile& p);
SecurityProfile profile_from_json(const Json& j);
Json to_json(const AgentAdmission& a);
AgentAdmission admission_from_json(const Json& j);

/// Agent admission registry and per-MT security profiles.
class SecurityModule {
 public:
  using ChangeListener = std::function<void()>;

  explicit SecurityModule(std::set<std::string> admins = {});

  void set_change_listener(ChangeListener l) { on_change_ = std::move(l); }

  // admission
  AgentAdmission admit_agent(const AgentId& agentid);
  AgentAdmission approve_agent(const AgentId& agentid, const std::string& admin, TimeMs now);
  AgentAdmission revoke_agent(const AgentId& agentid, const std::string& admin, TimeMs now);
  AdmissionState admission_state(const AgentId& agentid) const;
  std::optional<AgentAdmission> admission(const AgentId& agentid) const;
  std::vector<AgentAdmission> pending() const;
  std::vector<AgentAdmission> admissions() const;
  bool is_approved(const AgentId& agentid) const {
    return admission_state(agentid) == AdmissionState::Approved;
  }
  void forget_agent(const AgentId& agentid);

  // profiles
  void create_profile(SecurityProfile profile);
  std::optional<SecurityProfile> profile(const Mtid& mtid) const;
  void erase_profile(const Mtid& mtid);
  bool is_admin(const std::string& actor) const { return admins_.count(actor) != 0; }
  /// Errors: UnknownMT, NotOwner.
  SecurityProfile edit_profile(const Mtid& mtid, const ProfileChange& change, const std::string& actor);
  /// Replaces the editable fields (entities, secure flag) in one step.
  SecurityProfile replace_profile(const Mtid& mtid, std::set<std::string> entities, bool secure_only,
                                  const std::string& actor);

  /// Errors: UnknownMT. Denials are recorded in the audit log.
  PolicyVerdict check(const std::string& requester, const Mtid& mtid, bool channel_secure);
  bool check_policy(const std::string& requester, const Mtid& mtid, bool channel_secure) {
    return check(requester, mtid, channel_secure).allowed;
  }

  struct AuditEntry {
    std::string requester;
    Mtid mtid;
    DenialPoint denied_at;
  };
  std::vector<AuditEntry> audit_log() const;

  Json to_json() const;
  void load_json(const Json& j);

 private:
  void changed();
  void require_owner(const SecurityProfile& p, const std::string& actor) const;

  std::set<std::string> admins_;
  mutable std::mutex mu_;
  std::map<AgentId, AgentAdmission> admissions_;
  std::map<Mtid, SecurityProfile> profiles_;
  std::vector<AuditEntry> audit_;
  ChangeListener on_change_;
};

}  // namespace iotmp::security
