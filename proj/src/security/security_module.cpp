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

#include "iotmp/security/security_module.hpp"

#include <algorithm>

namespace iotmp::security {

namespace {

constexpr std::size_t kAuditCapacity = 4096;

AdmissionState parse_state(const std::string& s) {
  if (s == "Pending") return AdmissionState::Pending;
  if (s == "Approved") return AdmissionState::Approved;
  if (s == "Revoked") return AdmissionState::Revoked;
  return AdmissionState::Unknown;
}

}  // namespace

std::string_view to_string(AdmissionState s) {
  switch (s) {
    case AdmissionState::Unknown: return "Unknown";
    case AdmissionState::Pending: return "Pending";
    case AdmissionState::Approved: return "Approved";
    case AdmissionState::Revoked: return "Revoked";
  }
  return "Unknown";
}

std::string_view to_string(DenialPoint p) {
  switch (p) {
    case DenialPoint::None: return "none";
    case DenialPoint::InsecureChannel: return "channel";
    case DenialPoint::RequesterNotApproved: return "requester";
  }
  return "none";
}

PolicyVerdict check_policy(const SecurityProfile& profile, const std::string& requester,
                           bool channel_secure) {
  if (profile.secure_only && !channel_secure) return {false, DenialPoint::InsecureChannel};
  if (profile.authorized_entities.count(requester) == 0) {
    return {false, DenialPoint::RequesterNotApproved};
  }
  return {true, DenialPoint::None};
}

Json to_json(const SecurityProfile& p) {
  return Json{{"mtid", p.mtid.str()},
              {"authorized_entities", p.authorized_entities},
              {"secure_only", p.secure_only},
              {"owner", p.owner}};
}

SecurityProfile profile_from_json(const Json& j) {
  SecurityProfile p;
  p.mtid = Mtid(j.at("mtid").get<std::string>());
  p.authorized_entities = j.at("authorized_entities").get<std::set<std::string>>();
  p.secure_only = j.at("secure_only").get<bool>();
  p.owner = j.at("owner").get<std::string>();
  return p;
}

Json to_json(const AgentAdmission& a) {
  return Json{{"agentid", a.agentid.str()},
              {"state", std::string(to_string(a.state))},
              {"approved_by", a.approved_by},
              {"approved_at", a.approved_at}};
}

AgentAdmission admission_from_json(const Json& j) {
  AgentAdmission a;
  a.agentid = AgentId(j.at("agentid").get<std::string>());
  a.state = parse_state(j.at("state").get<std::string>());
  a.approved_by = j.value("approved_by", "");
  a.approved_at = j.value("approved_at", TimeMs{0});
  return a;
}

SecurityModule::SecurityModule(std::set<std::string> admins) : admins_(std::move(admins)) {}

void SecurityModule::changed() {
  if (on_change_) on_change_();
}

AgentAdmission SecurityModule::admit_agent(const AgentId& agentid) {
  AgentAdmission out;
  {
    std::lock_guard lock(mu_);
    if (admissions_.count(agentid) != 0) throw Error(Errc::AlreadyKnown, agentid.str());
    out = AgentAdmission{agentid, AdmissionState::Pending, {}, 0};
    admissions_[agentid] = out;
  }
  changed();
  return out;
}

AgentAdmission SecurityModule::approve_agent(const AgentId& agentid, const std::string& admin, TimeMs now) {
  AgentAdmission out;
  {
    std::lock_guard lock(mu_);
    auto it = admissions_.find(agentid);
    if (it == admissions_.end()) throw Error(Errc::UnknownAgent, agentid.str());
    if (it->second.state != AdmissionState::Pending) {
      throw Error(Errc::NotPending, agentid.str() + " is " + std::string(to_string(it->second.state)));
    }
    it->second.state = AdmissionState::Approved;
    it->second.approved_by = admin;
    it->second.approved_at = now;
    out = it->second;
  }
  changed();
  return out;
}

AgentAdmission SecurityModule::revoke_agent(const AgentId& agentid, const std::string& admin, TimeMs now) {
  AgentAdmission out;
  {
    std::lock_guard lock(mu_);
    auto it = admissions_.find(agentid);
    if (it == admissions_.end()) throw Error(Errc::UnknownAgent, agentid.str());
    if (it->second.state != AdmissionState::Pending && it->second.state != AdmissionState::Approved) {
      throw Error(Errc::NotPending, agentid.str() + " is " + std::string(to_string(it->second.state)));
    }
    it->second.state = AdmissionState::Revoked;
    it->second.approved_by = admin;
    it->second.approved_at = now;
    out = it->second;
  }
  changed();
  return out;
}

AdmissionState SecurityModule::admission_state(const AgentId& agentid) const {
  std::lock_guard lock(mu_);
  auto it = admissions_.find(agentid);
  return it == admissions_.end() ? AdmissionState::Unknown : it->second.state;
}

std::optional<AgentAdmission> SecurityModule::admission(const AgentId& agentid) const {
  std::lock_guard lock(mu_);
  auto it = admissions_.find(agentid);
  if (it == admissions_.end()) return std::nullopt;
  return it->second;
}

std::vector<AgentAdmission> SecurityModule::pending() const {
  std::lock_guard lock(mu_);
  std::vector<AgentAdmission> out;
  for (const auto& [_, a] : admissions_) {
    if (a.state == AdmissionState::Pending) out.push_back(a);
  }
  return out;
}

std::vector<AgentAdmission> SecurityModule::admissions() const {
  std::lock_guard lock(mu_);
  std::vector<AgentAdmission> out;
  for (const auto& [_, a] : admissions_) out.push_back(a);
  return out;
}

void SecurityModule::forget_agent(const AgentId& agentid) {
  {
    std::lock_guard lock(mu_);
    admissions_.erase(agentid);
  }
  changed();
}

void SecurityModule::create_profile(SecurityProfile profile) {
  {
    std::lock_guard lock(mu_);
    profiles_[profile.mtid] = std::move(profile);
  }
  changed();
}

std::optional<SecurityProfile> SecurityModule::profile(const Mtid& mtid) const {
  std::lock_guard lock(mu_);
  auto it = profiles_.find(mtid);
  if (it == profiles_.end()) return std::nullopt;
  return it->second;
}

void SecurityModule::erase_profile(const Mtid& mtid) {
  {
    std::lock_guard lock(mu_);
    profiles_.erase(mtid);
  }
  changed();
}

void SecurityModule::require_owner(const SecurityProfile& p, const std::string& actor) const {
  if (actor != p.owner && admins_.count(actor) == 0) {
    throw Error(Errc::NotOwner, actor + " does not own " + p.mtid.str());
  }
}

SecurityProfile SecurityModule::edit_profile(const Mtid& mtid, const ProfileChange& change,
                                             const std::string& actor) {
  SecurityProfile out;
  {
    std::lock_guard lock(mu_);
    auto it = profiles_.find(mtid);
    if (it == profiles_.end()) throw Error(Errc::UnknownMT, mtid.str());
    require_owner(it->second, actor);
    SecurityProfile next = it->second;
    switch (change.kind) {
      case ProfileChange::Kind::AddEntity:
        if (!is_valid_identifier(change.entity)) throw Error(Errc::BadRequest, "entity '" + change.entity + "'");
        next.authorized_entities.insert(change.entity);
        break;
      case ProfileChange::Kind::RemoveEntity:
        next.authorized_entities.erase(change.entity);
        break;
      case ProfileChange::Kind::SetSecureOnly:
        next.secure_only = change.secure_only;
        break;
    }
    it->second = next;
    out = std::move(next);
  }
  changed();
  return out;
}

SecurityProfile SecurityModule::replace_profile(const Mtid& mtid, std::set<std::string> entities,
                                                bool secure_only, const std::string& actor) {
  for (const auto& e : entities) {
    if (!is_valid_identifier(e)) throw Error(Errc::BadRequest, "entity '" + e + "'");
  }
  SecurityProfile out;
  {
    std::lock_guard lock(mu_);
    auto it = profiles_.find(mtid);
    if (it == profiles_.end()) throw Error(Errc::UnknownMT, mtid.str());
    require_owner(it->second, actor);
    it->second.authorized_entities = std::move(entities);
    it->second.secure_only = secure_only;
    out = it->second;
  }
  changed();
  return out;
}

PolicyVerdict SecurityModule::check(const std::string& requester, const Mtid& mtid, bool channel_secure) {
  std::lock_guard lock(mu_);
  auto it = profiles_.find(mtid);
  if (it == profiles_.end()) throw Error(Errc::UnknownMT, mtid.str());
  auto verdict = security::check_policy(it->second, requester, channel_secure);
  if (!verdict.allowed) {
    if (audit_.size() >= kAuditCapacity) audit_.erase(audit_.begin(), audit_.begin() + kAuditCapacity / 2);
    audit_.push_back({requester, mtid, verdict.denied_at});
  }
  return verdict;
}

std::vector<SecurityModule::AuditEntry> SecurityModule::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

Json SecurityModule::to_json() const {
  std::lock_guard lock(mu_);
  Json admissions = Json::array();
  for (const auto& [_, a] : admissions_) admissions.push_back(security::to_json(a));
  Json profiles = Json::array();
  for (const auto& [_, p] : profiles_) profiles.push_back(security::to_json(p));
  return Json{{"admissions", admissions}, {"profiles", profiles}};
}

void SecurityModule::load_json(const Json& j) {
  std::lock_guard lock(mu_);
  admissions_.clear();
  profiles_.clear();
  for (const auto& a : j.at("admissions")) {
    auto adm = admission_from_json(a);
    admissions_[adm.agentid] = adm;
  }
  for (const auto& p : j.at("profiles")) {
    auto prof = profile_from_json(p);
    profiles_[prof.mtid] = prof;
  }
}

}  // namespace iotmp::security
