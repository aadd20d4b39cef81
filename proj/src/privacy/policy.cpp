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

#include "iotmp/privacy/policy.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <tuple>

namespace iotmp::privacy {

namespace {

constexpr TimeMs kMsPerMinute = 60'000;
constexpr TimeMs kMsPerDay = 86'400'000;
constexpr std::array<std::string_view, 7> kDayNames = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

TimeMs floor_div(TimeMs a, TimeMs b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

[[noreturn]] void bad_policy(const std::string& why) { throw Error(Errc::InvalidPolicy, why); }

std::string format_minute(int m) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02d:%02d", m / 60, m % 60);
  return buf;
}

int parse_minute(const Json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (!j.is_string()) bad_policy("window time must be \"HH:MM\"");
  const auto s = j.get<std::string>();
  int h = -1;
  int m = -1;
  char tail = 0;
  if (s.size() != 5 || std::sscanf(s.c_str(), "%2d:%2d%c", &h, &m, &tail) != 2 || m < 0 || m > 59 ||
      h < 0 || h > 24 || (h == 24 && m != 0)) {
    bad_policy("bad time '" + s + "'");
  }
  return h * 60 + m;
}

auto specificity_key(const DisclosurePolicy& p) {
  return std::make_tuple(p.exact_requester() ? 0 : 1, p.coverage(), p.id);
}

std::vector<TimeWindow> sorted_windows(std::vector<TimeWindow> w) {
  std::sort(w.begin(), w.end(), [](const TimeWindow& a, const TimeWindow& b) {
    return std::tie(a.days, a.start_minute, a.end_minute) < std::tie(b.days, b.start_minute, b.end_minute);
  });
  return w;
}

}  // namespace

int weekday_of(TimeMs t) noexcept {
  // 1970-01-01 was a Thursday.
  const TimeMs days = floor_div(t, kMsPerDay);
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

int minute_of_day(TimeMs t) noexcept {
  const TimeMs ms_in_day = t - floor_div(t, kMsPerDay) * kMsPerDay;
  return static_cast<int>(ms_in_day / kMsPerMinute);
}

bool TimeWindow::contains(TimeMs t) const noexcept {
  if ((days & (1U << weekday_of(t))) == 0) return false;
  const int m = minute_of_day(t);
  return m >= start_minute && m < end_minute;
}

int TimeWindow::weekly_minutes() const noexcept {
  int n_days = 0;
  for (int d = 0; d < 7; ++d) n_days += (days >> d) & 1;
  return n_days * (end_minute - start_minute);
}

int DisclosurePolicy::coverage() const noexcept {
  if (windows.empty()) return kMinutesPerWeek;
  int total = 0;
  for (const auto& w : windows) total += w.weekly_minutes();
  return std::min(total, kMinutesPerWeek);
}

bool policy_applies(const DisclosurePolicy& p, const RequestContext& ctx) {
  if (p.mtid != ctx.mtid) return false;
  if (p.exact_requester() && p.requester != ctx.requester.str()) return false;
  if (!p.windows.empty() &&
      std::none_of(p.windows.begin(), p.windows.end(), [&](const TimeWindow& w) { return w.contains(ctx.time); })) {
    return false;
  }
  if (p.zone && !is_path_prefix(*p.zone, ctx.mt_location.path)) return false;
  return true;
}

std::optional<DisclosurePolicy> match_policy(const RequestContext& ctx,
                                             std::span<const DisclosurePolicy> policies) {
  const DisclosurePolicy* best = nullptr;
  for (const auto& p : policies) {
    if (!policy_applies(p, ctx)) continue;
    if (best == nullptr || specificity_key(p) < specificity_key(*best)) best = &p;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

Decision evaluate(const RequestContext& ctx, std::span<const DisclosurePolicy> policies) {
  auto matched = match_policy(ctx, policies);
  if (!matched) return Decision{};
  return Decision{matched->action, matched->level, matched->id};
}

SemanticLocation obfuscate(const SemanticLocation& loc, int level, const GeoHierarchy& h) {
  if (!h.resolve(loc.path)) throw Error(Errc::PathNotInHierarchy, describe(AttributeValue{loc}));
  if (level < 0 || static_cast<std::size_t>(level) > loc.path.size() - 1) {
    throw Error(Errc::LevelOutOfRange, std::to_string(level));
  }
  if (level == 0) return loc;
  std::vector<std::string> kept(loc.path.begin(), loc.path.end() - level);
  return h.location_of(*h.resolve(kept));
}

std::optional<SemanticLocation> disclose_location(const RequestContext& ctx,
                                                  std::span<const DisclosurePolicy> policies,
                                                  const GeoHierarchy& h) {
  const auto d = evaluate(ctx, policies);
  if (!d.disclose()) return std::nullopt;
  return obfuscate(ctx.mt_location, d.level, h);
}

Json to_json(const TimeWindow& w) {
  Json days = Json::array();
  for (int d = 0; d < 7; ++d) {
    if (w.days & (1U << d)) days.push_back(std::string(kDayNames[d]));
  }
  return Json{{"days", days}, {"start", format_minute(w.start_minute)}, {"end", format_minute(w.end_minute)}};
}

TimeWindow window_from_json(const Json& j) {
  if (!j.is_object()) bad_policy("window must be an object");
  TimeWindow w;
  if (j.contains("days")) {
    if (!j["days"].is_array()) bad_policy("days must be an array");
    w.days = 0;
    for (const auto& d : j["days"]) {
      if (!d.is_string()) bad_policy("day must be a string");
      auto it = std::find(kDayNames.begin(), kDayNames.end(), d.get<std::string>());
      if (it == kDayNames.end()) bad_policy("unknown day '" + d.get<std::string>() + "'");
      w.days |= static_cast<std::uint8_t>(1U << (it - kDayNames.begin()));
    }
  }
  if (j.contains("start")) w.start_minute = parse_minute(j["start"]);
  if (j.contains("end")) w.end_minute = parse_minute(j["end"]);
  return w;
}

Json to_json(const DisclosurePolicy& p) {
  Json windows = Json::array();
  for (const auto& w : p.windows) windows.push_back(to_json(w));
  return Json{{"id", p.id},
              {"mtid", p.mtid.str()},
              {"requester", p.requester},
              {"windows", windows},
              {"zone", p.zone ? Json(*p.zone) : Json(nullptr)},
              {"action", p.action == DisclosureAction::Disclose ? "disclose" : "deny"},
              {"level", p.level}};
}

DisclosurePolicy policy_from_json(const Json& j) {
  if (!j.is_object()) bad_policy("policy must be an object");
  DisclosurePolicy p;
  if (!j.contains("id") || !j["id"].is_number_integer()) bad_policy("id missing");
  p.id = j["id"].get<std::int64_t>();
  if (!j.contains("mtid") || !j["mtid"].is_string()) bad_policy("mtid missing");
  try {
    p.mtid = Mtid(j["mtid"].get<std::string>());
  } catch (const Error& e) {
    bad_policy(e.what());
  }
  if (j.contains("requester")) {
    if (!j["requester"].is_string()) bad_policy("requester must be a string");
    p.requester = j["requester"].get<std::string>();
  }
  if (j.contains("windows") && !j["windows"].is_null()) {
    if (!j["windows"].is_array()) bad_policy("windows must be an array");
    for (const auto& w : j["windows"]) p.windows.push_back(window_from_json(w));
  }
  if (j.contains("zone") && !j["zone"].is_null()) {
    if (!j["zone"].is_array()) bad_policy("zone must be a path array");
    std::vector<std::string> zone;
    for (const auto& z : j["zone"]) {
      if (!z.is_string()) bad_policy("zone element must be a string");
      zone.push_back(z.get<std::string>());
    }
    p.zone = std::move(zone);
  }
  if (!j.contains("action") || !j["action"].is_string()) bad_policy("action missing");
  const auto action = j["action"].get<std::string>();
  if (action == "disclose") {
    p.action = DisclosureAction::Disclose;
  } else if (action == "deny") {
    p.action = DisclosureAction::Deny;
  } else {
    bad_policy("action must be disclose or deny");
  }
  if (j.contains("level")) {
    if (!j["level"].is_number_integer()) bad_policy("level must be an integer");
    p.level = j["level"].get<int>();
  }
  return p;
}

void validate_policy_set(std::span<const DisclosurePolicy> policies, const Mtid& mtid,
                         const GeoHierarchy& h) {
  std::set<std::int64_t> ids;
  std::set<std::tuple<std::string, std::vector<std::tuple<int, int, int>>, std::vector<std::string>, bool>> contexts;
  const int max_level = static_cast<int>(h.max_depth()) - 1;
  for (const auto& p : policies) {
    if (p.mtid != mtid) bad_policy("policy " + std::to_string(p.id) + " belongs to another MT");
    if (!ids.insert(p.id).second) throw Error(Errc::DuplicatePolicy, "policy id " + std::to_string(p.id));
    if (p.exact_requester() && !is_valid_identifier(p.requester)) bad_policy("requester '" + p.requester + "'");
    if (p.level < 0 || p.level > max_level) {
      bad_policy("level " + std::to_string(p.level) + " outside 0.." + std::to_string(max_level));
    }
    for (const auto& w : p.windows) {
      if (w.days == 0 || (w.days & ~0x7f) != 0) bad_policy("window without days");
      if (w.start_minute < 0 || w.end_minute > kMinutesPerDay || w.start_minute >= w.end_minute) {
        bad_policy("window must satisfy 00:00 <= start < end <= 24:00");
      }
    }
    if (p.zone && !h.resolve(*p.zone)) bad_policy("zone not in hierarchy");
    std::vector<std::tuple<int, int, int>> w;
    for (const auto& tw : sorted_windows(p.windows)) w.emplace_back(tw.days, tw.start_minute, tw.end_minute);
    if (!contexts.emplace(p.requester, w, p.zone.value_or(std::vector<std::string>{}), p.zone.has_value()).second) {
      throw Error(Errc::DuplicatePolicy, "policy " + std::to_string(p.id) + " repeats a (requester, context) pair");
    }
  }
}

PrivacyModule::PrivacyModule(std::shared_ptr<const GeoHierarchy> hierarchy)
    : hierarchy_(std::move(hierarchy)) {}

void PrivacyModule::set_policies(const Mtid& mtid, std::vector<DisclosurePolicy> policies) {
  validate_policy_set(policies, mtid, *hierarchy_);
  auto snap = std::make_shared<const std::vector<DisclosurePolicy>>(std::move(policies));
  std::lock_guard lock(mu_);
  sets_[mtid] = std::move(snap);
}

void PrivacyModule::erase(const Mtid& mtid) {
  std::lock_guard lock(mu_);
  sets_.erase(mtid);
}

PrivacyModule::Snapshot PrivacyModule::policies(const Mtid& mtid) const {
  static const Snapshot kEmpty = std::make_shared<const std::vector<DisclosurePolicy>>();
  std::lock_guard lock(mu_);
  auto it = sets_.find(mtid);
  return it == sets_.end() ? kEmpty : it->second;
}

std::vector<Mtid> PrivacyModule::mtids() const {
  std::lock_guard lock(mu_);
  std::vector<Mtid> out;
  for (const auto& [m, _] : sets_) out.push_back(m);
  return out;
}

Decision PrivacyModule::decide(const RequestContext& ctx) const {
  auto snap = policies(ctx.mtid);
  return evaluate(ctx, *snap);
}

std::optional<SemanticLocation> PrivacyModule::disclose(const RequestContext& ctx) const {
  auto snap = policies(ctx.mtid);
  return disclose_location(ctx, *snap, *hierarchy_);
}

}  // namespace iotmp::privacy
