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
#include <memory>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/ids.hpp"
#include "iotmp/core/json_codec.hpp"
#include "iotmp/privacy/geo.hpp"

namespace iotmp::privacy {

inline constexpr std::string_view kAnyRequester = "*";
inline constexpr int kMinutesPerDay = 24 * 60;
inline constexpr int kMinutesPerWeek = 7 * kMinutesPerDay;

/// Weekly recurring window: the days in `days` (bit 0 = Monday ... bit 6 =
/// Sunday), minutes of day in [start_minute, end_minute), UTC.
struct TimeWindow {
  std::uint8_t days = 0x7f;
  int start_minute = 0;
  int end_minute = kMinutesPerDay;

  bool contains(TimeMs t) const noexcept;
  int weekly_minutes() const noexcept;

  bool operator==(const TimeWindow&) const = default;
};

/// 0 = Monday.
int weekday_of(TimeMs t) noexcept;
int minute_of_day(TimeMs t) noexcept;

enum class DisclosureAction { Disclose, Deny };

struct DisclosurePolicy {
  std::int64_t id = 0;
  Mtid mtid;
  std::string requester{kAnyRequester};  // an AppID or "*"
  std::vector<TimeWindow> windows;       // empty: any time
  std::optional<std::vector<std::string>> zone;  // MT must be inside this region
  DisclosureAction action = DisclosureAction::Deny;
  int level = 0;

  bool exact_requester() const noexcept { return requester != kAnyRequester; }
  /// Weekly minutes covered by the windows; smaller is narrower.
  int coverage() const noexcept;
  bool operator==(const DisclosurePolicy&) const = default;
};

struct RequestContext {
  AppId requester;
  Mtid mtid;
  TimeMs time = 0;
  SemanticLocation mt_location;
};

struct Decision {
  DisclosureAction action = DisclosureAction::Deny;
  int level = 0;
  std::optional<std::int64_t> policy_id;

  bool disclose() const noexcept { return action == DisclosureAction::Disclose; }
};

/// Requester scope, time windows and zone all hold for `ctx`.
bool policy_applies(const DisclosurePolicy& p, const RequestContext& ctx);

/// Most specific applicable policy: exact AppID before wildcard, then the
/// narrower weekly coverage, then the lowest id.
std::optional<DisclosurePolicy> match_policy(const RequestContext& ctx,
                                             std::span<const DisclosurePolicy> policies);

/// No applicable policy means Deny.
Decision evaluate(const RequestContext& ctx, std::span<const DisclosurePolicy> policies);

/// Drops `level` regions from the fine end of the path and substitutes the
/// representative point of the remaining region. Errors: LevelOutOfRange,
/// PathNotInHierarchy.
SemanticLocation obfuscate(const SemanticLocation& loc, int level, const GeoHierarchy& h);

/// Evaluate then obfuscate the context's location; nullopt means Denied.
std::optional<SemanticLocation> disclose_location(const RequestContext& ctx,
                                                  std::span<const DisclosurePolicy> policies,
                                                  const GeoHierarchy& h);

Json to_json(const DisclosurePolicy& p);
/// Throws InvalidPolicy.
DisclosurePolicy policy_from_json(const Json& j);
Json to_json(const TimeWindow& w);
TimeWindow window_from_json(const Json& j);

/// Checks levels, windows, zones and the one-policy-per-(mtid, requester,
/// context) rule. Throws InvalidPolicy or DuplicatePolicy.
void validate_policy_set(std::span<const DisclosurePolicy> policies, const Mtid& mtid,
                         const GeoHierarchy& h);

/// Per-MT policy sets behind immutable snapshots. Readers take a snapshot and
/// evaluate without holding the lock; edits replace the whole set.
class PrivacyModule {
 public:
  using Snapshot = std::shared_ptr<const std::vector<DisclosurePolicy>>;

  explicit PrivacyModule(std::shared_ptr<const GeoHierarchy> hierarchy);

  const GeoHierarchy& hierarchy() const noexcept { return *hierarchy_; }
  std::shared_ptr<const GeoHierarchy> hierarchy_ptr() const noexcept { return hierarchy_; }

  void set_policies(const Mtid& mtid, std::vector<DisclosurePolicy> policies);
  void erase(const Mtid& mtid);
  Snapshot policies(const Mtid& mtid) const;
  std::vector<Mtid> mtids() const;

  Decision decide(const RequestContext& ctx) const;
  std::optional<SemanticLocation> disclose(const RequestContext& ctx) const;

 private:
  std::shared_ptr<const GeoHierarchy> hierarchy_;
  mutable std::mutex mu_;
  std::map<Mtid, Snapshot> sets_;
};

}  // namespace iotmp::privacy
