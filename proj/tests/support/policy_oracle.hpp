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

// Brute-force reference for policy matching and obfuscation. Calendar maths
// goes through <chrono> rather than the library's own day arithmetic.

#include <algorithm>
#include <chrono>
#include <optional>
#include <tuple>
#include <vector>

#include "iotmp/privacy/policy.hpp"

namespace oracle {

inline bool window_holds(const iotmp::privacy::TimeWindow& w, iotmp::TimeMs t) {
  using namespace std::chrono;
  const sys_time<milliseconds> tp{milliseconds{t}};
  const auto day = floor<days>(tp);
  const unsigned iso = weekday{day}.iso_encoding();  // 1 = Monday
  const auto minute = duration_cast<minutes>(tp - day).count();
  return ((w.days >> (iso - 1)) & 1) != 0 && minute >= w.start_minute && minute < w.end_minute;
}

inline int weekly_coverage(const iotmp::privacy::DisclosurePolicy& p) {
  if (p.windows.empty()) return 7 * 24 * 60;
  int total = 0;
  for (const auto& w : p.windows) {
    int days = 0;
    for (int d = 0; d < 7; ++d) days += (w.days & (1 << d)) ? 1 : 0;
    total += days * (w.end_minute - w.start_minute);
  }
  return std::min(total, 7 * 24 * 60);
}

inline bool applies(const iotmp::privacy::DisclosurePolicy& p, const iotmp::privacy::RequestContext& ctx) {
  if (p.mtid != ctx.mtid) return false;
  if (p.requester != "*" && p.requester != ctx.requester.str()) return false;
  if (!p.windows.empty()) {
    bool any = false;
    for (const auto& w : p.windows) any = any || window_holds(w, ctx.time);
    if (!any) return false;
  }
  if (p.zone) {
    const auto& z = *p.zone;
    const auto& path = ctx.mt_location.path;
    if (z.size() > path.size() || !std::equal(z.begin(), z.end(), path.begin())) return false;
  }
  return true;
}

/// Enumerates every applicable policy, sorts by the specificity rule and
/// takes the head.
inline std::optional<iotmp::privacy::DisclosurePolicy> expected_match(
    const iotmp::privacy::RequestContext& ctx, const std::vector<iotmp::privacy::DisclosurePolicy>& policies) {
  std::vector<iotmp::privacy::DisclosurePolicy> hits;
  for (const auto& p : policies) {
    if (applies(p, ctx)) hits.push_back(p);
  }
  if (hits.empty()) return std::nullopt;
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.requester == "*", weekly_coverage(a), a.id) <
           std::make_tuple(b.requester == "*", weekly_coverage(b), b.id);
  });
  return hits.front();
}

/// Path length a response may carry, or nullopt when the oracle denies.
inline std::optional<std::size_t> allowed_depth(const iotmp::privacy::RequestContext& ctx,
                                                const std::vector<iotmp::privacy::DisclosurePolicy>& policies) {
  auto m = expected_match(ctx, policies);
  if (!m || m->action != iotmp::privacy::DisclosureAction::Disclose) return std::nullopt;
  return ctx.mt_location.path.size() - static_cast<std::size_t>(m->level);
}

}  // namespace oracle
