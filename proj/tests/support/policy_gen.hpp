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

#include <random>
#include <string>
#include <vector>

#include "iotmp/privacy/policy.hpp"

namespace oracle {

/// Random but valid policy sets for one MT located at `loc`. Zones are drawn
/// from prefixes of `loc` (so they can match) and from `other_zone`.
inline std::vector<iotmp::privacy::DisclosurePolicy> random_policy_set(
    std::mt19937_64& rng, const iotmp::Mtid& mtid, const iotmp::SemanticLocation& loc,
    const std::vector<std::string>& other_zone, const std::vector<std::string>& requesters,
    const iotmp::privacy::GeoHierarchy& h, std::size_t max_policies = 6) {
  using namespace iotmp::privacy;
  const int max_level = static_cast<int>(loc.path.size()) - 1;
  std::vector<DisclosurePolicy> out;
  const auto n = rng() % (max_policies + 1);
  std::int64_t next_id = 1 + static_cast<std::int64_t>(rng() % 5);
  for (std::size_t attempt = 0; out.size() < n && attempt < 4 * max_policies; ++attempt) {
    DisclosurePolicy p;
    p.id = next_id;
    p.mtid = mtid;
    p.requester = requesters[rng() % requesters.size()];
    const auto n_windows = rng() % 3;
    for (std::size_t w = 0; w < n_windows; ++w) {
      TimeWindow tw;
      tw.days = static_cast<std::uint8_t>(1 + rng() % 127);
      // Coarse hour grid makes equal coverages (ties) common.
      const int a = static_cast<int>(rng() % 24), b = static_cast<int>(rng() % 24);
      tw.start_minute = std::min(a, b) * 60;
      tw.end_minute = (std::max(a, b) + 1) * 60;
      p.windows.push_back(tw);
    }
    switch (rng() % 3) {
      case 0:
        break;
      case 1:
        p.zone = std::vector<std::string>(loc.path.begin(), loc.path.begin() + 1 + static_cast<std::ptrdiff_t>(rng() % loc.path.size()));
        break;
      default:
        p.zone = other_zone;
        break;
    }
    p.action = rng() % 4 == 0 ? DisclosureAction::Deny : DisclosureAction::Disclose;
    p.level = static_cast<int>(rng() % static_cast<std::uint64_t>(max_level + 1));
    auto candidate = out;
    candidate.push_back(p);
    try {
      validate_policy_set(candidate, mtid, h);
    } catch (const iotmp::Error&) {
      continue;
    }
    out = std::move(candidate);
    next_id += 1 + static_cast<std::int64_t>(rng() % 3);
  }
  // Shuffle so that list position never stands in for the id tie-break.
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace oracle
