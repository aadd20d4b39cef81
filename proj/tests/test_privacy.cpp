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

#include <gtest/gtest.h>

#include <random>

#include "iotmp/privacy/policy.hpp"
#include "support/policy_gen.hpp"
#include "support/policy_oracle.hpp"

namespace iotmp::privacy {
namespace {

// 2024-01-01T00:00:00Z, a Monday.
constexpr TimeMs kMonday = 1'704'067'200'000;
constexpr TimeMs kMinute = 60'000;
constexpr TimeMs kDay = 86'400'000;

GeoHierarchy street_world() {
  auto node = [](const std::string& name, double lat, double lon, Json children = Json::array()) {
    Json j{{"name", name}, {"lat", lat}, {"lon", lon}};
    if (!children.empty()) j["children"] = children;
    return j;
  };
  return GeoHierarchy::from_json(
      node("AU", -25, 134,
           {node("NSW", -32, 147,
                 {node("Sydney", -33.87, 151.2,
                       {node("Parramatta", -33.81, 151.0,
                             {node("StreetX", -33.815, 151.003, {node("Bldg7", -33.8151, 151.0031)})})})})}));
}

SemanticLocation random_point_in(const GeoHierarchy& h, GeoHierarchy::NodeId leaf, std::mt19937_64& rng) {
  auto loc = h.location_of(leaf);
  const auto& b = *h.region(leaf).bounds;
  std::uniform_real_distribution<double> lat(b.min_lat, b.max_lat), lon(b.min_lon, b.max_lon);
  loc.lat = lat(rng);
  loc.lon = lon(rng);
  return loc;
}

TEST(Geo, BundledWorld) {
  const auto h = GeoHierarchy::bundled();
  EXPECT_EQ(h.size(), 3u + 12u + 36u);
  EXPECT_EQ(h.max_depth(), 3u);
  EXPECT_EQ(h.leaves().size(), 36u);
  // Every representative point lies inside each ancestor's bounds.
  for (GeoHierarchy::NodeId id = 0; id < h.size(); ++id) {
    const auto& r = h.region(id);
    for (auto p = r.parent; p; p = h.region(*p).parent) {
      EXPECT_TRUE(h.region(*p).bounds->contains(r.lat, r.lon)) << r.name;
    }
  }
  // Serialisation roundtrips.
  const auto again = GeoHierarchy::from_json(h.to_json());
  EXPECT_EQ(again.to_json(), h.to_json());
}

TEST(Geo, FromJsonRejectsBadInput) {
  const Json dup = Json::parse(R"({"name":"A","lat":0,"lon":0,"children":[{"name":"B","lat":0,"lon":0},{"name":"B","lat":0,"lon":0}]})");
  EXPECT_THROW(GeoHierarchy::from_json(dup), Error);
  const Json escape = Json::parse(
      R"({"name":"A","lat":0,"lon":0,"bounds":[-1,-1,1,1],"children":[{"name":"B","lat":5,"lon":5}]})");
  EXPECT_THROW(GeoHierarchy::from_json(escape), Error);
  EXPECT_THROW(GeoHierarchy::from_json(Json::array()), Error);
}

TEST(Geo, ValidateLocation) {
  const auto h = GeoHierarchy::bundled();
  auto loc = h.location_of(h.leaves()[0]);
  EXPECT_NO_THROW(h.validate(loc));
  auto far = loc;
  far.lat = 89;
  try {
    h.validate(far);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidLocation);
  }
  auto nowhere = loc;
  nowhere.path.back() = "Atlantis";
  try {
    h.validate(nowhere);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PathNotInHierarchy);
  }
}

TEST(Obfuscate, Examples) {
  const auto h = street_world();
  const auto leaf = h.location_of(*h.resolve({"AU", "NSW", "Sydney", "Parramatta", "StreetX", "Bldg7"}));
  EXPECT_EQ(obfuscate(leaf, 0, h), leaf);
  EXPECT_EQ(obfuscate(leaf, 2, h).path, (std::vector<std::string>{"AU", "NSW", "Sydney", "Parramatta"}));
  EXPECT_EQ(obfuscate(leaf, 2, h), h.location_of(*h.resolve({"AU", "NSW", "Sydney", "Parramatta"})));
  EXPECT_EQ(obfuscate(leaf, 5, h).path, std::vector<std::string>{"AU"});
  EXPECT_EQ(obfuscate(leaf, 3, h).path.size(), leaf.path.size() - 3);
}

TEST(Obfuscate, Errors) {
  const auto h = street_world();
  const auto leaf = h.location_of(*h.resolve({"AU", "NSW", "Sydney"}));
  for (int bad : {-1, 3, 9}) {
    try {
      obfuscate(leaf, bad, h);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::LevelOutOfRange);
    }
  }
  SemanticLocation stray{{"AU", "VIC"}, 0, 0};
  try {
    obfuscate(stray, 0, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PathNotInHierarchy);
  }
}

// Identity at level 0, prefix-monotone in the level, and the true point
// always inside the disclosed region.
TEST(ObfuscateProperty, IdentityMonotoneContainment) {
  const auto h = GeoHierarchy::synthetic(6, 3);
  const auto leaves = h.leaves();
  std::mt19937_64 rng(17);
  for (int i = 0; i < 3000; ++i) {
    const auto loc = random_point_in(h, leaves[rng() % leaves.size()], rng);
    const int k1 = static_cast<int>(rng() % 6), k2 = static_cast<int>(rng() % 6);
    const auto a = obfuscate(loc, std::min(k1, k2), h), b = obfuscate(loc, std::max(k1, k2), h);
    ASSERT_EQ(obfuscate(loc, 0, h), loc);
    ASSERT_TRUE(is_path_prefix(b.path, a.path));
    ASSERT_TRUE(is_path_prefix(a.path, loc.path));
    ASSERT_EQ(a.path.size(), loc.path.size() - static_cast<std::size_t>(std::min(k1, k2)));
    ASSERT_TRUE(h.region(*h.resolve(b.path)).bounds->contains(loc.lat, loc.lon));
  }
}

DisclosurePolicy policy(std::int64_t id, std::string requester, DisclosureAction action, int level = 0,
                        std::vector<TimeWindow> windows = {}) {
  DisclosurePolicy p;
  p.id = id;
  p.mtid = Mtid("s1");
  p.requester = std::move(requester);
  p.action = action;
  p.level = level;
  p.windows = std::move(windows);
  return p;
}

RequestContext ctx_at(TimeMs t, std::string app = "appA") {
  return RequestContext{AppId(std::move(app)), Mtid("s1"), t, GeoHierarchy::bundled().location_of(50)};
}

TEST(Match, ExactBeatsWildcard) {
  std::vector<DisclosurePolicy> ps{policy(1, "*", DisclosureAction::Disclose, 2),
                                   policy(2, "appA", DisclosureAction::Disclose, 1)};
  EXPECT_EQ(match_policy(ctx_at(kMonday), ps)->id, 2);
  EXPECT_EQ(match_policy(ctx_at(kMonday, "appB"), ps)->id, 1);
}

TEST(Match, NarrowerWindowWins) {
  std::vector<DisclosurePolicy> ps{policy(1, "appA", DisclosureAction::Disclose, 2),
                                   policy(2, "appA", DisclosureAction::Deny, 0, {TimeWindow{0x1f, 9 * 60, 17 * 60}})};
  EXPECT_EQ(match_policy(ctx_at(kMonday + 10 * 60 * kMinute), ps)->id, 2);
  EXPECT_EQ(match_policy(ctx_at(kMonday + 8 * 60 * kMinute), ps)->id, 1);
}

TEST(Match, NoWindowCoversTime) {
  std::vector<DisclosurePolicy> ps{policy(1, "appA", DisclosureAction::Disclose, 0, {TimeWindow{0x01, 0, 60}})};
  EXPECT_FALSE(match_policy(ctx_at(kMonday + 2 * kDay), ps));
  EXPECT_EQ(evaluate(ctx_at(kMonday + 2 * kDay), ps).action, DisclosureAction::Deny);
}

TEST(Match, ZoneMustContainLocation) {
  auto p = policy(1, "*", DisclosureAction::Disclose);
  const auto ctx = ctx_at(kMonday);
  p.zone = std::vector<std::string>{ctx.mt_location.path.front()};
  EXPECT_TRUE(policy_applies(p, ctx));
  p.zone = std::vector<std::string>{"Elsewhere"};
  EXPECT_FALSE(policy_applies(p, ctx));
}

TEST(Evaluate, EmptySetDeniesEverywhere) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto d = evaluate(ctx_at(static_cast<TimeMs>(rng() % (100 * 365 * kDay))), {});
    ASSERT_EQ(d.action, DisclosureAction::Deny);
    ASSERT_FALSE(d.policy_id);
  }
}

TEST(Evaluate, DecisionFlipsExactlyAtWindowBoundary) {
  // Deny during weekday business hours, Disclose(0) otherwise.
  std::vector<DisclosurePolicy> ps{policy(1, "appA", DisclosureAction::Disclose, 0),
                                   policy(2, "appA", DisclosureAction::Deny, 0, {TimeWindow{0x1f, 9 * 60, 17 * 60}})};
  // Sweep a full week at one-minute resolution and check every change point.
  std::vector<TimeMs> flips;
  bool prev = evaluate(ctx_at(kMonday - kMinute), ps).disclose();
  for (TimeMs t = kMonday; t < kMonday + 7 * kDay; t += kMinute) {
    const bool now = evaluate(ctx_at(t), ps).disclose();
    if (now != prev) flips.push_back(t);
    prev = now;
    // One millisecond before a minute boundary belongs to the previous minute.
    ASSERT_EQ(evaluate(ctx_at(t + kMinute - 1), ps).disclose(), now);
  }
  std::vector<TimeMs> expected;
  for (int d = 0; d < 5; ++d) {
    expected.push_back(kMonday + d * kDay + 9 * 60 * kMinute);
    expected.push_back(kMonday + d * kDay + 17 * 60 * kMinute);
  }
  EXPECT_EQ(flips, expected);
}

TEST(Evaluate, WeekdayArithmeticAgreesWithChrono) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5000; ++i) {
    const TimeMs t = static_cast<TimeMs>(rng() % (200LL * 365 * kDay)) - 50LL * 365 * kDay;
    TimeWindow w{static_cast<std::uint8_t>(1 + rng() % 127), static_cast<int>(rng() % 1440), 0};
    w.end_minute = w.start_minute + 1 + static_cast<int>(rng() % (1440 - w.start_minute));
    ASSERT_EQ(w.contains(t), oracle::window_holds(w, t)) << t;
  }
}

// The function's pick equals brute-force enumeration ordered by the rule.
TEST(MatchProperty, AgreesWithBruteForce) {
  const auto h = GeoHierarchy::synthetic(4, 3);
  const auto leaves = h.leaves();
  std::mt19937_64 rng(123);
  const std::vector<std::string> requesters{"*", "appA", "appB"};
  std::size_t ties = 0, matched = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto loc = h.location_of(leaves[rng() % leaves.size()]);
    const auto other = h.path_of(leaves[rng() % leaves.size()]);
    const auto ps = oracle::random_policy_set(rng, Mtid("s1"), loc, other, requesters, h, 8);
    RequestContext ctx{AppId(rng() % 2 ? "appA" : "appC"), Mtid("s1"),
                       kMonday + static_cast<TimeMs>(rng() % (7 * kDay)), loc};
    const auto got = match_policy(ctx, ps);
    const auto want = oracle::expected_match(ctx, ps);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (!got) continue;
    ++matched;
    ASSERT_EQ(got->id, want->id);
    std::size_t same_rank = 0;
    for (const auto& p : ps) {
      if (oracle::applies(p, ctx) && p.exact_requester() == want->exact_requester() &&
          oracle::weekly_coverage(p) == oracle::weekly_coverage(*want)) {
        ++same_rank;
      }
    }
    if (same_rank > 1) ++ties;
  }
  EXPECT_GT(matched, 1000u);
  EXPECT_GT(ties, 50u);  // the lowest-id tie-break was exercised
}

TEST(PolicySet, Validation) {
  const auto h = GeoHierarchy::bundled();
  const Mtid s1("s1");
  auto expect_code = [&](std::vector<DisclosurePolicy> ps, Errc code) {
    try {
      validate_policy_set(ps, s1, h);
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code);
    }
  };
  expect_code({policy(1, "*", DisclosureAction::Disclose, 3)}, Errc::InvalidPolicy);  // level beyond depth - 1
  expect_code({policy(1, "*", DisclosureAction::Disclose), policy(1, "a", DisclosureAction::Deny)}, Errc::DuplicatePolicy);
  expect_code({policy(1, "*", DisclosureAction::Disclose), policy(2, "*", DisclosureAction::Deny)}, Errc::DuplicatePolicy);
  expect_code({policy(1, "*", DisclosureAction::Disclose, 0, {TimeWindow{0x01, 600, 600}})}, Errc::InvalidPolicy);
  auto zoned = policy(1, "*", DisclosureAction::Disclose);
  zoned.zone = std::vector<std::string>{"Nowhere"};
  expect_code({zoned}, Errc::InvalidPolicy);
  EXPECT_NO_THROW(validate_policy_set(std::vector<DisclosurePolicy>{policy(1, "*", DisclosureAction::Disclose, 2),
                                                                    policy(2, "a", DisclosureAction::Deny)},
                                      s1, h));
}

TEST(PolicySet, JsonRoundtrip) {
  const auto j = Json::parse(R"({"id":4,"mtid":"s1","requester":"appA",
      "windows":[{"days":["Mon","Fri"],"start":"09:00","end":"17:30"}],
      "zone":["Borealis"],"action":"disclose","level":1})");
  const auto p = policy_from_json(j);
  EXPECT_EQ(p.windows.at(0), (TimeWindow{0x11, 540, 1050}));
  EXPECT_EQ(policy_from_json(to_json(p)), p);
  EXPECT_THROW(policy_from_json(Json::parse(R"({"id":1,"mtid":"s1","action":"maybe"})")), Error);
  EXPECT_THROW(policy_from_json(Json::parse(R"({"id":1,"mtid":"s1","action":"deny","windows":[{"start":"25:00"}]})")), Error);
}

TEST(Disclose, ComposesDecisionAndObfuscation) {
  const auto h = street_world();
  const auto leaf = h.location_of(*h.resolve({"AU", "NSW", "Sydney", "Parramatta", "StreetX", "Bldg7"}));
  RequestContext ctx{AppId("appA"), Mtid("s1"), kMonday, leaf};
  EXPECT_EQ(disclose_location(ctx, std::vector{policy(1, "*", DisclosureAction::Disclose, 0)}, h), leaf);
  EXPECT_EQ(disclose_location(ctx, std::vector{policy(1, "*", DisclosureAction::Disclose, 3)}, h)->path.size(), 3u);
  EXPECT_FALSE(disclose_location(ctx, std::vector{policy(1, "*", DisclosureAction::Deny)}, h));
}

TEST(PrivacyModule, SnapshotsSurviveReplacement) {
  PrivacyModule pm(std::make_shared<GeoHierarchy>(GeoHierarchy::bundled()));
  pm.set_policies(Mtid("s1"), {policy(1, "*", DisclosureAction::Disclose, 1)});
  auto old = pm.policies(Mtid("s1"));
  pm.set_policies(Mtid("s1"), {policy(7, "*", DisclosureAction::Deny)});
  EXPECT_EQ(old->at(0).id, 1);
  EXPECT_EQ(pm.policies(Mtid("s1"))->at(0).id, 7);
  EXPECT_THROW(pm.set_policies(Mtid("s1"), {policy(1, "*", DisclosureAction::Disclose, 9)}), Error);
  EXPECT_EQ(pm.policies(Mtid("s1"))->at(0).id, 7);  // rejected edit leaves the set alone
  EXPECT_TRUE(pm.policies(Mtid("other"))->empty());
}

}  // namespace
}  // namespace iotmp::privacy
