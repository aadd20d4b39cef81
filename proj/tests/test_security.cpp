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
#include <thread>

#include "iotmp/security/security_module.hpp"

namespace iotmp::security {
namespace {

SecurityProfile profile_with(bool in_list, bool secure_only) {
  SecurityProfile p;
  p.mtid = Mtid("s1");
  p.owner = "ops";
  p.secure_only = secure_only;
  if (in_list) p.authorized_entities.insert("appA");
  return p;
}

// Only (in list, not secure-only, any channel) and (in list, secure-only,
// secure channel) allow.
TEST(CheckPolicy, TruthTable) {
  int allowed = 0;
  for (int bits = 0; bits < 8; ++bits) {
    const bool in_list = bits & 1, secure_only = bits & 2, channel = bits & 4;
    const auto v = check_policy(profile_with(in_list, secure_only), "appA", channel);
    const bool expected = in_list && (!secure_only || channel);
    EXPECT_EQ(v.allowed, expected) << in_list << secure_only << channel;
    allowed += v.allowed;
    if (!v.allowed) {
      // The channel gate is evaluated first.
      const auto point = secure_only && !channel ? DenialPoint::InsecureChannel : DenialPoint::RequesterNotApproved;
      EXPECT_EQ(v.denied_at, point);
    }
  }
  EXPECT_EQ(allowed, 3);  // two cells, one of which covers both channel values
}

TEST(CheckPolicy, Examples) {
  EXPECT_FALSE(check_policy(profile_with(true, true), "appA", false).allowed);
  EXPECT_FALSE(check_policy(profile_with(false, false), "appA", true).allowed);
  EXPECT_TRUE(check_policy(profile_with(true, true), "appA", true).allowed);
}

TEST(CheckPolicyProperty, PureAndMonotone) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> apps{"a", "b", "c", "d"};
  for (int i = 0; i < 2000; ++i) {
    SecurityProfile p;
    p.mtid = Mtid("s1");
    p.secure_only = rng() % 2;
    for (const auto& a : apps) {
      if (rng() % 2) p.authorized_entities.insert(a);
    }
    const auto& req = apps[rng() % apps.size()];
    const bool channel = rng() % 2;
    const bool base = check_policy(p, req, channel).allowed;
    ASSERT_EQ(check_policy(p, req, channel).allowed, base);
    auto more = p;
    more.authorized_entities.insert(apps[rng() % apps.size()]);
    if (base) ASSERT_TRUE(check_policy(more, req, channel).allowed);
    auto stricter = p;
    stricter.secure_only = true;
    if (!base) ASSERT_FALSE(check_policy(stricter, req, channel).allowed);
  }
}

TEST(Admission, Lifecycle) {
  SecurityModule sm({"root"});
  const AgentId a("agent1");
  EXPECT_EQ(sm.admission_state(a), AdmissionState::Unknown);
  EXPECT_EQ(sm.admit_agent(a).state, AdmissionState::Pending);
  try {
    sm.admit_agent(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AlreadyKnown);
  }
  const auto approved = sm.approve_agent(a, "root", 77);
  EXPECT_EQ(approved.state, AdmissionState::Approved);
  EXPECT_EQ(approved.approved_by, "root");
  EXPECT_EQ(approved.approved_at, 77);
  try {
    sm.approve_agent(a, "root", 78);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPending);
  }
  EXPECT_EQ(sm.revoke_agent(a, "root", 79).state, AdmissionState::Revoked);
  EXPECT_FALSE(sm.is_approved(a));
  // Revoked is terminal.
  EXPECT_THROW(sm.approve_agent(a, "root", 80), Error);
  EXPECT_THROW(sm.revoke_agent(a, "root", 80), Error);
  // Pending may be revoked directly.
  sm.admit_agent(AgentId("agent2"));
  EXPECT_EQ(sm.revoke_agent(AgentId("agent2"), "root", 1).state, AdmissionState::Revoked);
  EXPECT_THROW(sm.approve_agent(AgentId("ghost"), "root", 1), Error);
}

TEST(Admission, ConcurrentApprovalHasOneTransition) {
  for (int round = 0; round < 50; ++round) {
    SecurityModule sm;
    const AgentId a("agent1");
    sm.admit_agent(a);
    std::atomic<int> ok{0}, not_pending{0};
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t) {
      ts.emplace_back([&] {
        try {
          sm.approve_agent(a, "root", 1);
          ++ok;
        } catch (const Error& e) {
          if (e.code() == Errc::NotPending) ++not_pending;
        }
      });
    }
    for (auto& t : ts) t.join();
    ASSERT_EQ(ok.load(), 1);
    ASSERT_EQ(not_pending.load(), 3);
  }
}

TEST(Profiles, EditByOwnerOrAdmin) {
  SecurityModule sm({"root"});
  sm.create_profile(profile_with(false, false));
  sm.edit_profile(Mtid("s1"), ProfileChange::add("appA"), "ops");
  EXPECT_TRUE(sm.check_policy("appA", Mtid("s1"), true));
  sm.edit_profile(Mtid("s1"), ProfileChange::remove("appA"), "root");
  EXPECT_FALSE(sm.check_policy("appA", Mtid("s1"), true));
  try {
    sm.edit_profile(Mtid("s1"), ProfileChange::add("appA"), "mallory");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotOwner);
  }
  try {
    sm.edit_profile(Mtid("s2"), ProfileChange::add("appA"), "ops");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownMT);
  }
  EXPECT_THROW(sm.check_policy("appA", Mtid("s2"), true), Error);
}

TEST(Profiles, DenialsAreAuditedWithDecisionPoint) {
  SecurityModule sm;
  sm.create_profile(profile_with(true, true));
  sm.check("appA", Mtid("s1"), false);
  sm.check("appB", Mtid("s1"), true);
  sm.check("appA", Mtid("s1"), true);
  const auto log = sm.audit_log();
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].denied_at, DenialPoint::InsecureChannel);
  EXPECT_EQ(log[1].denied_at, DenialPoint::RequesterNotApproved);
}

// Readers racing an editor see either the old or the new profile.
TEST(Profiles, ConcurrentReadsSeeWholeEdits) {
  SecurityModule sm;
  auto p = profile_with(false, false);
  sm.create_profile(p);
  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};
  std::thread reader([&] {
    while (!stop) {
      auto got = sm.profile(Mtid("s1"));
      const bool a = got->authorized_entities.count("x") != 0, b = got->authorized_entities.count("y") != 0;
      if (a != b || a != got->secure_only) ++torn;
    }
  });
  for (int i = 0; i < 2000; ++i) {
    const bool on = i % 2 == 0;
    sm.replace_profile(Mtid("s1"), on ? std::set<std::string>{"x", "y"} : std::set<std::string>{}, on, "ops");
  }
  stop = true;
  reader.join();
  EXPECT_EQ(torn.load(), 0);
}

TEST(Profiles, JsonPersistenceRoundtrip) {
  SecurityModule sm({"root"});
  sm.create_profile(profile_with(true, true));
  sm.admit_agent(AgentId("a1"));
  sm.approve_agent(AgentId("a1"), "root", 5);
  SecurityModule copy({"root"});
  copy.load_json(sm.to_json());
  EXPECT_EQ(copy.profile(Mtid("s1")), sm.profile(Mtid("s1")));
  EXPECT_EQ(copy.admission(AgentId("a1")), sm.admission(AgentId("a1")));
}

}  // namespace
}  // namespace iotmp::security
