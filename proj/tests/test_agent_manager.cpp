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

#include <cstdio>
#include <filesystem>
#include <random>

#include "iotmp/sim/sim.hpp"

namespace iotmp {
namespace {

using sim::FaultKind;
using sim::FleetSpec;
using sim::ScenarioScript;
using sim::SimWorld;

ScenarioScript world_with(const std::string& managers_json, std::uint64_t seed = 3) {
  auto j = Json::parse(R"({"duration_ms": 60000, "apps": [{"appid": "ops", "role": "management_app"}]})");
  j["seed"] = seed;
  j["managers"] = Json::parse(managers_json);
  return sim::script_from_json(j);
}

FleetSpec fleet(std::vector<std::string> managers, bool preapproved = true,
                agent::JoinMethod method = agent::JoinMethod::Direct) {
  FleetSpec f;
  f.managers = std::move(managers);
  f.preapproved = preapproved;
  f.join_method = method;
  return f;
}

// Trace events of `kind` delivered to `actor`, in time order.
std::vector<TimeMs> trace_times(sim::Trace& trace, const std::string& actor, const std::string& kind_prefix) {
  std::vector<TimeMs> out;
  for (const auto& e : trace.events()) {
    if (e.actor == actor && e.kind.rfind(kind_prefix, 0) == 0) out.push_back(e.t);
  }
  return out;
}

TEST(Backoff, DelaysStayUnderCeiling) {
  agent::Backoff b{1000, 32000};
  EXPECT_EQ(b.ceiling(0), 1000);
  EXPECT_EQ(b.ceiling(3), 8000);
  EXPECT_EQ(b.ceiling(5), 32000);
  EXPECT_EQ(b.ceiling(60), 32000);  // no overflow at large attempts
  agent::SampleRng rng(1);
  for (unsigned k = 0; k < 12; ++k) {
    TimeMs lo = b.ceiling(k), hi = 0;
    for (int i = 0; i < 500; ++i) {
      const auto d = b.delay(k, rng);
      ASSERT_GE(d, 0);
      ASSERT_LE(d, b.ceiling(k));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    EXPECT_LT(lo, b.ceiling(k) / 4);   // full jitter spreads over the range
    EXPECT_GT(hi, 3 * b.ceiling(k) / 4);
  }
}

TEST(Join, FreshAgentWaitsForApproval) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1"}, /*preapproved=*/false)).front();
  w.run_for(3000);
  EXPECT_EQ(a->phase(), agent::Phase::PendingApproval);
  auto& m = w.manager("m1");
  EXPECT_EQ(m.security().admission_state(AgentId("mt-001")), security::AdmissionState::Pending);
  EXPECT_EQ(m.reading_count(), 0u);
  EXPECT_GT(m.stats().quarantined, 0u);

  std::optional<Errc> code;
  a->send_update(BehaviouralAttribute{"Temperature", 20.0, std::string("C"), w.now()},
                 [&](Result<std::uint64_t> r) { code = r.ok() ? std::nullopt : std::optional(r.code()); });
  w.run_for(100);
  EXPECT_EQ(code, Errc::RejectedUnapproved);

  m.approve_agent(AgentId("mt-001"), "ops");
  const auto before = m.reading_count();
  w.run_for(3000);
  EXPECT_GT(m.reading_count(), before);
}

TEST(Join, RevokedAgentIsQuarantinedAgain) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(3000);
  auto& m = w.manager("m1");
  ASSERT_GT(m.reading_count(), 0u);
  m.revoke_agent(AgentId("mt-001"), "ops");
  const auto stored = m.reading_count();
  const auto quarantined = m.stats().quarantined;
  w.run_for(5000);
  EXPECT_EQ(m.reading_count(), stored);
  EXPECT_GT(m.stats().quarantined, quarantined);
}

TEST(Join, MethodTwoJoinsExactlyOne) {
  SimWorld w(world_with(R"([{"managerid": "m1"}, {"managerid": "m2"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1", "m2"}, true, agent::JoinMethod::Associate)).front();
  w.run_for(5000);
  EXPECT_EQ(a->phase(), agent::Phase::Registered);
  EXPECT_EQ(w.total_records(), 1u);
  EXPECT_EQ(w.trace().count("frame:ASSOCIATE-RESP<m1") + w.trace().count("frame:ASSOCIATE-RESP<m2"), 2u);
  EXPECT_EQ(trace_times(w.trace(), "agent-mt-001", "frame:JOIN-ACK").size(), 1u);
  // Equal load: the lower ManagerID wins, every run.
  EXPECT_EQ(a->saved_registration()->manager_address, "m1");
}

TEST(Join, MethodTwoPrefersLowerLoad) {
  SimWorld w(world_with(R"([{"managerid": "m1"}, {"managerid": "m2"}])"));
  w.spawn_fleet(2, fleet({"m1"}));
  w.run_for(2000);
  auto* a = w.spawn_fleet(1, fleet({"m1", "m2"}, true, agent::JoinMethod::Associate)).front();
  w.run_for(3000);
  EXPECT_EQ(a->saved_registration()->manager_address, "m2");
}

TEST(Join, RejectingManagerFallsThroughToNextAdvert) {
  SimWorld w(world_with(R"([{"managerid": "m1", "capacity": 0}, {"managerid": "m2"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1", "m2"}, true, agent::JoinMethod::Associate)).front();
  w.run_for(5000);
  EXPECT_EQ(a->phase(), agent::Phase::Registered);
  EXPECT_EQ(a->saved_registration()->manager_address, "m2");
  EXPECT_EQ(w.manager("m1").record_count(), 0u);
  EXPECT_EQ(w.manager("m2").record_count(), 1u);
}

TEST(Join, DuplicateMtidFromAnotherAddressIsRejected) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(2000);
  std::vector<ProtocolMessage> replies;
  w.network().bind("rogue", net::FrameHandler{[&](const std::string&, std::vector<std::uint8_t> f) {
                                               replies.push_back(decode_message(f));
                                             },
                                             {}});
  const auto loc = w.hierarchy().location_of(w.hierarchy().leaves()[0]);
  ProtocolMessage join{MessageKind::DirectJoin, 1, "rogue", Mtid("mt-001"),
                       {{"ID", std::string("mt-001"), {}, {}}, {"FixedLocation", loc, {}, {}}}};
  w.network().send("rogue", "m1", encode_message(join));
  w.run_for(100);
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].control_string(ctl::kStatus), "rejected");
  EXPECT_EQ(replies[0].control_string(ctl::kCode), "DuplicateMTID");
  EXPECT_EQ(w.total_records(), 1u);
}

TEST(Reconnect, ForgedAgentIdIsUnknownRegistration) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(2000);
  const auto before = *w.manager("m1").record(Mtid("mt-001"));
  std::vector<ProtocolMessage> replies;
  w.network().bind("rogue", net::FrameHandler{[&](const std::string&, std::vector<std::uint8_t> f) {
                                               replies.push_back(decode_message(f));
                                             },
                                             {}});
  ProtocolMessage rc{MessageKind::Reconnect, 9, "rogue", Mtid("mt-001"), {{"$agentid", std::string("forged"), {}, {}}}};
  w.network().send("rogue", "m1", encode_message(rc));
  w.run_for(100);
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].kind, MessageKind::Error);
  EXPECT_EQ(replies[0].control_string(ctl::kCode), "UnknownRegistration");
  EXPECT_EQ(w.manager("m1").record(Mtid("mt-001"))->agent_address, before.agent_address);
}

TEST(Reconnect, DisconnectKeepsOneRecordAndHonoursBackoff) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1"})).front();
  w.run_until(10'000);
  ASSERT_EQ(a->phase(), agent::Phase::Registered);
  w.inject_fault("mt-001", FaultKind::Disconnect, 5000);
  w.run_for(1);
  EXPECT_EQ(a->phase(), agent::Phase::Disconnected);
  w.run_until(15'000);
  EXPECT_EQ(w.manager("m1").record(Mtid("mt-001"))->connection, manager::Connection::Disconnected);
  w.run_until(60'000);
  EXPECT_EQ(a->phase(), agent::Phase::Registered);
  EXPECT_EQ(w.total_records(), 1u);
  EXPECT_EQ(w.manager("m1").stats().records_created, 1u);
  EXPECT_EQ(w.manager("m1").record(Mtid("mt-001"))->connection, manager::Connection::Connected);

  // The attempt that succeeded was scheduled before recovery with delay at
  // most ceiling(n - 1); add one round trip.
  const auto n = a->stats().reconnect_attempts;
  ASSERT_GE(n, 1u);
  std::vector<TimeMs> acks;
  for (auto t : trace_times(w.trace(), "agent-mt-001", "frame:JOIN-ACK")) {
    if (t >= 15'000) acks.push_back(t);
  }
  ASSERT_FALSE(acks.empty());
  EXPECT_LE(acks.front() - 15'000, a->config().backoff.ceiling(static_cast<unsigned>(n - 1)) + 2 * 5);
}

TEST(Reconnect, FiftyCyclesKeepOneRecordPerMtid) {
  SimWorld w(world_with(R"([{"managerid": "m1"}, {"managerid": "m2"}])", 11));
  w.spawn_fleet(6, fleet({"m1", "m2"}));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    w.run_for(3000);
    const auto agents = w.agents();
    w.inject_fault(agents[rng() % agents.size()]->mtid().str(), FaultKind::Disconnect, 500 + rng() % 3000);
  }
  w.run_for(60'000);
  EXPECT_EQ(w.total_records(), 6u);
  for (auto* a : w.agents()) EXPECT_EQ(a->phase(), agent::Phase::Registered);
}

TEST(Alerts, DropThirtyPercentStillStoresEachOnce) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1"})).front();
  w.run_for(2000);
  w.inject_fault("mt-001", FaultKind::DropPct, 40'000, 30);
  for (int i = 0; i < 40; ++i) {
    a->emit_alert("FireDetection", true);
    w.run_for(500);
  }
  w.run_for(60'000);
  auto& m = w.manager("m1");
  const auto alerts = m.alerts(Mtid("mt-001"));
  EXPECT_EQ(alerts.size(), 40u);
  std::set<std::uint64_t> seqs;
  for (const auto& al : alerts) seqs.insert(al.seq);
  EXPECT_EQ(seqs.size(), 40u);
  EXPECT_EQ(a->stats().alerts_acked, 40u);
  // Losses happened and were repaired by retransmission.
  EXPECT_GT(a->stats().alert_transmissions, 40u);
  EXPECT_GT(w.network().stats().frames_dropped, 0u);
}

TEST(Alerts, EdgeTriggeredRules) {
  agent::AlertRule r{"Temperature", agent::AlertRule::Comparator::Greater, 30.0};
  EXPECT_TRUE(r.matches(31.0));
  EXPECT_FALSE(r.matches(30.0));
  EXPECT_FALSE(r.matches(std::string("hot")));
  agent::AlertRule b{"Motion", agent::AlertRule::Comparator::Equal, 1.0};
  EXPECT_TRUE(b.matches(true));
}

TEST(Device, SetOnDisconnectedThingTimesOut) {
  SimWorld w(world_with(R"([{"managerid": "m1", "device_timeout_ms": 2000}])"));
  FleetSpec f = fleet({"m1"});
  f.profile = "valve";
  w.spawn_fleet(1, f);
  w.run_for(2000);
  auto& m = w.manager("m1");
  std::optional<Result<manager::SetResult>> got;
  m.actuate(Mtid("mt-001"), "Valve", "open", [&](Result<manager::SetResult> r) { got = std::move(r); });
  w.run_for(500);
  ASSERT_TRUE(got && got->ok());
  EXPECT_EQ(got->value().state, "open");
  EXPECT_EQ(w.agent("mt-001")->actuator_state("Valve"), "open");

  w.inject_fault("mt-001", FaultKind::Disconnect, 10'000);
  w.run_for(10);
  got.reset();
  const auto sent_at = w.now();
  m.actuate(Mtid("mt-001"), "Valve", "closed", [&](Result<manager::SetResult> r) { got = std::move(r); });
  w.run_for(1999);
  EXPECT_FALSE(got);
  w.run_for(1);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->code(), Errc::DeviceTimeout);
  EXPECT_EQ(w.now() - sent_at, 2000);
  EXPECT_EQ(w.agent("mt-001")->actuator_state("Valve"), "open");
}

TEST(Device, NonActuatableAttribute) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(2000);
  std::optional<Result<manager::SetResult>> got;
  w.manager("m1").actuate(Mtid("mt-001"), "Temperature", "10", [&](Result<manager::SetResult> r) { got = std::move(r); });
  w.run_for(500);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->code(), Errc::NotActuatable);
}

TEST(Device, LiveGetAndPeriodicUpdatesInterleaveInOrder) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(1500);
  auto& m = w.manager("m1");
  int live_done = 0;
  for (int i = 0; i < 20; ++i) {
    m.get_live(Mtid("mt-001"), "Temperature", [&](Result<std::vector<BehaviouralAttribute>> r) {
      ASSERT_TRUE(r.ok());
      ++live_done;
    });
    w.run_for(250 + 37 * (i % 5));
  }
  w.run_for(1000);
  EXPECT_EQ(live_done, 20);
  const auto series = m.query_mt(Mtid("mt-001"), "Temperature").readings;
  EXPECT_GE(series.size(), 20u + 5u);
  EXPECT_TRUE(std::is_sorted(series.begin(), series.end(),
                             [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
}

TEST(Manager, QueryWindowEqualsBruteForceFilter) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(30'000);
  auto& m = w.manager("m1");
  const auto all = m.query_mt(Mtid("mt-001"), "Temperature").readings;
  ASSERT_GT(all.size(), 20u);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 300; ++i) {
    TimeMs t1 = static_cast<TimeMs>(rng() % 32'000), t2 = static_cast<TimeMs>(rng() % 32'000);
    if (t1 > t2) std::swap(t1, t2);
    std::vector<BehaviouralAttribute> expected;
    for (const auto& r : all) {
      if (r.timestamp >= t1 && r.timestamp <= t2) expected.push_back(r);
    }
    ASSERT_EQ(m.query_mt(Mtid("mt-001"), "Temperature", {t1, t2}).readings, expected);
  }
  EXPECT_THROW(m.query_mt(Mtid("mt-001"), "Humidity"), Error);
  EXPECT_THROW(m.query_mt(Mtid("ghost"), "Temperature"), Error);
  // Management attributes come from the descriptor.
  EXPECT_TRUE(m.query_mt(Mtid("mt-001"), "FirmwareVersion").management);
}

TEST(Manager, UpdateCounterEqualsUpdatesSent) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  auto* a = w.spawn_fleet(1, fleet({"m1"})).front();
  w.run_for(20'500);  // mid-period, so no update is in flight
  const auto counters = w.manager("m1").counters(Mtid("mt-001"));
  EXPECT_EQ(counters.at("UPDATE"), a->stats().updates_sent);
  EXPECT_EQ(a->stats().updates_sent, a->stats().updates_acked);
  EXPECT_EQ(w.manager("m1").reading_count(), a->stats().updates_sent);
}

TEST(Manager, MobileLocationReplacesRecordLocation) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  FleetSpec f = fleet({"m1"});
  f.profile = "tracker";
  auto* a = w.spawn_fleet(1, f).front();
  w.run_for(5500);
  const auto latest = a->latest("MobileLocation");
  ASSERT_TRUE(latest);
  EXPECT_EQ(w.manager("m1").record(Mtid("mt-001"))->loc, std::get<SemanticLocation>(latest->value));
}

TEST(Manager, PublishConvergesAfterMomsOutage) {
  SimWorld w(world_with(R"([{"managerid": "m1", "publish_period_ms": 10000}])"));
  w.spawn_fleet(2, fleet({"m1"}));
  w.run_for(3000);
  ASSERT_EQ(w.moms()->lookup(Mtid("mt-001")).managerid.str(), "m1");
  w.inject_fault("moms", FaultKind::Disconnect, 20'000);
  w.spawn_fleet(2, fleet({"m1"}));
  w.run_for(15'000);
  EXPECT_THROW(w.moms()->lookup(Mtid("mt-003")), Error);
  EXPECT_GT(w.manager("m1").stats().publishes_failed, 0u);
  w.run_for(5000);  // outage over
  w.run_for(10'000);  // one publish period
  EXPECT_EQ(w.moms()->lookup(Mtid("mt-003")).managerid.str(), "m1");
  EXPECT_EQ(w.moms()->lookup(Mtid("mt-004")).managerid.str(), "m1");
}

TEST(Manager, DeleteThingRemovesEverything) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(2, fleet({"m1"}));
  w.run_for(5000);
  auto& m = w.manager("m1");
  m.delete_thing(Mtid("mt-001"));
  EXPECT_FALSE(m.record(Mtid("mt-001")));
  EXPECT_FALSE(m.security().profile(Mtid("mt-001")));
  EXPECT_TRUE(m.stored_readings(Mtid("mt-001"), "Temperature").empty());
  for (const auto& [key, _] : m.store().scan("readings")) EXPECT_EQ(key.find("mt-001"), std::string::npos) << key;
  EXPECT_TRUE(m.record(Mtid("mt-002")));
}

TEST(Manager, DeleteReadingsWindow) {
  SimWorld w(world_with(R"([{"managerid": "m1"}])"));
  w.spawn_fleet(1, fleet({"m1"}));
  w.run_for(10'000);
  auto& m = w.manager("m1");
  const auto removed = m.delete_readings(Mtid("mt-001"), "Temperature", {3000, 6000});
  EXPECT_GT(removed, 0u);
  EXPECT_TRUE(m.query_mt(Mtid("mt-001"), "Temperature", {3000, 6000}).readings.empty());
  EXPECT_FALSE(m.query_mt(Mtid("mt-001"), "Temperature", {0, 2999}).readings.empty());
}

// ---------------------------------------------------------------------------
// store

std::string temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("iotmp-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  return p.string();
}

TEST(KvStore, JournalReplay) {
  const auto path = temp_path("kv");
  Json expected;
  {
    manager::KvStore s(path);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
      const auto key = "k" + std::to_string(rng() % 60);
      if (rng() % 4 == 0) {
        s.erase("t" + std::to_string(i % 3), key);
      } else {
        s.put("t" + std::to_string(i % 3), key, Json{{"v", i}});
      }
    }
    s.erase_prefix("t1", "k1");
    expected = s.dump();
  }
  {
    manager::KvStore s(path);
    EXPECT_EQ(s.dump(), expected);
    s.compact();
  }
  manager::KvStore again(path);
  EXPECT_EQ(again.dump(), expected);
  std::filesystem::remove(path);
}

TEST(KvStore, CorruptJournalIsConfigInvalid) {
  const auto path = temp_path("corrupt");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"op\":\"put\"\n", f);
    std::fclose(f);
  }
  try {
    manager::KvStore s(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigInvalid);
  }
  std::filesystem::remove(path);
}

TEST(Manager, RestartFromStorageKeepsRecords) {
  const auto path = temp_path("manager");
  auto h = std::make_shared<privacy::GeoHierarchy>(privacy::GeoHierarchy::bundled());
  std::size_t readings = 0;
  {
    sim::SimExecutor ex;
    sim::Trace trace;
    sim::SimNetwork net(ex, trace, 1);
    manager::ManagerConfig c;
    c.managerid = ManagerId("m1");
    c.agent_address = "m1";
    c.api_address = "m1-api";
    c.allowlist = {"mt-001"};
    c.storage_path = path;
    manager::Manager m(c, ex, net, nullptr, h);
    m.start();
    agent::AgentConfig ac;
    ac.address = "agent-mt-001";
    ac.manager_address = "m1";
    ac.descriptor = validate_descriptor({{"ID", std::string("mt-001"), {}}, {"FixedLocation", h->location_of(h->leaves()[0]), {}}});
    ac.profile = agent::builtin_profile("thermometer");
    ac.behavioural_config = {"Temperature"};
    agent::Agent a(ac, ex, net);
    a.start();
    ex.run_for(5000);
    readings = m.reading_count();
    ASSERT_GT(readings, 0u);
    a.stop();
    m.stop();
  }
  sim::SimExecutor ex;
  sim::Trace trace;
  sim::SimNetwork net(ex, trace, 1);
  manager::ManagerConfig c;
  c.managerid = ManagerId("m1");
  c.agent_address = "m1";
  c.storage_path = path;
  manager::Manager m(c, ex, net, nullptr, h);
  EXPECT_EQ(m.record_count(), 1u);
  EXPECT_EQ(m.reading_count(), readings);
  EXPECT_EQ(m.record(Mtid("mt-001"))->connection, manager::Connection::Disconnected);
  EXPECT_TRUE(m.security().is_approved(AgentId("mt-001")));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace iotmp
