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

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "iotmp/agent/agent.hpp"
#include "iotmp/api/management_api.hpp"
#include "iotmp/live/live.hpp"
#include "iotmp/manager/manager.hpp"
#include "iotmp/moms/moms.hpp"

namespace iotmp {
namespace {

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

template <typename Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = std::chrono::seconds(10)) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return pred();
}

// A manager, its API on real TLS and plaintext sockets, a MoMs and one agent
// speaking TCP frames, all on loopback.
class LiveStack : public ::testing::Test {
 protected:
  void SetUp() override {
    executor_.start();
    identity_ = live::make_self_signed("localhost");

    live::HttpServerHost::Options any{"127.0.0.1", -1, -1, 10'000};
    moms_host_ = std::make_unique<live::HttpServerHost>(
        executor_, [this](const net::HttpRequest& r, net::HttpReply reply) { moms_->handle(r, std::move(reply)); }, any,
        identity_);
    api_host_ = std::make_unique<live::HttpServerHost>(
        executor_, [this](const net::HttpRequest& r, net::HttpReply reply) { api_->handle(r, std::move(reply)); }, any,
        identity_);
    moms_host_->start();
    api_host_->start();

    agent_port_ = "127.0.0.1:" + std::to_string(free_port());
    hierarchy_ = std::make_shared<privacy::GeoHierarchy>(privacy::GeoHierarchy::bundled());
    manager::ManagerConfig mc;
    mc.managerid = ManagerId("m1");
    mc.agent_address = agent_port_;
    mc.api_address = tls(*api_host_);
    mc.moms_address = tls(*moms_host_);
    mc.moms_key = "k1";
    mc.admins = {"ops"};
    mc.allowlist = {"live-1"};
    mc.publish_period_ms = 500;
    moms::MomsConfig cfg;
    cfg.manager_keys = {{"m1", "k1"}};
    cfg.publish_period_ms = 500;
    executor_.run_sync([&] {
      moms_ = std::make_unique<moms::Moms>(cfg, executor_, http_);
      manager_ = std::make_unique<manager::Manager>(mc, executor_, transport_, &http_, hierarchy_);
      api_ = std::make_unique<api::ManagementApi>(*manager_, api::ApiConfig{"live-test-server-secret", 3'600'000, false, {}},
                                                  random_);
      manager_->start();
    });

    agent::AgentConfig ac;
    ac.address = "agent-live-1";
    ac.manager_address = agent_port_;
    ac.descriptor = validate_descriptor(
        {{"ID", std::string("live-1"), {}}, {"FixedLocation", hierarchy_->location_of(hierarchy_->leaves()[0]), {}}});
    ac.profile = agent::builtin_profile("thermometer");
    ac.behavioural_config = {"Temperature"};
    ac.update_period_ms = 200;
    executor_.run_sync([&] {
      agent_ = std::make_unique<agent::Agent>(ac, executor_, transport_);
      agent_->start();
    });
    ASSERT_TRUE(eventually([&] {
      bool ok = false;
      executor_.run_sync([&] { ok = manager_->reading_count() >= 2; });
      return ok;
    }));

    ops_ = enroll("ops", "management_app");
    weather_ = enroll("weatherApp", "iot_app");
  }

  void TearDown() override {
    api_host_->stop();
    moms_host_->stop();
    executor_.run_sync([&] {
      agent_.reset();
      api_.reset();
      manager_.reset();
      moms_.reset();
    });
    executor_.stop();
  }

  static std::string tls(const live::HttpServerHost& h) { return "127.0.0.1:" + std::to_string(h.tls_port()); }
  static std::string plain(const live::HttpServerHost& h) { return "127.0.0.1:" + std::to_string(h.plain_port()); }

  static net::HttpResponse fetch(const std::string& address, bool secure, const std::string& method,
                                 const std::string& target, const std::string& token = {}, const Json& body = nullptr) {
    net::HttpRequest req;
    req.method = method;
    req.target = target;
    req.secure = secure;
    if (!token.empty()) req.headers["authorization"] = "Bearer " + token;
    if (!body.is_null()) {
      req.headers["content-type"] = "application/json";
      req.body = body.dump();
    }
    auto r = live::LiveHttpClient::fetch(address, req, 10'000);
    if (!r) throw Error(Errc::ManagerUnreachable, address);
    return *r;
  }

  std::string enroll(const std::string& appid, const std::string& role) {
    auto r = fetch(tls(*api_host_), true, "POST", "/apps", {}, Json{{"appid", appid}, {"role", role}});
    EXPECT_EQ(r.status, 201) << r.body;
    const auto secret = Json::parse(r.body)["secret"].get<std::string>();
    r = fetch(tls(*api_host_), true, "POST", "/tokens", {}, Json{{"appid", appid}, {"secret", secret}});
    EXPECT_EQ(r.status, 200) << r.body;
    return Json::parse(r.body)["token"].get<std::string>();
  }

  live::AsioExecutor executor_;
  live::TcpFrameTransport transport_{executor_};
  live::LiveHttpClient http_{executor_};
  crypto::SeededRandom random_{3};
  live::TlsIdentity identity_;
  std::shared_ptr<privacy::GeoHierarchy> hierarchy_;
  std::string agent_port_;
  std::unique_ptr<live::HttpServerHost> moms_host_, api_host_;
  std::unique_ptr<moms::Moms> moms_;
  std::unique_ptr<manager::Manager> manager_;
  std::unique_ptr<api::ManagementApi> api_;
  std::unique_ptr<agent::Agent> agent_;
  std::string ops_, weather_;
};

TEST_F(LiveStack, AgentRegistersOverTcp) {
  executor_.run_sync([&] {
    EXPECT_EQ(agent_->phase(), agent::Phase::Registered);
    EXPECT_EQ(manager_->record_count(), 1u);
  });
}

TEST_F(LiveStack, TruthTableOverRealListeners) {
  for (int cell = 0; cell < 8; ++cell) {
    const bool listed = cell & 1, secure_only = cell & 2, over_tls = cell & 4;
    const Json entities = listed ? Json::array({"weatherApp"}) : Json::array();
    ASSERT_EQ(fetch(tls(*api_host_), true, "PUT", "/profiles/live-1", ops_,
                    Json{{"authorized_entities", entities}, {"secure_only", secure_only}})
                  .status,
              200);
    const auto addr = over_tls ? tls(*api_host_) : plain(*api_host_);
    const auto r = fetch(addr, over_tls, "GET", "/mt/live-1/Temperature", weather_);
    EXPECT_EQ(r.status, listed && (over_tls || !secure_only) ? 200 : 403) << "cell " << cell << ": " << r.body;
  }
}

TEST_F(LiveStack, RoutedThroughMomsOverTls) {
  ASSERT_EQ(fetch(tls(*api_host_), true, "PUT", "/profiles/live-1", ops_, Json{{"add", "weatherApp"}}).status, 200);
  ASSERT_TRUE(eventually([&] {
    return fetch(tls(*moms_host_), true, "GET", "/mt/live-1/Temperature", weather_).status == 200;
  }));
  const auto r = fetch(tls(*moms_host_), true, "GET", "/mt/live-1/Temperature", weather_);
  EXPECT_TRUE(Json::parse(r.body)["latest"].is_object()) << r.body;
  EXPECT_EQ(fetch(tls(*moms_host_), true, "GET", "/mt/ghost/Temperature", weather_).status, 404);
}

TEST_F(LiveStack, PlaintextMomsHopCannotReachSecureOnlyThing) {
  ASSERT_EQ(fetch(tls(*api_host_), true, "PUT", "/profiles/live-1", ops_,
                  Json{{"authorized_entities", {"weatherApp"}}, {"secure_only", true}})
                .status,
            200);
  ASSERT_TRUE(eventually([&] {
    return fetch(tls(*moms_host_), true, "GET", "/mt/live-1/Temperature", weather_).status == 200;
  }));
  EXPECT_EQ(fetch(plain(*moms_host_), false, "GET", "/mt/live-1/Temperature", weather_).status, 403);
}

TEST_F(LiveStack, LiveGetAsksTheDevice) {
  ASSERT_EQ(fetch(tls(*api_host_), true, "PUT", "/profiles/live-1", ops_, Json{{"add", "weatherApp"}}).status, 200);
  const auto r = fetch(tls(*api_host_), true, "GET", "/mt/live-1/Temperature?live=1", weather_);
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(Json::parse(r.body)["live"], true);
}

TEST(LiveTransport, FramesRoundTripOverTcp) {
  live::AsioExecutor ex;
  ex.start();
  {
    live::TcpFrameTransport t(ex);
    const auto server = "127.0.0.1:" + std::to_string(free_port());
    std::mutex mu;
    std::vector<ProtocolMessage> at_server, at_client;
    t.bind(server, net::FrameHandler{[&](const std::string& from, std::vector<std::uint8_t> f) {
                                       auto m = decode_message(f);
                                       {
                                         std::lock_guard lock(mu);
                                         at_server.push_back(m);
                                       }
                                       m.kind = MessageKind::Ack;
                                       m.sender = "srv";
                                       m.body = {{"$re", static_cast<double>(m.seq), {}, {}}};
                                       t.send(server, from, encode_message(m));
                                     },
                                     {}});
    t.bind("client", net::FrameHandler{[&](const std::string&, std::vector<std::uint8_t> f) {
                                         std::lock_guard lock(mu);
                                         at_client.push_back(decode_message(f));
                                       },
                                       {}});
    for (std::uint64_t i = 1; i <= 50; ++i) {
      ProtocolMessage m{MessageKind::Update, i, "client", Mtid("x"), {{"Temperature", 20.0 + i, std::string("C"), {}}}};
      ex.run_sync([&] { EXPECT_TRUE(t.send("client", server, encode_message(m))); });
    }
    EXPECT_TRUE(eventually([&] {
      std::lock_guard lock(mu);
      return at_client.size() == 50;
    }));
    std::lock_guard lock(mu);
    for (std::size_t i = 0; i < at_server.size(); ++i) EXPECT_EQ(at_server[i].seq, i + 1);  // order preserved
    EXPECT_EQ(at_client.size(), 50u);
    t.unbind("client");
    t.unbind(server);
  }
  ex.stop();
}

TEST(LiveTransport, BindFailureIsReported) {
  live::AsioExecutor ex;
  ex.start();
  {
    live::TcpFrameTransport t(ex);
    const auto addr = "127.0.0.1:" + std::to_string(free_port());
    t.bind(addr, net::FrameHandler{});
    try {
      t.bind(addr, net::FrameHandler{});
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::BindFailure);
    }
  }
  ex.stop();
}

TEST(LiveHttp, UnreachableIsNullopt) {
  net::HttpRequest req;
  req.method = "GET";
  req.target = "/health";
  EXPECT_FALSE(live::LiveHttpClient::fetch("127.0.0.1:" + std::to_string(free_port()), req, 1000));
  std::string host;
  int port = 0;
  EXPECT_TRUE(live::split_host_port("a.b:80", host, port));
  EXPECT_EQ(port, 80);
  EXPECT_FALSE(live::split_host_port("nohost", host, port));
  EXPECT_FALSE(live::split_host_port("h:99999", host, port));
}

}  // namespace
}  // namespace iotmp
