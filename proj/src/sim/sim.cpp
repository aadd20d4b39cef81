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

#include "iotmp/sim/sim.hpp"

#include <algorithm>
#include <cstdio>

#include "iotmp/crypto/digest.hpp"

namespace iotmp::sim {

// ---------------------------------------------------------------------------
// executor

net::TimerId SimExecutor::schedule(TimeMs delay_ms, std::function<void()> fn) {
  const Key key{now_ + std::max<TimeMs>(delay_ms, 0), next_++};
  const net::TimerId id = key.second + 1;  // 0 stays free as "no timer"
  queue_.emplace(key, std::move(fn));
  index_.emplace(id, key);
  return id;
}

void SimExecutor::cancel(net::TimerId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return;
  queue_.erase(it->second);
  index_.erase(it);
}

bool SimExecutor::step() {
  if (queue_.empty()) return false;
  auto it = queue_.begin();
  const Key key = it->first;
  auto fn = std::move(it->second);
  queue_.erase(it);
  index_.erase(key.second + 1);
  now_ = key.first;
  ++executed_;
  fn();
  return true;
}

void SimExecutor::run_until(TimeMs t) {
  while (!queue_.empty() && queue_.begin()->first.first <= t) step();
  now_ = std::max(now_, t);
}

// ---------------------------------------------------------------------------
// trace

void Trace::record(TimeMs t, std::string actor, std::string kind, std::string_view payload) {
  events_.push_back(TraceEvent{t, std::move(actor), std::move(kind), crypto::sha256_hex(payload).substr(0, 16)});
}

std::string Trace::serialize() const {
  std::string out;
  for (const auto& e : events_) {
    out += std::to_string(e.t);
    out += '|';
    out += e.actor;
    out += '|';
    out += e.kind;
    out += '|';
    out += e.digest;
    out += '\n';
  }
  return out;
}

std::string Trace::digest() const { return crypto::sha256_hex(serialize()); }

std::size_t Trace::count(std::string_view kind) const {
  return static_cast<std::size_t>(
      std::count_if(events_.begin(), events_.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::Disconnect: return "disconnect";
    case FaultKind::DropPct: return "drop_pct";
    case FaultKind::ManagerOutage: return "manager_outage";
  }
  return "?";
}

FaultKind parse_fault_kind(std::string_view text) {
  if (text == "disconnect") return FaultKind::Disconnect;
  if (text == "drop_pct") return FaultKind::DropPct;
  if (text == "manager_outage") return FaultKind::ManagerOutage;
  throw Error(Errc::ScriptInvalid, "unknown fault kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// network

namespace {

class NodeClient final : public net::HttpClient {
 public:
  NodeClient(SimNetwork& network, std::string node) : network_(network), node_(std::move(node)) {}
  void request(const std::string& address, net::HttpRequest req, TimeMs timeout_ms,
               std::function<void(std::optional<net::HttpResponse>)> done) override {
    network_.request_from(node_, address, std::move(req), timeout_ms, std::move(done));
  }

 private:
  SimNetwork& network_;
  std::string node_;
};

std::pair<std::string, std::string> link_key(const std::string& a, const std::string& b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

std::string frame_kind(const std::vector<std::uint8_t>& frame) {
  try {
    return std::string(to_string(decode_message(frame).kind));
  } catch (const Error&) {
    return "undecodable";
  }
}

}  // namespace

SimNetwork::SimNetwork(SimExecutor& executor, Trace& trace, std::uint64_t seed, TimeMs latency_ms)
    : executor_(executor), trace_(trace), rng_(seed ^ 0x6e6574776f726bULL), latency_ms_(latency_ms) {}

std::string SimNetwork::node_of(const std::string& address) const {
  auto it = node_of_.find(address);
  return it == node_of_.end() ? address : it->second;
}

bool SimNetwork::is_down(const std::string& node) const {
  auto it = down_.find(node);
  return it != down_.end() && it->second > 0;
}

bool SimNetwork::reachable(const std::string& address) const { return !is_down(node_of(address)); }

void SimNetwork::assign(const std::string& address, const std::string& node) {
  if (auto it = node_of_.find(address); it != node_of_.end()) nodes_[it->second].erase(address);
  node_of_[address] = node;
  nodes_[node].insert(address);
}

void SimNetwork::bind(const std::string& address, net::FrameHandler handler) {
  if (node_of_.count(address) == 0) assign(address, address);
  endpoints_[address] = std::move(handler);
}

void SimNetwork::unbind(const std::string& address) {
  endpoints_.erase(address);
  for (auto it = links_.begin(); it != links_.end();) {
    it = (it->first == address || it->second == address) ? links_.erase(it) : std::next(it);
  }
}

void SimNetwork::listen(const std::string& address, bool secure, net::HttpHandler handler) {
  if (node_of_.count(address) == 0) assign(address, address);
  listeners_[address] = Listener{secure, std::move(handler)};
}

bool SimNetwork::drop(const std::string& from, const std::string& to) {
  double pct = 0;
  if (auto it = drop_pct_.find(node_of(from)); it != drop_pct_.end()) pct = std::max(pct, it->second);
  if (auto it = drop_pct_.find(node_of(to)); it != drop_pct_.end()) pct = std::max(pct, it->second);
  if (pct <= 0) return false;
  return rng_.uniform01() * 100.0 < pct;
}

bool SimNetwork::send(const std::string& from, const std::string& to, std::vector<std::uint8_t> frame) {
  ++stats_.frames_sent;
  if (!reachable(from) || !reachable(to) || endpoints_.count(to) == 0) {
    ++stats_.frames_refused;
    return false;
  }
  std::string kind = frame_kind(frame);
  if (drop(from, to)) {
    ++stats_.frames_dropped;
    trace_.record(executor_.now(), to, "drop:" + kind + "<" + from,
                  std::string_view(reinterpret_cast<const char*>(frame.data()), frame.size()));
    return true;
  }
  executor_.schedule(latency_ms_, [this, from, to, kind = std::move(kind), frame = std::move(frame)]() mutable {
    auto it = endpoints_.find(to);
    if (!reachable(from) || !reachable(to) || it == endpoints_.end()) {
      ++stats_.frames_dropped;
      return;
    }
    links_.insert(link_key(from, to));
    ++stats_.frames_delivered;
    ++delivered_by_kind_[kind];
    trace_.record(executor_.now(), to, "frame:" + kind + "<" + from,
                  std::string_view(reinterpret_cast<const char*>(frame.data()), frame.size()));
    auto on_frame = it->second.on_frame;
    on_frame(from, std::move(frame));
  });
  return true;
}

void SimNetwork::set_down(const std::string& node, bool down) {
  int& depth = down_[node];
  const bool was_down = depth > 0;
  depth = std::max(0, depth + (down ? 1 : -1));
  const bool now_down = depth > 0;
  if (was_down == now_down) return;
  trace_.record(executor_.now(), node, now_down ? "node-down" : "node-up", node);
  if (!now_down) return;
  std::vector<std::pair<std::string, std::string>> broken;
  for (auto it = links_.begin(); it != links_.end();) {
    if (node_of(it->first) == node || node_of(it->second) == node) {
      broken.push_back(*it);
      it = links_.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& [a, b] : broken) {
    for (const auto& [self, peer] : {std::pair{a, b}, std::pair{b, a}}) {
      executor_.post([this, self = self, peer = peer] {
        auto it = endpoints_.find(self);
        if (it == endpoints_.end() || !it->second.on_link_down) return;
        auto handler = it->second.on_link_down;
        handler(peer);
      });
    }
  }
}

void SimNetwork::set_drop_pct(const std::string& node, double pct) {
  trace_.record(executor_.now(), node, "drop-pct", std::to_string(pct));
  if (pct <= 0) {
    drop_pct_.erase(node);
  } else {
    drop_pct_[node] = pct;
  }
}

void SimNetwork::request(const std::string& address, net::HttpRequest req, TimeMs timeout_ms,
                         std::function<void(std::optional<net::HttpResponse>)> done) {
  request_from({}, address, std::move(req), timeout_ms, std::move(done));
}

std::unique_ptr<net::HttpClient> SimNetwork::client_for(const std::string& node) {
  return std::make_unique<NodeClient>(*this, node);
}

void SimNetwork::request_from(const std::string& origin, const std::string& address, net::HttpRequest req,
                              TimeMs timeout_ms, std::function<void(std::optional<net::HttpResponse>)> done) {
  ++stats_.http_requests;
  struct State {
    bool finished = false;
    net::TimerId timer = 0;
    std::function<void(std::optional<net::HttpResponse>)> done;
  };
  auto state = std::make_shared<State>();
  state->done = std::move(done);
  state->timer = executor_.schedule(timeout_ms, [state] {
    if (state->finished) return;
    state->finished = true;
    state->done(std::nullopt);
  });
  auto origin_up = [this, origin] { return origin.empty() || !is_down(origin); };
  if (!origin_up() || !reachable(address) || listeners_.count(address) == 0) {
    ++stats_.http_unreachable;
    trace_.record(executor_.now(), address, "http-unreachable", req.method + " " + req.target);
    return;
  }
  executor_.schedule(latency_ms_, [this, state, address, origin_up, req = std::move(req)]() mutable {
    auto it = listeners_.find(address);
    if (it == listeners_.end() || !reachable(address)) return;
    req.secure = it->second.secure;
    trace_.record(executor_.now(), address, "http:" + req.method + " " + req.target, req.body);
    auto handler = it->second.handler;
    handler(req, [this, state, address, origin_up](net::HttpResponse resp) {
      executor_.schedule(latency_ms_, [this, state, address, origin_up, resp = std::move(resp)]() mutable {
        if (state->finished || !reachable(address) || !origin_up()) return;
        state->finished = true;
        executor_.cancel(state->timer);
        trace_.record(executor_.now(), address, "http-resp:" + std::to_string(resp.status), resp.body);
        state->done(std::move(resp));
      });
    });
  });
}

// ---------------------------------------------------------------------------
// script

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::ScriptInvalid, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw Error(Errc::ScriptInvalid, where + ": unknown key '" + key + "'");
    }
  }
}

FleetSpec fleet_from_json(const Json& j, const std::vector<ManagerSpec>& managers) {
  check_keys(j, {"count", "managers", "manager", "join", "profile", "prefix", "update_period_ms", "alert_rules",
                 "preapproved", "admin", "host"},
             "fleet");
  FleetSpec f;
  f.count = j.at("count").get<std::size_t>();
  if (f.count == 0) throw Error(Errc::ScriptInvalid, "fleet count must be at least 1");
  if (j.contains("manager")) f.managers.push_back(j["manager"].get<std::string>());
  if (j.contains("managers")) {
    for (const auto& m : j["managers"]) f.managers.push_back(m.get<std::string>());
  }
  if (f.managers.empty()) {
    for (const auto& m : managers) f.managers.push_back(m.config.managerid.str());
  }
  for (const auto& m : f.managers) {
    const bool known = std::any_of(managers.begin(), managers.end(),
                                   [&](const ManagerSpec& s) { return s.config.managerid.str() == m; });
    if (!known) throw Error(Errc::ScriptInvalid, "fleet names unknown manager '" + m + "'");
  }
  const auto join = get_or<std::string>(j, "join", "direct");
  if (join == "direct") {
    f.join_method = agent::JoinMethod::Direct;
  } else if (join == "associate") {
    f.join_method = agent::JoinMethod::Associate;
  } else {
    throw Error(Errc::ScriptInvalid, "join must be direct or associate");
  }
  if (j.contains("profile")) f.profile = j["profile"];
  agent::profile_from_json(f.profile);  // validate now
  f.prefix = get_or<std::string>(j, "prefix", f.prefix);
  f.update_period_ms = get_or<TimeMs>(j, "update_period_ms", f.update_period_ms);
  for (const auto& r : j.value("alert_rules", Json::array())) f.alert_rules.push_back(agent::alert_rule_from_json(r));
  f.preapproved = get_or<bool>(j, "preapproved", f.preapproved);
  if (j.contains("admin")) f.admin = j["admin"].get<std::string>();
  if (j.contains("host")) f.host = j["host"].get<std::string>();
  return f;
}

ProbeSpec probe_from_json(const Json& j) {
  check_keys(j, {"at", "name", "via", "app", "method", "path", "headers", "body", "expect"}, "probe");
  ProbeSpec p;
  p.at = j.at("at").get<TimeMs>();
  p.via = j.at("via").get<std::string>();
  p.path = j.at("path").get<std::string>();
  if (p.path.empty() || p.path[0] != '/') throw Error(Errc::ScriptInvalid, "probe path must start with '/'");
  p.name = get_or<std::string>(j, "name", p.path);
  if (j.contains("app")) p.app = j["app"].get<std::string>();
  p.method = get_or<std::string>(j, "method", p.method);
  p.headers = j.value("headers", std::map<std::string, std::string>{});
  p.body = j.value("body", Json());
  if (j.contains("expect")) {
    const auto& e = j["expect"];
    check_keys(e, {"status", "json"}, "probe expect");
    if (e.contains("status")) p.expect_status = e["status"].get<int>();
    const Json expected = e.value("json", Json::object());
    for (const auto& [ptr, value] : expected.items()) {
      Json::json_pointer{ptr};  // validate syntax
      p.expect_json[ptr] = value;
    }
  }
  return p;
}

}  // namespace

ScenarioScript script_from_json(const Json& j) {
  try {
    check_keys(j, {"seed", "start_time", "duration_ms", "latency_ms", "hierarchy", "managers", "moms", "fleets",
                   "apps", "faults", "probes"},
               "script");
    ScenarioScript s;
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    s.start_time = get_or<TimeMs>(j, "start_time", s.start_time);
    s.duration_ms = get_or<TimeMs>(j, "duration_ms", s.duration_ms);
    s.latency_ms = get_or<TimeMs>(j, "latency_ms", s.latency_ms);
    if (s.duration_ms <= 0 || s.latency_ms < 0) throw Error(Errc::ScriptInvalid, "duration and latency");
    s.hierarchy = j.value("hierarchy", Json());
    std::set<std::string> ids;
    for (const auto& m : j.at("managers")) {
      ManagerSpec spec{manager::manager_config_from_json(m)};
      if (!ids.insert(spec.config.managerid.str()).second) {
        throw Error(Errc::ScriptInvalid, "duplicate manager " + spec.config.managerid.str());
      }
      s.managers.push_back(std::move(spec));
    }
    if (s.managers.empty()) throw Error(Errc::ScriptInvalid, "at least one manager");
    s.moms = get_or<bool>(j, "moms", s.moms);
    for (const auto& f : j.value("fleets", Json::array())) s.fleets.push_back(fleet_from_json(f, s.managers));
    for (const auto& a : j.value("apps", Json::array())) {
      check_keys(a, {"appid", "role"}, "app");
      s.apps.push_back(AppSpec{a.at("appid").get<std::string>(),
                               api::parse_role(get_or<std::string>(a, "role", "iot_app"))});
    }
    for (const auto& f : j.value("faults", Json::array())) {
      check_keys(f, {"at", "target", "kind", "duration", "pct"}, "fault");
      FaultSpec spec;
      spec.at = f.at("at").get<TimeMs>();
      spec.target = f.at("target").get<std::string>();
      spec.kind = parse_fault_kind(f.at("kind").get<std::string>());
      spec.duration = f.at("duration").get<TimeMs>();
      spec.pct = get_or<double>(f, "pct", 0.0);
      if (spec.duration <= 0) throw Error(Errc::ScriptInvalid, "fault duration must be positive");
      if (spec.kind == FaultKind::DropPct && (spec.pct <= 0 || spec.pct > 100)) {
        throw Error(Errc::ScriptInvalid, "drop_pct needs pct in (0, 100]");
      }
      s.faults.push_back(std::move(spec));
    }
    for (const auto& p : j.value("probes", Json::array())) s.probes.push_back(probe_from_json(p));
    return s;
  } catch (const Error& e) {
    if (e.code() == Errc::ScriptInvalid) throw;
    throw Error(Errc::ScriptInvalid, e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::ScriptInvalid, e.what());
  }
}

// ---------------------------------------------------------------------------
// world

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::shared_ptr<const privacy::GeoHierarchy> load_hierarchy(const Json& j) {
  if (j.is_null()) return std::make_shared<privacy::GeoHierarchy>(privacy::GeoHierarchy::bundled());
  if (j.is_object() && j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    return std::make_shared<privacy::GeoHierarchy>(
        privacy::GeoHierarchy::synthetic(s.at("depth").get<std::size_t>(), s.at("fanout").get<std::size_t>()));
  }
  return std::make_shared<privacy::GeoHierarchy>(privacy::GeoHierarchy::from_json(j));
}

}  // namespace

SimWorld::SimWorld(const ScenarioScript& script)
    : executor_(script.start_time),
      network_(executor_, trace_, script.seed, script.latency_ms),
      seed_(script.seed),
      random_(mix(script.seed)) {
  try {
    hierarchy_ = load_hierarchy(script.hierarchy);
  } catch (const Error& e) {
    throw Error(Errc::ScriptInvalid, e.what());
  }
  const std::string server_secret = random_.hex(32);
  std::set<std::string> management_apps;
  for (const auto& a : script.apps) {
    if (a.role == api::Role::ManagementApp) management_apps.insert(a.appid);
  }

  std::map<std::string, std::string> keys;
  for (const auto& m : script.managers) keys[m.config.managerid.str()] = random_.hex(16);
  TimeMs publish_period = 0;
  for (const auto& m : script.managers) publish_period = std::max(publish_period, m.config.publish_period_ms);

  if (script.moms) {
    moms::MomsConfig mc;
    mc.manager_keys = keys;
    mc.publish_period_ms = publish_period;
    mc.forward_timeout_ms = 10'000;
    moms_ = std::make_unique<moms::Moms>(mc, executor_, network_);
    network_.assign(kMoms, kMoms);
    network_.assign(std::string(kMoms) + kPlainSuffix, kMoms);
    network_.listen(kMoms, true, moms_->handler());
    network_.listen(std::string(kMoms) + kPlainSuffix, false, moms_->handler());
  }

  for (const auto& spec : script.managers) {
    auto cfg = spec.config;
    const auto id = cfg.managerid.str();
    if (script.moms) {
      cfg.moms_address = kMoms;
      cfg.moms_key = keys[id];
    }
    cfg.admins.insert(management_apps.begin(), management_apps.end());
    ManagerNode node;
    node.client = network_.client_for(id);
    node.manager = std::make_unique<manager::Manager>(cfg, executor_, network_, node.client.get(), hierarchy_);
    api::ApiConfig ac;
    ac.server_secret = server_secret;
    ac.token_ttl_ms = std::max<TimeMs>(api::TokenService::kDefaultTtlMs, 2 * script.duration_ms);
    ac.what_if_time_override = true;
    node.api = std::make_unique<api::ManagementApi>(*node.manager, ac, random_);
    network_.assign(cfg.agent_address, id);
    network_.assign(cfg.api_address, id);
    network_.assign(cfg.api_address + kPlainSuffix, id);
    network_.listen(cfg.api_address, true, node.api->handler());
    network_.listen(cfg.api_address + kPlainSuffix, false, node.api->handler());
    managers_.emplace(id, std::move(node));
  }
  for (auto& [_, node] : managers_) node.manager->start();
  for (const auto& a : script.apps) register_app(a.appid, a.role);
  for (const auto& f : script.fleets) spawn_fleet(f.count, f);
}

SimWorld::~SimWorld() {
  agents_.clear();
  for (auto& [_, node] : managers_) node.manager->stop();
}

manager::Manager& SimWorld::manager(const std::string& managerid) {
  auto it = managers_.find(managerid);
  if (it == managers_.end()) throw Error(Errc::UnknownTarget, managerid);
  return *it->second.manager;
}

api::ManagementApi& SimWorld::api(const std::string& managerid) {
  auto it = managers_.find(managerid);
  if (it == managers_.end()) throw Error(Errc::UnknownTarget, managerid);
  return *it->second.api;
}

std::vector<std::string> SimWorld::manager_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : managers_) out.push_back(id);
  return out;
}

agent::Agent* SimWorld::agent(const std::string& mtid) {
  auto it = agents_.find(mtid);
  return it == agents_.end() ? nullptr : it->second.get();
}

std::vector<agent::Agent*> SimWorld::agents() {
  std::vector<agent::Agent*> out;
  for (auto& [_, a] : agents_) out.push_back(a.get());
  return out;
}

std::size_t SimWorld::total_records() const {
  std::size_t n = 0;
  for (const auto& [_, node] : managers_) n += node.manager->record_count();
  return n;
}

std::vector<agent::Agent*> SimWorld::spawn_fleet(std::size_t n, const FleetSpec& spec) {
  if (n == 0) throw Error(Errc::PreconditionFailed, "fleet size must be at least 1");
  if (spec.managers.empty()) throw Error(Errc::PreconditionFailed, "fleet needs at least one manager");
  std::vector<std::string> agent_addresses;
  for (const auto& m : spec.managers) agent_addresses.push_back(manager(m).config().agent_address);
  const auto profile = agent::profile_from_json(spec.profile);
  const auto leaves = hierarchy_->leaves();

  std::vector<agent::Agent*> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t index = ++prefix_counter_[spec.prefix];
    char suffix[24];
    std::snprintf(suffix, sizeof suffix, "-%03zu", index);
    const std::string mtid = spec.prefix + suffix;
    if (agents_.count(mtid) != 0) throw Error(Errc::PreconditionFailed, "MTID " + mtid + " already spawned");

    std::vector<ManagementAttribute> attrs{
        {std::string(attr::kId), mtid, std::nullopt},
        {std::string(attr::kName), "Simulated " + profile.name + " " + mtid, std::nullopt},
        {std::string(attr::kType), profile.name, std::nullopt},
        {std::string(attr::kFirmwareVersion), std::string("1.0.0"), std::nullopt},
        {std::string(attr::kBatteryLife), 100.0, std::string("%")},
        {std::string(attr::kFixedLocation), hierarchy_->location_of(leaves[leaf_cursor_++ % leaves.size()]),
         std::nullopt},
    };
    if (spec.admin) attrs.push_back({std::string(attr::kAdmin), *spec.admin, std::nullopt});

    agent::AgentConfig c;
    c.address = "agent-" + mtid;
    c.join_method = spec.join_method;
    c.manager_address = agent_addresses[fleet_counter_ % agent_addresses.size()];
    c.discovery = agent_addresses;
    c.descriptor = validate_descriptor(std::move(attrs));
    c.host = spec.host;
    c.profile = profile;
    for (const auto& s : profile.sensors) c.behavioural_config.push_back(s.attribute);
    c.alert_rules = spec.alert_rules;
    c.update_period_ms = spec.update_period_ms;
    c.seed = mix(seed_ ^ mix(fleet_counter_ + 1));
    ++fleet_counter_;

    const std::string agentid = spec.host ? *spec.host + "_" + mtid : mtid;
    if (spec.preapproved) {
      for (auto& [_, node] : managers_) node.manager->allow_agent(agentid);
    }
    network_.assign(c.address, mtid);
    auto a = std::make_unique<agent::Agent>(std::move(c), executor_, network_);
    a->start();
    out.push_back(a.get());
    agents_.emplace(mtid, std::move(a));
  }
  return out;
}

void SimWorld::inject_fault(const std::string& target, FaultKind kind, TimeMs duration, double pct) {
  const bool is_manager = managers_.count(target) != 0;
  const bool is_agent = agents_.count(target) != 0;
  const bool is_moms = moms_ && target == kMoms;
  if (!is_manager && !is_agent && !is_moms) throw Error(Errc::UnknownTarget, target);
  if (kind == FaultKind::ManagerOutage && !is_manager) throw Error(Errc::UnknownTarget, target + " is not a manager");
  if (duration <= 0) throw Error(Errc::PreconditionFailed, "fault duration must be positive");
  trace_.record(executor_.now(), target, "fault:" + std::string(to_string(kind)), std::to_string(duration));
  if (kind == FaultKind::DropPct) {
    network_.set_drop_pct(target, pct);
    executor_.schedule(duration, [this, target] { network_.set_drop_pct(target, 0); });
    return;
  }
  network_.set_down(target, true);
  executor_.schedule(duration, [this, target] { network_.set_down(target, false); });
}

std::string SimWorld::register_app(const std::string& appid, api::Role role) {
  if (managers_.empty()) throw Error(Errc::PreconditionFailed, "no managers");
  auto first = managers_.begin();
  const auto reg = first->second.api->apps().register_app(appid, role, executor_.now());
  for (auto it = std::next(first); it != managers_.end(); ++it) {
    it->second.api->apps().register_app(appid, role, executor_.now(), reg.secret);
  }
  auto token = first->second.api->tokens().mint(appid, reg.secret, executor_.now());
  tokens_[appid] = token;
  return token;
}

const std::string& SimWorld::token(const std::string& appid) const {
  auto it = tokens_.find(appid);
  if (it == tokens_.end()) throw Error(Errc::UnknownTarget, "application " + appid);
  return it->second;
}

net::HttpResponse SimWorld::call(const std::string& address, net::HttpRequest req, TimeMs timeout_ms) {
  bool finished = false;
  std::optional<net::HttpResponse> result;
  network_.request(address, std::move(req), timeout_ms, [&](std::optional<net::HttpResponse> r) {
    finished = true;
    result = std::move(r);
  });
  while (!finished && executor_.step()) {
  }
  if (!result) throw Error(Errc::ManagerUnreachable, address);
  return *result;
}

net::HttpResponse SimWorld::call(const std::string& address, const std::string& method, const std::string& target,
                                 const std::optional<std::string>& app, const Json& body,
                                 std::map<std::string, std::string> headers) {
  net::HttpRequest req;
  req.method = method;
  req.target = target;
  req.headers = std::move(headers);
  if (app) req.headers["authorization"] = "Bearer " + token(*app);
  if (!body.is_null()) {
    req.headers["content-type"] = "application/json";
    req.body = body.dump();
  }
  return call(address, std::move(req));
}

// ---------------------------------------------------------------------------
// scenarios

bool ScenarioReport::all_passed() const {
  return std::all_of(probes.begin(), probes.end(), [](const ProbeResult& p) { return p.passed; });
}

Json ScenarioReport::to_json() const {
  Json list = Json::array();
  for (const auto& p : probes) {
    list.push_back(Json{{"name", p.name}, {"at", p.at}, {"passed", p.passed}, {"status", p.status},
                        {"detail", p.detail}});
  }
  return Json{{"probes", std::move(list)},
              {"passed", all_passed()},
              {"trace_digest", trace_digest},
              {"trace_events", trace_events},
              {"records", records}};
}

namespace {

void evaluate(const ProbeSpec& spec, const net::HttpResponse& resp, ProbeResult& out) {
  out.status = resp.status;
  out.body = resp.body;
  out.passed = true;
  if (spec.expect_status && *spec.expect_status != resp.status) {
    out.passed = false;
    out.detail = "status " + std::to_string(resp.status) + ", expected " + std::to_string(*spec.expect_status);
    return;
  }
  if (spec.expect_json.empty()) return;
  Json body;
  try {
    body = Json::parse(resp.body);
  } catch (const Json::exception&) {
    out.passed = false;
    out.detail = "body is not JSON";
    return;
  }
  for (const auto& [ptr, expected] : spec.expect_json) {
    const Json::json_pointer p{ptr};
    if (!body.contains(p) || body.at(p) != expected) {
      out.passed = false;
      out.detail = ptr + " is " + (body.contains(p) ? body.at(p).dump() : "absent") + ", expected " + expected.dump();
      return;
    }
  }
}

}  // namespace

ScenarioReport run_scenario(const ScenarioScript& script) {
  SimWorld world(script);
  for (const auto& f : script.faults) {
    if (!world.network().has_node(f.target)) throw Error(Errc::ScriptInvalid, "fault target " + f.target);
  }
  for (const auto& p : script.probes) {
    if (p.app) {
      try {
        world.token(*p.app);
      } catch (const Error&) {
        throw Error(Errc::ScriptInvalid, "probe app " + *p.app + " is not registered");
      }
    }
  }

  const TimeMs start = script.start_time;
  for (const auto& f : script.faults) {
    world.executor().schedule(start + f.at - world.now(), [&world, f] {
      try {
        world.inject_fault(f.target, f.kind, f.duration, f.pct);
      } catch (const Error& e) {
        world.trace().record(world.now(), f.target, "fault-error", e.what());
      }
    });
  }

  std::vector<ProbeResult> results(script.probes.size());
  for (std::size_t i = 0; i < script.probes.size(); ++i) {
    const auto& spec = script.probes[i];
    results[i].name = spec.name;
    results[i].at = spec.at;
    results[i].detail = "no response before the end of the run";
    world.executor().schedule(start + spec.at - world.now(), [&world, &spec, &results, i] {
      net::HttpRequest req;
      req.method = spec.method;
      req.target = spec.path;
      req.headers = spec.headers;
      if (spec.app) req.headers["authorization"] = "Bearer " + world.token(*spec.app);
      if (!spec.body.is_null()) {
        req.headers["content-type"] = "application/json";
        req.body = spec.body.dump();
      }
      world.network().request(spec.via, std::move(req), 30'000,
                              [&spec, &results, i](std::optional<net::HttpResponse> resp) {
                                if (!resp) {
                                  results[i].detail = "unreachable";
                                  return;
                                }
                                evaluate(spec, *resp, results[i]);
                              });
    });
  }

  world.run_until(start + script.duration_ms);

  ScenarioReport report;
  report.probes = std::move(results);
  report.trace_text = world.trace().serialize();
  report.trace_digest = crypto::sha256_hex(report.trace_text);
  report.trace_events = world.trace().events().size();
  report.records = world.total_records();
  return report;
}

}  // namespace iotmp::sim
