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

#include "iotmp/moms/moms.hpp"

#include "iotmp/api/management_api.hpp"
#include "iotmp/crypto/digest.hpp"

namespace iotmp::moms {

namespace {

constexpr const char* kTopology = "topology";
constexpr int kStalePeriods = 3;

net::HttpResponse error(Errc code, const std::string& detail) { return api::error_response(Error(code, detail)); }

}  // namespace

Json to_json(const TopologyEntry& e) {
  Json mtids = Json::array();
  for (const auto& m : e.mtids) mtids.push_back(m.str());
  return Json{{"managerid", e.managerid.str()}, {"address", e.address}, {"mtids", std::move(mtids)},
              {"updated_at", e.updated_at}};
}

TopologyEntry parse_topology(const Json& payload, TimeMs now) {
  if (!payload.is_object() || payload.size() != 3 || !payload.contains("managerid") ||
      !payload.contains("address") || !payload.contains("mtids")) {
    throw Error(Errc::MalformedTopology, "expected exactly {managerid, address, mtids}");
  }
  const auto& id = payload["managerid"];
  const auto& address = payload["address"];
  const auto& mtids = payload["mtids"];
  if (!id.is_string() || !address.is_string() || address.get_ref<const std::string&>().empty() ||
      !mtids.is_array()) {
    throw Error(Errc::MalformedTopology, "field types");
  }
  TopologyEntry e;
  try {
    e.managerid = ManagerId(id.get<std::string>());
    for (const auto& m : mtids) {
      if (!m.is_string()) throw Error(Errc::MalformedTopology, "mtids must be identifiers");
      e.mtids.insert(Mtid(m.get<std::string>()));
    }
  } catch (const Error& err) {
    if (err.code() == Errc::MalformedTopology) throw;
    throw Error(Errc::MalformedTopology, err.what());
  }
  e.address = address.get<std::string>();
  e.updated_at = now;
  return e;
}

Moms::Moms(MomsConfig config, net::Executor& executor, net::HttpClient& http)
    : config_(std::move(config)),
      executor_(executor),
      http_(http),
      store_(config_.storage_path ? std::make_unique<manager::KvStore>(*config_.storage_path)
                                  : std::make_unique<manager::KvStore>()) {
  load_from_store();
}

Moms::~Moms() { *alive_ = false; }

void Moms::load_from_store() {
  for (const auto& [key, j] : store_->scan(kTopology)) {
    Json payload = j;
    const TimeMs updated = payload.at("updated_at").get<TimeMs>();
    payload.erase("updated_at");
    auto e = parse_topology(payload, updated);
    for (const auto& m : e.mtids) index_[m] = e.managerid;
    entries_[e.managerid] = std::move(e);
  }
}

void Moms::ingest_topology(const TopologyEntry& entry) {
  std::lock_guard lock(mu_);
  if (auto old = entries_.find(entry.managerid); old != entries_.end()) {
    for (const auto& m : old->second.mtids) {
      if (auto it = index_.find(m); it != index_.end() && it->second == entry.managerid) index_.erase(it);
    }
  }
  for (const auto& m : entry.mtids) {
    auto [it, inserted] = index_.try_emplace(m, entry.managerid);
    if (inserted || it->second == entry.managerid) continue;
    // Last writer wins: the MTID moves and leaves the previous entry.
    auto& previous = entries_.at(it->second);
    previous.mtids.erase(m);
    store_->put(kTopology, previous.managerid.str(), to_json(previous));
    it->second = entry.managerid;
  }
  entries_[entry.managerid] = entry;
  store_->put(kTopology, entry.managerid.str(), to_json(entry));
  ++stats_.topology_updates;
}

Route Moms::lookup(const Mtid& mtid) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(mtid);
  if (it == index_.end()) throw Error(Errc::NotFound, "no manager for " + mtid.str());
  const auto& e = entries_.at(it->second);
  const bool stale = executor_.now() - e.updated_at > kStalePeriods * config_.publish_period_ms;
  return Route{e.managerid, e.address, stale};
}

std::vector<TopologyEntry> Moms::entries() const {
  std::lock_guard lock(mu_);
  std::vector<TopologyEntry> out;
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

MomsStats Moms::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

net::HttpHandler Moms::handler() {
  return [this](const net::HttpRequest& req, net::HttpReply reply) { handle(req, std::move(reply)); };
}

void Moms::handle(const net::HttpRequest& req, net::HttpReply reply) {
  try {
    const auto target = net::parse_target(req.target);
    const auto& seg = target.segments;
    if (seg.size() == 1 && seg[0] == "topology") {
      if (req.method == "POST") return post_topology(req, reply);
      if (req.method == "GET") {
        Json list = Json::array();
        for (const auto& e : entries()) list.push_back(to_json(e));
        return reply(api::json_response(200, Json{{"entries", std::move(list)}}));
      }
      return reply(error(Errc::BadRequest, "method not allowed"));
    }
    if (seg.size() == 1 && seg[0] == "health" && req.method == "GET") {
      return reply(api::json_response(200, Json{{"status", "ok"}}));
    }
    if (seg.size() >= 2 && seg[0] == "mt") {
      Mtid mtid;
      try {
        mtid = Mtid(seg[1]);
      } catch (const Error& e) {
        return reply(error(Errc::BadRequest, e.what()));
      }
      return route(req, mtid, std::move(reply));
    }
    reply(error(Errc::NotFound, req.method + " " + req.target));
  } catch (const Error& e) {
    reply(api::error_response(e));
  }
}

void Moms::post_topology(const net::HttpRequest& req, net::HttpReply& reply) {
  Json payload;
  try {
    payload = Json::parse(req.body);
  } catch (const Json::exception&) {
    std::lock_guard lock(mu_);
    ++stats_.topology_rejected;
    return reply(error(Errc::MalformedTopology, "body is not JSON"));
  }
  TopologyEntry entry;
  try {
    entry = parse_topology(payload, executor_.now());
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    ++stats_.topology_rejected;
    return reply(api::error_response(e));
  }
  const auto key = config_.manager_keys.find(entry.managerid.str());
  const auto presented = req.header("x-manager-key");
  if (key == config_.manager_keys.end() || !presented || !crypto::constant_time_equal(*presented, key->second)) {
    std::lock_guard lock(mu_);
    ++stats_.topology_rejected;
    return reply(error(Errc::Unauthorized, "manager key"));
  }
  ingest_topology(entry);
  reply(api::json_response(200, Json{{"managerid", entry.managerid.str()}, {"mtids", entry.mtids.size()}}));
}

void Moms::route(const net::HttpRequest& req, const Mtid& mtid, net::HttpReply reply) {
  Route r;
  try {
    r = lookup(mtid);
  } catch (const Error& e) {
    {
      std::lock_guard lock(mu_);
      ++stats_.not_found;
    }
    return reply(api::error_response(e));
  }
  net::HttpRequest fwd = req;
  const bool client_secure = req.secure && req.header("x-forwarded-proto").value_or("https") != "http";
  fwd.headers["x-forwarded-proto"] = client_secure ? "https" : "http";
  fwd.headers.erase("host");
  fwd.headers.erase("content-length");
  fwd.secure = true;
  std::weak_ptr<bool> alive = alive_;
  http_.request(r.address, std::move(fwd), config_.forward_timeout_ms,
                [this, alive, r, reply = std::move(reply)](std::optional<net::HttpResponse> resp) {
                  if (alive.expired()) return;
                  if (!resp) {
                    {
                      std::lock_guard lock(mu_);
                      ++stats_.unreachable;
                    }
                    return reply(error(Errc::ManagerUnreachable, r.managerid.str()));
                  }
                  {
                    std::lock_guard lock(mu_);
                    ++stats_.forwarded;
                  }
                  if (r.stale) resp->headers["x-iotmp-stale"] = "1";
                  reply(std::move(*resp));
                });
}

MomsConfig moms_config_from_json(const Json& j) {
  try {
    MomsConfig c;
    c.manager_keys = j.at("manager_keys").get<std::map<std::string, std::string>>();
    c.publish_period_ms = j.value("publish_period_ms", c.publish_period_ms);
    c.forward_timeout_ms = j.value("forward_timeout_ms", c.forward_timeout_ms);
    if (j.contains("storage")) c.storage_path = j["storage"].get<std::string>();
    if (c.publish_period_ms <= 0 || c.forward_timeout_ms <= 0) throw Error(Errc::ConfigInvalid, "periods must be positive");
    return c;
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid) throw;
    throw Error(Errc::ConfigInvalid, e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  }
}

}  // namespace iotmp::moms
