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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotmp/core/ids.hpp"
#include "iotmp/core/json_codec.hpp"
#include "iotmp/manager/kv_store.hpp"
#include "iotmp/net/runtime.hpp"

namespace iotmp::moms {

/// One manager's addressing entry. Holds addressing fields only.
struct TopologyEntry {
  ManagerId managerid;
  std::string address;
  std::set<Mtid> mtids;
  TimeMs updated_at = 0;
};

Json to_json(const TopologyEntry& e);

struct Route {
  ManagerId managerid;
  std::string address;
  bool stale = false;
};

struct MomsConfig {
  /// Pre-shared key per ManagerID; publishes from unlisted managers are refused.
  std::map<std::string, std::string> manager_keys;
  /// The managers' publish period; entries older than three periods are stale.
  TimeMs publish_period_ms = 10'000;
  TimeMs forward_timeout_ms = 10'000;
  std::optional<std::string> storage_path;
};

struct MomsStats {
  std::uint64_t topology_updates = 0;
  std::uint64_t topology_rejected = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t not_found = 0;
  std::uint64_t unreachable = 0;
};

/// Validates a topology publication. The payload must be exactly
/// {managerid, address, mtids}; anything else throws MalformedTopology.
TopologyEntry parse_topology(const Json& payload, TimeMs now);

/// Manager of Managers: the MTID -> manager address table and the request
/// router in front of the managers. It keeps no thing data and makes no
/// access decisions; tokens are forwarded untouched.
class Moms {
 public:
  Moms(MomsConfig config, net::Executor& executor, net::HttpClient& http);
  ~Moms();
  Moms(const Moms&) = delete;
  Moms& operator=(const Moms&) = delete;

  /// Replaces the manager's entry. MTIDs listed here leave any other entry.
  void ingest_topology(const TopologyEntry& entry);
  /// Errors: NotFound.
  Route lookup(const Mtid& mtid) const;
  std::vector<TopologyEntry> entries() const;

  /// Full scan of the backing store, for purity audits.
  Json dump_store() const { return store_->dump(); }
  const manager::KvStore& store() const noexcept { return *store_; }
  MomsStats stats() const;

  void handle(const net::HttpRequest& req, net::HttpReply reply);
  net::HttpHandler handler();

 private:
  void post_topology(const net::HttpRequest& req, net::HttpReply& reply);
  void route(const net::HttpRequest& req, const Mtid& mtid, net::HttpReply reply);
  void load_from_store();

  MomsConfig config_;
  net::Executor& executor_;
  net::HttpClient& http_;
  std::unique_ptr<manager::KvStore> store_;

  mutable std::mutex mu_;
  std::map<ManagerId, TopologyEntry> entries_;
  std::map<Mtid, ManagerId> index_;
  MomsStats stats_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

/// Loads a MoMs config file. Throws ConfigInvalid.
MomsConfig moms_config_from_json(const Json& j);

}  // namespace iotmp::moms
