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

#include "iotmp/manager/kv_store.hpp"

#include <cstdio>
#include <filesystem>

namespace iotmp::manager {

KvStore::KvStore(const std::string& journal_path) : path_(journal_path) {
  {
    std::ifstream in(journal_path);
    std::string line;
    std::size_t lineno = 0;
    while (in && std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        apply(Json::parse(line));
      } catch (const std::exception& e) {
        throw Error(Errc::ConfigInvalid, journal_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  journal_.open(journal_path, std::ios::app);
  if (!journal_) throw Error(Errc::ConfigInvalid, "cannot open store journal " + journal_path);
}

void KvStore::apply(const Json& line) {
  const auto& op = line.at("op").get_ref<const std::string&>();
  const auto& table = line.at("t").get_ref<const std::string&>();
  const auto& key = line.at("k").get_ref<const std::string&>();
  if (op == "put") {
    tables_[table][key] = line.at("v");
  } else if (op == "del") {
    auto it = tables_.find(table);
    if (it != tables_.end()) it->second.erase(key);
  } else if (op == "delp") {
    auto it = tables_.find(table);
    if (it == tables_.end()) return;
    auto& m = it->second;
    for (auto k = m.lower_bound(key); k != m.end() && k->first.compare(0, key.size(), key) == 0;) k = m.erase(k);
  } else {
    throw Error(Errc::ConfigInvalid, "unknown journal op '" + op + "'");
  }
}

void KvStore::append(const Json& line) {
  if (!journal_.is_open()) return;
  journal_ << line.dump() << '\n';
  journal_.flush();
}

void KvStore::put(const std::string& table, const std::string& key, Json value) {
  std::lock_guard lock(mu_);
  if (journal_.is_open()) append(Json{{"op", "put"}, {"t", table}, {"k", key}, {"v", value}});
  tables_[table][key] = std::move(value);
}

void KvStore::erase(const std::string& table, const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = tables_.find(table);
  if (it == tables_.end() || it->second.erase(key) == 0) return;
  append(Json{{"op", "del"}, {"t", table}, {"k", key}});
}

std::size_t KvStore::erase_prefix(const std::string& table, const std::string& prefix) {
  std::lock_guard lock(mu_);
  auto it = tables_.find(table);
  if (it == tables_.end()) return 0;
  auto& m = it->second;
  std::size_t n = 0;
  for (auto k = m.lower_bound(prefix); k != m.end() && k->first.compare(0, prefix.size(), prefix) == 0; ++n) {
    k = m.erase(k);
  }
  if (n > 0) append(Json{{"op", "delp"}, {"t", table}, {"k", prefix}});
  return n;
}

std::optional<Json> KvStore::get(const std::string& table, const std::string& key) const {
  std::lock_guard lock(mu_);
  auto t = tables_.find(table);
  if (t == tables_.end()) return std::nullopt;
  auto it = t->second.find(key);
  if (it == t->second.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, Json>> KvStore::scan(const std::string& table, const std::string& prefix) const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, Json>> out;
  auto t = tables_.find(table);
  if (t == tables_.end()) return out;
  for (auto it = t->second.lower_bound(prefix);
       it != t->second.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    out.emplace_back(it->first, it->second);
  }
  return out;
}

std::size_t KvStore::size(const std::string& table) const {
  std::lock_guard lock(mu_);
  auto t = tables_.find(table);
  return t == tables_.end() ? 0 : t->second.size();
}

std::vector<std::string> KvStore::tables() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : tables_) out.push_back(name);
  return out;
}

Json KvStore::dump() const {
  std::lock_guard lock(mu_);
  Json out = Json::object();
  for (const auto& [name, rows] : tables_) {
    Json t = Json::object();
    for (const auto& [k, v] : rows) t[k] = v;
    out[name] = std::move(t);
  }
  return out;
}

void KvStore::compact() {
  std::lock_guard lock(mu_);
  if (!journal_.is_open()) return;
  const auto tmp = path_ + ".compact";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& [name, rows] : tables_) {
      for (const auto& [k, v] : rows) out << Json{{"op", "put"}, {"t", name}, {"k", k}, {"v", v}}.dump() << '\n';
    }
    if (!out) throw Error(Errc::ConfigInvalid, "cannot write " + tmp);
  }
  journal_.close();
  std::filesystem::rename(tmp, path_);
  journal_.open(path_, std::ios::app);
}

}  // namespace iotmp::manager
