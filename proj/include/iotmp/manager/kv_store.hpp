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

#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iotmp/core/json_codec.hpp"

namespace iotmp::manager {

/// Embedded key-value store: named tables of JSON values kept in ordered maps.
/// With a journal path every mutation is appended as one JSON line and the
/// journal is replayed on open. Thread-safe.
class KvStore {
 public:
  KvStore() = default;
  /// Opens (creating if needed) and replays the journal. Throws ConfigInvalid
  /// when the file cannot be opened or holds a corrupt line.
  explicit KvStore(const std::string& journal_path);

  void put(const std::string& table, const std::string& key, Json value);
  void erase(const std::string& table, const std::string& key);
  /// Erases every key in `table` that starts with `prefix`.
  std::size_t erase_prefix(const std::string& table, const std::string& prefix);

  std::optional<Json> get(const std::string& table, const std::string& key) const;
  std::vector<std::pair<std::string, Json>> scan(const std::string& table, const std::string& prefix = {}) const;
  std::size_t size(const std::string& table) const;
  std::vector<std::string> tables() const;
  /// Every table as {table: {key: value}}.
  Json dump() const;

  /// Rewrites the journal to hold only the live state.
  void compact();
  bool persistent() const noexcept { return journal_.is_open(); }

 private:
  void append(const Json& line);
  void apply(const Json& line);

  mutable std::mutex mu_;
  std::map<std::string, std::map<std::string, Json>> tables_;
  std::string path_;
  std::ofstream journal_;
};

}  // namespace iotmp::manager
