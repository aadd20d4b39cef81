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

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

#include "iotmp/core/error.hpp"

namespace iotmp {

/// True when `text` is 1..64 characters drawn from [A-Za-z0-9_-].
bool is_valid_identifier(std::string_view text) noexcept;

/// Opaque identifier with the platform's charset rules. The tag keeps MTIDs,
/// AgentIDs, AppIDs and ManagerIDs from being mixed up at compile time.
template <class Tag>
class StrongId {
 public:
  StrongId() = default;
  explicit StrongId(std::string value) : value_(std::move(value)) {
    if (!is_valid_identifier(value_)) {
      throw Error(Errc::InvalidIdentifier, std::string(Tag::kName) + " '" + value_ + "'");
    }
  }

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  auto operator<=>(const StrongId&) const = default;

  friend std::ostream& operator<<(std::ostream& os, const StrongId& id) { return os << id.value_; }

 private:
  std::string value_;
};

struct MtidTag { static constexpr const char* kName = "MTID"; };
struct AgentIdTag { static constexpr const char* kName = "AgentID"; };
struct AppIdTag { static constexpr const char* kName = "AppID"; };
struct ManagerIdTag { static constexpr const char* kName = "ManagerID"; };

using Mtid = StrongId<MtidTag>;
using AgentId = StrongId<AgentIdTag>;
using AppId = StrongId<AppIdTag>;
using ManagerId = StrongId<ManagerIdTag>;

}  // namespace iotmp

template <class Tag>
struct std::hash<iotmp::StrongId<Tag>> {
  std::size_t operator()(const iotmp::StrongId<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
