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

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iotmp/core/error.hpp"
#include "iotmp/core/ids.hpp"

namespace iotmp {

/// A place in a geographic containment hierarchy, coarsest region first.
struct SemanticLocation {
  std::vector<std::string> path;
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const SemanticLocation&) const = default;
};

/// True when `prefix` is an ancestor-or-self path of `path`.
bool is_path_prefix(const std::vector<std::string>& prefix, const std::vector<std::string>& path);

using AttributeValue = std::variant<std::monostate, bool, double, std::string, SemanticLocation>;

std::string describe(const AttributeValue& value);

struct ManagementAttribute {
  std::string name;
  AttributeValue value;
  std::optional<std::string> unit;

  bool operator==(const ManagementAttribute&) const = default;
};

struct BehaviouralAttribute {
  std::string name;
  AttributeValue value;
  std::optional<std::string> unit;
  TimeMs timestamp = 0;

  bool operator==(const BehaviouralAttribute&) const = default;
};

namespace attr {
inline constexpr std::string_view kId = "ID";
inline constexpr std::string_view kName = "Name";
inline constexpr std::string_view kSerialNumber = "SerialNumber";
inline constexpr std::string_view kFirmwareVersion = "FirmwareVersion";
inline constexpr std::string_view kNetworkAddress = "NetworkAddress";
inline constexpr std::string_view kBatteryLife = "BatteryLife";
inline constexpr std::string_view kFixedLocation = "FixedLocation";
inline constexpr std::string_view kType = "Type";
inline constexpr std::string_view kAdmin = "Admin";

inline constexpr std::string_view kTemperature = "Temperature";
inline constexpr std::string_view kMotion = "Motion";
inline constexpr std::string_view kSound = "Sound";
inline constexpr std::string_view kPressure = "Pressure";
inline constexpr std::string_view kWaterDetection = "WaterDetection";
inline constexpr std::string_view kFireDetection = "FireDetection";
inline constexpr std::string_view kMobileLocation = "MobileLocation";
}  // namespace attr

enum class AttributeClass { Management, Behavioural };

/// Built-in vocabulary lookup by exact name.
bool is_builtin_management(std::string_view name);
bool is_builtin_behavioural(std::string_view name);
/// Location-valued attributes are the ones routed through the privacy module.
bool is_location_attribute(std::string_view name);

/// Checks attribute-name syntax and the reserved-vocabulary rule for the given
/// class: a name is either an exact built-in of that class, or an
/// operator-defined name that matches no built-in case-insensitively.
void check_attribute_name(std::string_view name, AttributeClass cls);

/// Throws MalformedValue when the value does not fit the attribute's type.
void check_attribute_value(std::string_view name, const AttributeValue& value, AttributeClass cls);

/// A thing's management attributes after validation. Entries are kept sorted
/// by name so equal sets compare equal regardless of input order.
class ValidatedDescriptor {
 public:
  const Mtid& id() const noexcept { return id_; }
  const std::vector<ManagementAttribute>& attributes() const noexcept { return attrs_; }
  const ManagementAttribute* find(std::string_view name) const;
  std::optional<std::string> string_value(std::string_view name) const;
  std::optional<SemanticLocation> fixed_location() const;

  bool operator==(const ValidatedDescriptor&) const = default;

 private:
  friend ValidatedDescriptor validate_descriptor(std::vector<ManagementAttribute> attrs);
  Mtid id_;
  std::vector<ManagementAttribute> attrs_;
};

/// Errors: MissingID, DuplicateAttributeName, MalformedValue, ReservedAttributeName.
ValidatedDescriptor validate_descriptor(std::vector<ManagementAttribute> attrs);

}  // namespace iotmp
