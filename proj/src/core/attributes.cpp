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

#include "iotmp/core/attributes.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace iotmp {

namespace {

constexpr std::array<std::string_view, 9> kManagementNames = {
    attr::kId,           attr::kName,          attr::kSerialNumber,
    attr::kFirmwareVersion, attr::kNetworkAddress, attr::kBatteryLife,
    attr::kFixedLocation, attr::kType,          attr::kAdmin};

constexpr std::array<std::string_view, 7> kBehaviouralNames = {
    attr::kTemperature,    attr::kMotion,        attr::kSound,         attr::kPressure,
    attr::kWaterDetection, attr::kFireDetection, attr::kMobileLocation};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool collides_with_builtin(std::string_view name) {
  const auto l = lower(name);
  for (auto b : kManagementNames) {
    if (lower(b) == l) return true;
  }
  for (auto b : kBehaviouralNames) {
    if (lower(b) == l) return true;
  }
  return false;
}

bool is_number(const AttributeValue& v) {
  return std::holds_alternative<double>(v) && std::isfinite(std::get<double>(v));
}

bool is_nonempty_string(const AttributeValue& v) {
  return std::holds_alternative<std::string>(v) && !std::get<std::string>(v).empty();
}

bool is_location(const AttributeValue& v) {
  if (!std::holds_alternative<SemanticLocation>(v)) return false;
  const auto& loc = std::get<SemanticLocation>(v);
  if (loc.path.empty() || !std::isfinite(loc.lat) || !std::isfinite(loc.lon)) return false;
  return std::none_of(loc.path.begin(), loc.path.end(), [](const auto& p) { return p.empty(); });
}

}  // namespace

bool is_valid_identifier(std::string_view text) noexcept {
  if (text.empty() || text.size() > 64) return false;
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

bool is_path_prefix(const std::vector<std::string>& prefix, const std::vector<std::string>& path) {
  return prefix.size() <= path.size() && std::equal(prefix.begin(), prefix.end(), path.begin());
}

std::string describe(const AttributeValue& value) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "null"; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(double d) const {
      std::ostringstream os;
      os << d;
      return os.str();
    }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const SemanticLocation& loc) const {
      std::string out;
      for (const auto& p : loc.path) {
        if (!out.empty()) out += '/';
        out += p;
      }
      return out;
    }
  };
  return std::visit(Visitor{}, value);
}

bool is_builtin_management(std::string_view name) {
  return std::find(kManagementNames.begin(), kManagementNames.end(), name) != kManagementNames.end();
}

bool is_builtin_behavioural(std::string_view name) {
  return std::find(kBehaviouralNames.begin(), kBehaviouralNames.end(), name) !=
         kBehaviouralNames.end();
}

bool is_location_attribute(std::string_view name) {
  return name == attr::kFixedLocation || name == attr::kMobileLocation;
}

void check_attribute_name(std::string_view name, AttributeClass cls) {
  if (name.empty() || name.size() > 64 || !std::isalpha(static_cast<unsigned char>(name[0])) ||
      !std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_';
      })) {
    throw Error(Errc::MalformedValue, "attribute name '" + std::string(name) + "'");
  }
  const bool builtin_here = cls == AttributeClass::Management ? is_builtin_management(name)
                                                              : is_builtin_behavioural(name);
  if (builtin_here) return;
  if (collides_with_builtin(name)) {
    throw Error(Errc::ReservedAttributeName, std::string(name));
  }
}

void check_attribute_value(std::string_view name, const AttributeValue& value, AttributeClass cls) {
  bool ok = true;
  if (cls == AttributeClass::Management) {
    if (name == attr::kId) {
      ok = std::holds_alternative<std::string>(value) &&
           is_valid_identifier(std::get<std::string>(value));
    } else if (name == attr::kBatteryLife) {
      ok = is_number(value) && std::get<double>(value) >= 0.0 && std::get<double>(value) <= 100.0;
    } else if (name == attr::kFixedLocation) {
      ok = is_location(value);
    } else if (is_builtin_management(name)) {
      ok = is_nonempty_string(value);
    } else {
      ok = !std::holds_alternative<std::monostate>(value) &&
           (!std::holds_alternative<double>(value) || is_number(value)) &&
           (!std::holds_alternative<SemanticLocation>(value) || is_location(value));
    }
  } else {
    if (name == attr::kTemperature || name == attr::kSound || name == attr::kPressure) {
      ok = is_number(value);
    } else if (name == attr::kMotion || name == attr::kWaterDetection ||
               name == attr::kFireDetection) {
      ok = std::holds_alternative<bool>(value);
    } else if (name == attr::kMobileLocation) {
      ok = is_location(value);
    } else {
      ok = !std::holds_alternative<std::monostate>(value) &&
           (!std::holds_alternative<double>(value) || is_number(value)) &&
           (!std::holds_alternative<SemanticLocation>(value) || is_location(value));
    }
  }
  if (!ok) {
    throw Error(Errc::MalformedValue, std::string(name) + "=" + describe(value));
  }
}

const ManagementAttribute* ValidatedDescriptor::find(std::string_view name) const {
  auto it = std::find_if(attrs_.begin(), attrs_.end(), [&](const auto& a) { return a.name == name; });
  return it == attrs_.end() ? nullptr : &*it;
}

std::optional<std::string> ValidatedDescriptor::string_value(std::string_view name) const {
  const auto* a = find(name);
  if (a == nullptr || !std::holds_alternative<std::string>(a->value)) return std::nullopt;
  return std::get<std::string>(a->value);
}

std::optional<SemanticLocation> ValidatedDescriptor::fixed_location() const {
  const auto* a = find(attr::kFixedLocation);
  if (a == nullptr) return std::nullopt;
  return std::get<SemanticLocation>(a->value);
}

ValidatedDescriptor validate_descriptor(std::vector<ManagementAttribute> attrs) {
  // Error categories are checked in a fixed priority over the whole set so the
  // outcome does not depend on input order.
  for (const auto& a : attrs) {
    try {
      check_attribute_name(a.name, AttributeClass::Management);
    } catch (const Error& e) {
      if (e.code() == Errc::MalformedValue) throw;
    }
    if (a.unit && a.unit->empty()) throw Error(Errc::MalformedValue, "empty unit on " + a.name);
  }
  for (const auto& a : attrs) check_attribute_name(a.name, AttributeClass::Management);
  for (const auto& a : attrs) check_attribute_value(a.name, a.value, AttributeClass::Management);

  std::set<std::string> seen;
  for (const auto& a : attrs) {
    if (!seen.insert(lower(a.name)).second) throw Error(Errc::DuplicateAttributeName, a.name);
  }
  auto id = std::find_if(attrs.begin(), attrs.end(), [](const auto& a) { return a.name == attr::kId; });
  if (id == attrs.end()) throw Error(Errc::MissingID);

  ValidatedDescriptor d;
  d.id_ = Mtid(std::get<std::string>(id->value));
  std::sort(attrs.begin(), attrs.end(), [](const auto& x, const auto& y) { return x.name < y.name; });
  d.attrs_ = std::move(attrs);
  return d;
}

}  // namespace iotmp
