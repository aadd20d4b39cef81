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

#include "iotmp/agent/profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "iotmp/privacy/geo.hpp"

namespace iotmp::agent {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::ConfigInvalid, why); }

std::string_view shape_name(SensorSpec::Shape s) {
  switch (s) {
    case SensorSpec::Shape::Numeric: return "numeric";
    case SensorSpec::Shape::Boolean: return "boolean";
    case SensorSpec::Shape::Location: return "location";
  }
  return "numeric";
}

std::string_view comparator_name(AlertRule::Comparator c) {
  switch (c) {
    case AlertRule::Comparator::Greater: return ">";
    case AlertRule::Comparator::GreaterEqual: return ">=";
    case AlertRule::Comparator::Less: return "<";
    case AlertRule::Comparator::LessEqual: return "<=";
    case AlertRule::Comparator::Equal: return "==";
  }
  return ">";
}

std::vector<SemanticLocation> default_route() {
  const auto world = privacy::GeoHierarchy::bundled();
  std::vector<SemanticLocation> route;
  for (auto leaf : world.leaves()) {
    route.push_back(world.location_of(leaf));
    if (route.size() == 4) break;
  }
  return route;
}

}  // namespace

const SensorSpec* DeviceProfile::sensor(std::string_view attribute) const {
  auto it = std::find_if(sensors.begin(), sensors.end(), [&](const auto& s) { return s.attribute == attribute; });
  return it == sensors.end() ? nullptr : &*it;
}

const ActuatorSpec* DeviceProfile::actuator(std::string_view attribute) const {
  auto it = std::find_if(actuators.begin(), actuators.end(), [&](const auto& a) { return a.attribute == attribute; });
  return it == actuators.end() ? nullptr : &*it;
}

DeviceProfile builtin_profile(const std::string& name) {
  DeviceProfile p;
  p.name = name;
  SensorSpec temperature;
  temperature.attribute = std::string(attr::kTemperature);
  temperature.unit = "C";
  temperature.base = 21.0;
  temperature.amplitude = 4.0;
  temperature.period_ms = 600'000.0;
  temperature.noise = 0.5;
  if (name == "thermometer") {
    p.sensors.push_back(temperature);
  } else if (name == "valve") {
    SensorSpec water;
    water.attribute = std::string(attr::kWaterDetection);
    water.shape = SensorSpec::Shape::Boolean;
    water.probability = 0.05;
    p.sensors.push_back(water);
    p.actuators.push_back(ActuatorSpec{"Valve", {"open", "closed"}, "closed"});
  } else if (name == "multisensor") {
    p.sensors.push_back(temperature);
    SensorSpec pressure;
    pressure.attribute = std::string(attr::kPressure);
    pressure.unit = "hPa";
    pressure.base = 1013.0;
    pressure.amplitude = 5.0;
    pressure.noise = 1.0;
    p.sensors.push_back(pressure);
    SensorSpec motion;
    motion.attribute = std::string(attr::kMotion);
    motion.shape = SensorSpec::Shape::Boolean;
    motion.probability = 0.2;
    p.sensors.push_back(motion);
  } else if (name == "tracker") {
    SensorSpec loc;
    loc.attribute = std::string(attr::kMobileLocation);
    loc.shape = SensorSpec::Shape::Location;
    loc.route = default_route();
    p.sensors.push_back(loc);
  } else {
    bad("unknown device profile '" + name + "'");
  }
  return p;
}

DeviceProfile profile_from_json(const Json& j) {
  if (j.is_string()) return builtin_profile(j.get<std::string>());
  if (!j.is_object()) bad("profile must be a name or an object");
  DeviceProfile p;
  if (j.contains("base")) p = builtin_profile(j["base"].get<std::string>());
  p.name = j.value("name", p.name);
  for (const auto& s : j.value("sensors", Json::array())) {
    SensorSpec spec;
    spec.attribute = s.at("attribute").get<std::string>();
    check_attribute_name(spec.attribute, AttributeClass::Behavioural);
    const auto shape = s.value("shape", std::string("numeric"));
    if (shape == "numeric") {
      spec.shape = SensorSpec::Shape::Numeric;
    } else if (shape == "boolean") {
      spec.shape = SensorSpec::Shape::Boolean;
    } else if (shape == "location") {
      spec.shape = SensorSpec::Shape::Location;
    } else {
      bad("unknown sensor shape '" + shape + "'");
    }
    if (s.contains("unit")) spec.unit = s["unit"].get<std::string>();
    spec.base = s.value("base", 0.0);
    spec.amplitude = s.value("amplitude", 0.0);
    spec.period_ms = s.value("period_ms", 60'000.0);
    spec.noise = s.value("noise", 0.0);
    spec.probability = s.value("probability", 0.1);
    for (const auto& stop : s.value("route", Json::array())) spec.route.push_back(location_from_json(stop));
    if (spec.shape == SensorSpec::Shape::Location && spec.route.empty()) spec.route = default_route();
    p.sensors.push_back(std::move(spec));
  }
  for (const auto& a : j.value("actuators", Json::array())) {
    ActuatorSpec spec;
    spec.attribute = a.at("attribute").get<std::string>();
    check_attribute_name(spec.attribute, AttributeClass::Behavioural);
    spec.allowed = a.at("allowed").get<std::vector<std::string>>();
    spec.initial = a.value("initial", spec.allowed.empty() ? std::string() : spec.allowed.front());
    p.actuators.push_back(std::move(spec));
  }
  return p;
}

Json to_json(const DeviceProfile& p) {
  Json sensors = Json::array();
  for (const auto& s : p.sensors) {
    Json js{{"attribute", s.attribute}, {"shape", std::string(shape_name(s.shape))}, {"base", s.base},
            {"amplitude", s.amplitude}, {"period_ms", s.period_ms}, {"noise", s.noise},
            {"probability", s.probability}};
    if (s.unit) js["unit"] = *s.unit;
    if (!s.route.empty()) {
      Json route = Json::array();
      for (const auto& stop : s.route) route.push_back(iotmp::to_json(stop));
      js["route"] = route;
    }
    sensors.push_back(std::move(js));
  }
  Json actuators = Json::array();
  for (const auto& a : p.actuators) {
    actuators.push_back(Json{{"attribute", a.attribute}, {"allowed", a.allowed}, {"initial", a.initial}});
  }
  return Json{{"name", p.name}, {"sensors", sensors}, {"actuators", actuators}};
}

bool AlertRule::matches(const AttributeValue& value) const {
  double v = 0.0;
  if (const auto* d = std::get_if<double>(&value)) {
    v = *d;
  } else if (const auto* b = std::get_if<bool>(&value)) {
    v = *b ? 1.0 : 0.0;
  } else {
    return false;
  }
  switch (comparator) {
    case Comparator::Greater: return v > threshold;
    case Comparator::GreaterEqual: return v >= threshold;
    case Comparator::Less: return v < threshold;
    case Comparator::LessEqual: return v <= threshold;
    case Comparator::Equal: return v == threshold;
  }
  return false;
}

AlertRule alert_rule_from_json(const Json& j) {
  AlertRule r;
  r.attribute = j.at("attribute").get<std::string>();
  const auto op = j.value("comparator", std::string(">"));
  if (op == ">") {
    r.comparator = AlertRule::Comparator::Greater;
  } else if (op == ">=") {
    r.comparator = AlertRule::Comparator::GreaterEqual;
  } else if (op == "<") {
    r.comparator = AlertRule::Comparator::Less;
  } else if (op == "<=") {
    r.comparator = AlertRule::Comparator::LessEqual;
  } else if (op == "==") {
    r.comparator = AlertRule::Comparator::Equal;
  } else {
    bad("unknown comparator '" + op + "'");
  }
  r.threshold = j.at("threshold").get<double>();
  return r;
}

Json to_json(const AlertRule& r) {
  return Json{{"attribute", r.attribute}, {"comparator", std::string(comparator_name(r.comparator))},
              {"threshold", r.threshold}};
}

AttributeValue sample_sensor(const SensorSpec& spec, TimeMs now, std::size_t step, SampleRng& rng) {
  switch (spec.shape) {
    case SensorSpec::Shape::Numeric: {
      const double phase = spec.period_ms > 0 ? 2.0 * std::numbers::pi * static_cast<double>(now) / spec.period_ms : 0.0;
      const double v = spec.base + spec.amplitude * std::sin(phase) + spec.noise * (2.0 * rng.uniform01() - 1.0);
      // Round to 1/100 so values survive text round trips unchanged.
      return std::round(v * 100.0) / 100.0;
    }
    case SensorSpec::Shape::Boolean:
      return rng.uniform01() < spec.probability;
    case SensorSpec::Shape::Location:
      if (spec.route.empty()) return std::monostate{};
      return spec.route[step % spec.route.size()];
  }
  return std::monostate{};
}

}  // namespace iotmp::agent
