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
#include <random>
#include <string>
#include <vector>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/json_codec.hpp"

namespace iotmp::agent {

/// How a simulated sensor produces readings.
struct SensorSpec {
  enum class Shape { Numeric, Boolean, Location };

  std::string attribute;
  Shape shape = Shape::Numeric;
  std::optional<std::string> unit;
  // Numeric: base + amplitude * sin(2*pi*t/period) + uniform noise in [-noise, noise]
  double base = 0.0;
  double amplitude = 0.0;
  double period_ms = 60'000.0;
  double noise = 0.0;
  // Boolean: true with this probability per sample
  double probability = 0.1;
  // Location: cycles through these stops
  std::vector<SemanticLocation> route;
};

struct ActuatorSpec {
  std::string attribute;
  std::vector<std::string> allowed;
  std::string initial;
};

struct DeviceProfile {
  std::string name;
  std::vector<SensorSpec> sensors;
  std::vector<ActuatorSpec> actuators;

  const SensorSpec* sensor(std::string_view attribute) const;
  const ActuatorSpec* actuator(std::string_view attribute) const;
};

/// thermometer, valve, multisensor, tracker. Throws ConfigInvalid for other names.
/// The tracker route defaults to the first leaves of the bundled world.
DeviceProfile builtin_profile(const std::string& name);

DeviceProfile profile_from_json(const Json& j);
Json to_json(const DeviceProfile& p);

struct AlertRule {
  enum class Comparator { Greater, GreaterEqual, Less, LessEqual, Equal };

  std::string attribute;
  Comparator comparator = Comparator::Greater;
  double threshold = 0.0;

  /// Numbers compare directly; booleans compare as 0/1; other values never match.
  bool matches(const AttributeValue& value) const;
};

AlertRule alert_rule_from_json(const Json& j);
Json to_json(const AlertRule& r);

/// Deterministic uniform draws, independent of the standard library's
/// distribution implementations so simulated runs replay across toolchains.
class SampleRng {
 public:
  explicit SampleRng(std::uint64_t seed) : engine_(seed) {}
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Draw one reading for `spec` at time `now`. `step` counts previous samples
/// (used by location routes).
AttributeValue sample_sensor(const SensorSpec& spec, TimeMs now, std::size_t step, SampleRng& rng);

}  // namespace iotmp::agent
