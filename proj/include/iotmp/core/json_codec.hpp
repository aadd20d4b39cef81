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

#include <json.hpp>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/message.hpp"

namespace iotmp {

using Json = nlohmann::json;

Json to_json(const SemanticLocation& loc);
/// Strict: requires exactly `path`, `lat`, `lon`. Throws MalformedValue.
SemanticLocation location_from_json(const Json& j);

Json to_json(const AttributeValue& value);
/// Throws MalformedValue for shapes that are not attribute values.
AttributeValue value_from_json(const Json& j);

/// [{name, value, unit?}] in name order.
Json to_json(const std::vector<ManagementAttribute>& attrs);
/// Accepts the array form above or an object {name: value | {value, unit}}.
/// Throws MalformedValue.
std::vector<ManagementAttribute> management_attributes_from_json(const Json& j);

Json to_json(const ProtocolMessage& msg);
/// Throws MalformedFrame.
ProtocolMessage message_from_json(const Json& j);

/// Parses text; throws ConfigInvalid with the parser's message on failure.
Json parse_json_text(std::string_view text);
Json load_json_file(const std::string& path);

}  // namespace iotmp
