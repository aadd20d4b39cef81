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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotmp/core/attributes.hpp"
#include "iotmp/core/json_codec.hpp"

namespace iotmp::privacy {

struct BoundingBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  bool contains(double lat, double lon) const noexcept {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
  }
  bool contains(const BoundingBox& other) const noexcept {
    return other.min_lat >= min_lat && other.max_lat <= max_lat && other.min_lon >= min_lon &&
           other.max_lon <= max_lon;
  }
};

struct Region {
  std::string name;
  double lat = 0.0;
  double lon = 0.0;
  std::optional<BoundingBox> bounds;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  std::size_t depth = 1;  // top-level regions have depth 1
};

/// Geographic containment tree. Paths start at a top-level region; several
/// top-level regions may coexist. Sibling names are unique, so a path names
/// at most one region.
class GeoHierarchy {
 public:
  using NodeId = std::size_t;

  /// Accepts a single region object or an array of top-level regions; each
  /// region is {name, lat, lon, [bounds: [min_lat, min_lon, max_lat, max_lon]],
  /// [children: [...]]}. Throws ConfigInvalid.
  static GeoHierarchy from_json(const Json& j);
  /// Small synthetic world: 3 countries, 4 states each, 3 cities each.
  static GeoHierarchy bundled();
  /// Uniform tree of the given depth and fanout with nested bounding boxes
  /// and representative points at box centres.
  static GeoHierarchy synthetic(std::size_t depth, std::size_t fanout);

  Json to_json() const;

  std::optional<NodeId> resolve(const std::vector<std::string>& path) const;
  const Region& region(NodeId id) const { return regions_.at(id); }
  std::vector<std::string> path_of(NodeId id) const;
  /// Path of `id` with the region's representative point.
  SemanticLocation location_of(NodeId id) const;
  /// Throws PathNotInHierarchy, or InvalidLocation when the coordinates fall
  /// outside the bounds of the finest region (when bounds are known).
  void validate(const SemanticLocation& loc) const;

  std::size_t size() const noexcept { return regions_.size(); }
  std::size_t max_depth() const noexcept { return max_depth_; }
  const std::vector<NodeId>& top_level() const noexcept { return roots_; }
  std::vector<NodeId> leaves() const;

 private:
  NodeId add(Region r);
  NodeId parse_region(const Json& j, std::optional<NodeId> parent, std::size_t depth);
  Json region_json(NodeId id) const;

  std::vector<Region> regions_;
  std::vector<NodeId> roots_;
  std::size_t max_depth_ = 0;
};

}  // namespace iotmp::privacy
