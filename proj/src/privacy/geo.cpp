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

#include "iotmp/privacy/geo.hpp"

#include <algorithm>
#include <set>

namespace iotmp::privacy {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::ConfigInvalid, "hierarchy: " + why); }

BoundingBox slice(const BoundingBox& box, std::size_t index, std::size_t count, bool along_lat) {
  BoundingBox out = box;
  if (along_lat) {
    const double step = (box.max_lat - box.min_lat) / static_cast<double>(count);
    out.min_lat = box.min_lat + step * static_cast<double>(index);
    out.max_lat = index + 1 == count ? box.max_lat : out.min_lat + step;
  } else {
    const double step = (box.max_lon - box.min_lon) / static_cast<double>(count);
    out.min_lon = box.min_lon + step * static_cast<double>(index);
    out.max_lon = index + 1 == count ? box.max_lon : out.min_lon + step;
  }
  return out;
}

}  // namespace

GeoHierarchy::NodeId GeoHierarchy::add(Region r) {
  const NodeId id = regions_.size();
  max_depth_ = std::max(max_depth_, r.depth);
  if (r.parent) {
    regions_[*r.parent].children.push_back(id);
  } else {
    roots_.push_back(id);
  }
  regions_.push_back(std::move(r));
  return id;
}

GeoHierarchy::NodeId GeoHierarchy::parse_region(const Json& j, std::optional<NodeId> parent,
                                                std::size_t depth) {
  if (!j.is_object()) bad("region must be an object");
  if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty()) {
    bad("region without name");
  }
  if (!j.contains("lat") || !j["lat"].is_number() || !j.contains("lon") || !j["lon"].is_number()) {
    bad("region '" + j["name"].get<std::string>() + "' without lat/lon");
  }
  Region r;
  r.name = j["name"].get<std::string>();
  r.lat = j["lat"].get<double>();
  r.lon = j["lon"].get<double>();
  r.parent = parent;
  r.depth = depth;
  if (j.contains("bounds")) {
    const auto& b = j["bounds"];
    if (!b.is_array() || b.size() != 4 ||
        !std::all_of(b.begin(), b.end(), [](const Json& x) { return x.is_number(); })) {
      bad("bounds must be [min_lat, min_lon, max_lat, max_lon]");
    }
    r.bounds = BoundingBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()};
    if (!r.bounds->contains(r.lat, r.lon)) bad("representative point of '" + r.name + "' outside bounds");
    if (parent && regions_[*parent].bounds && !regions_[*parent].bounds->contains(*r.bounds)) {
      bad("bounds of '" + r.name + "' escape its parent");
    }
  }
  if (parent && regions_[*parent].bounds && !regions_[*parent].bounds->contains(r.lat, r.lon)) {
    bad("representative point of '" + r.name + "' outside its parent");
  }
  const NodeId id = add(std::move(r));
  if (j.contains("children")) {
    if (!j["children"].is_array()) bad("children must be an array");
    std::set<std::string> names;
    for (const auto& c : j["children"]) {
      const NodeId child = parse_region(c, id, depth + 1);
      if (!names.insert(regions_[child].name).second) bad("duplicate sibling '" + regions_[child].name + "'");
    }
  }
  return id;
}

GeoHierarchy GeoHierarchy::from_json(const Json& j) {
  GeoHierarchy h;
  std::set<std::string> names;
  if (j.is_array()) {
    for (const auto& r : j) {
      const NodeId id = h.parse_region(r, std::nullopt, 1);
      if (!names.insert(h.regions_[id].name).second) bad("duplicate top-level region");
    }
  } else {
    h.parse_region(j, std::nullopt, 1);
  }
  if (h.regions_.empty()) bad("no regions");
  return h;
}

GeoHierarchy GeoHierarchy::bundled() {
  static const char* const kCountries[] = {"Australis", "Borealis", "Centralia"};
  static const char* const kStates[] = {"North", "South", "East", "West"};
  static const char* const kCities[] = {"Harbour", "Ridge", "Vale"};
  GeoHierarchy h;
  const BoundingBox world{-60.0, -180.0, 60.0, 180.0};
  for (std::size_t c = 0; c < 3; ++c) {
    Region country;
    country.name = kCountries[c];
    country.bounds = slice(world, c, 3, false);
    country.lat = (country.bounds->min_lat + country.bounds->max_lat) / 2;
    country.lon = (country.bounds->min_lon + country.bounds->max_lon) / 2;
    country.depth = 1;
    const NodeId cid = h.add(country);
    for (std::size_t s = 0; s < 4; ++s) {
      Region state;
      state.name = kStates[s];
      state.bounds = slice(*h.regions_[cid].bounds, s, 4, true);
      state.lat = (state.bounds->min_lat + state.bounds->max_lat) / 2;
      state.lon = (state.bounds->min_lon + state.bounds->max_lon) / 2;
      state.parent = cid;
      state.depth = 2;
      const NodeId sid = h.add(state);
      for (std::size_t k = 0; k < 3; ++k) {
        Region city;
        city.name = kCities[k];
        city.bounds = slice(*h.regions_[sid].bounds, k, 3, false);
        city.lat = (city.bounds->min_lat + city.bounds->max_lat) / 2;
        city.lon = (city.bounds->min_lon + city.bounds->max_lon) / 2;
        city.parent = sid;
        city.depth = 3;
        h.add(city);
      }
    }
  }
  return h;
}

GeoHierarchy GeoHierarchy::synthetic(std::size_t depth, std::size_t fanout) {
  if (depth == 0 || fanout == 0) bad("synthetic hierarchy needs depth and fanout >= 1");
  GeoHierarchy h;
  const BoundingBox world{-80.0, -170.0, 80.0, 170.0};
  std::vector<NodeId> frontier;
  for (std::size_t i = 0; i < fanout; ++i) {
    Region r;
    r.name = "L1-" + std::to_string(i);
    r.bounds = slice(world, i, fanout, false);
    r.lat = (r.bounds->min_lat + r.bounds->max_lat) / 2;
    r.lon = (r.bounds->min_lon + r.bounds->max_lon) / 2;
    frontier.push_back(h.add(r));
  }
  for (std::size_t d = 2; d <= depth; ++d) {
    std::vector<NodeId> next;
    for (NodeId parent : frontier) {
      for (std::size_t i = 0; i < fanout; ++i) {
        Region r;
        r.name = "L" + std::to_string(d) + "-" + std::to_string(i);
        r.bounds = slice(*h.regions_[parent].bounds, i, fanout, d % 2 == 0);
        r.lat = (r.bounds->min_lat + r.bounds->max_lat) / 2;
        r.lon = (r.bounds->min_lon + r.bounds->max_lon) / 2;
        r.parent = parent;
        r.depth = d;
        next.push_back(h.add(r));
      }
    }
    frontier = std::move(next);
  }
  return h;
}

Json GeoHierarchy::region_json(NodeId id) const {
  const auto& r = regions_[id];
  Json j{{"name", r.name}, {"lat", r.lat}, {"lon", r.lon}};
  if (r.bounds) j["bounds"] = {r.bounds->min_lat, r.bounds->min_lon, r.bounds->max_lat, r.bounds->max_lon};
  if (!r.children.empty()) {
    Json kids = Json::array();
    for (NodeId c : r.children) kids.push_back(region_json(c));
    j["children"] = std::move(kids);
  }
  return j;
}

Json GeoHierarchy::to_json() const {
  Json out = Json::array();
  for (NodeId r : roots_) out.push_back(region_json(r));
  return out;
}

std::optional<GeoHierarchy::NodeId> GeoHierarchy::resolve(const std::vector<std::string>& path) const {
  if (path.empty()) return std::nullopt;
  const std::vector<NodeId>* level = &roots_;
  std::optional<NodeId> current;
  for (const auto& name : path) {
    auto it = std::find_if(level->begin(), level->end(),
                           [&](NodeId id) { return regions_[id].name == name; });
    if (it == level->end()) return std::nullopt;
    current = *it;
    level = &regions_[*it].children;
  }
  return current;
}

std::vector<std::string> GeoHierarchy::path_of(NodeId id) const {
  std::vector<std::string> path;
  std::optional<NodeId> cur = id;
  while (cur) {
    path.push_back(regions_.at(*cur).name);
    cur = regions_[*cur].parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

SemanticLocation GeoHierarchy::location_of(NodeId id) const {
  const auto& r = regions_.at(id);
  return SemanticLocation{path_of(id), r.lat, r.lon};
}

void GeoHierarchy::validate(const SemanticLocation& loc) const {
  auto id = resolve(loc.path);
  if (!id) throw Error(Errc::PathNotInHierarchy, describe(AttributeValue{loc}));
  const auto& r = regions_[*id];
  if (r.bounds && !r.bounds->contains(loc.lat, loc.lon)) {
    throw Error(Errc::InvalidLocation, "coordinates outside " + r.name);
  }
}

std::vector<GeoHierarchy::NodeId> GeoHierarchy::leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < regions_.size(); ++i) {
    if (regions_[i].children.empty()) out.push_back(i);
  }
  return out;
}

}  // namespace iotmp::privacy
