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

#include "iotmp/api/management_api.hpp"

#include <charconv>

namespace iotmp::api {

namespace {

constexpr std::size_t kStageLogCapacity = 1 << 18;

TimeMs parse_time(const std::string& text, std::string_view what) {
  TimeMs v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw Error(Errc::BadRequest, std::string(what) + " must be an integer");
  return v;
}

bool truthy(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  return it != q.end() && (it->second == "1" || it->second == "true" || it->second.empty());
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  try {
    return Json::parse(body);
  } catch (const Json::exception& e) {
    throw Error(Errc::BadRequest, std::string("body is not JSON: ") + e.what());
  }
}

Json reading_json(const BehaviouralAttribute& r) {
  Json j{{"value", to_json(r.value)}, {"ts", r.timestamp}};
  if (r.unit) j["unit"] = *r.unit;
  return j;
}

Json admission_view(const security::AgentAdmission& a, const manager::Manager& m) {
  Json j = security::to_json(a);
  for (const auto& r : m.records()) {
    if (r.agentid == a.agentid) j["mtid"] = r.mtid.str();
  }
  return j;
}

}  // namespace

int http_status(Errc code) {
  switch (code) {
    case Errc::Unauthorized:
    case Errc::BadCredentials: return 401;
    case Errc::Forbidden:
    case Errc::RoleForbidden:
    case Errc::NotOwner:
    case Errc::LevelOutOfRange: return 403;
    case Errc::UnknownMT:
    case Errc::UnknownAttribute:
    case Errc::UnknownAgent:
    case Errc::NotFound: return 404;
    case Errc::AppIDTaken:
    case Errc::DuplicatePolicy:
    case Errc::NotPending:
    case Errc::AlreadyKnown: return 409;
    case Errc::DeviceTimeout:
    case Errc::ManagerUnreachable: return 504;
    case Errc::BadRequest:
    case Errc::MalformedValue:
    case Errc::MissingID:
    case Errc::DuplicateAttributeName:
    case Errc::ReservedAttributeName:
    case Errc::InvalidIdentifier:
    case Errc::InvalidPolicy:
    case Errc::InvalidLocation:
    case Errc::PathNotInHierarchy:
    case Errc::MalformedDescriptor:
    case Errc::MalformedTopology:
    case Errc::NotActuatable:
    case Errc::ActuationFailed: return 400;
    default: return 500;
  }
}

net::HttpResponse json_response(int status, const Json& body) {
  net::HttpResponse r;
  r.status = status;
  r.headers["content-type"] = "application/json";
  r.body = body.dump();
  return r;
}

net::HttpResponse error_response(const Error& e) {
  const std::string code(to_string(e.code()));
  std::string detail = e.what();
  if (detail.rfind(code + ": ", 0) == 0) detail.erase(0, code.size() + 2);
  auto r = json_response(http_status(e.code()), Json{{"error", code}, {"detail", detail}});
  if (r.status == 401) r.headers["www-authenticate"] = "Bearer";
  return r;
}

struct ManagementApi::Call {
  std::uint64_t id = 0;
  net::HttpRequest req;
  net::Target target;
  net::HttpReply reply;
  std::optional<TokenClaims> claims;
  bool channel_secure = false;
  bool replied = false;

  void respond(net::HttpResponse r) {
    if (replied) return;
    replied = true;
    reply(std::move(r));
  }
};

ManagementApi::ManagementApi(manager::Manager& manager, ApiConfig config, crypto::RandomSource& random)
    : manager_(manager),
      config_(std::move(config)),
      apps_(manager.store(), random),
      tokens_(config_.server_secret, apps_, config_.token_ttl_ms) {}

net::HttpHandler ManagementApi::handler() {
  return [this](const net::HttpRequest& req, net::HttpReply reply) { handle(req, std::move(reply)); };
}

std::vector<ManagementApi::StageEvent> ManagementApi::stage_log() const {
  std::lock_guard lock(log_mu_);
  return {log_.begin(), log_.end()};
}

void ManagementApi::clear_stage_log() {
  std::lock_guard lock(log_mu_);
  log_.clear();
}

void ManagementApi::stage(const Call& call, std::string_view name, bool ok) {
  std::lock_guard lock(log_mu_);
  if (log_.size() >= kStageLogCapacity) log_.pop_front();
  log_.push_back(StageEvent{call.id, std::string(name), ok});
}

void ManagementApi::handle(const net::HttpRequest& req, net::HttpReply reply) {
  auto call = std::make_shared<Call>();
  {
    std::lock_guard lock(log_mu_);
    call->id = ++next_request_;
  }
  call->req = req;
  call->reply = std::move(reply);
  // A proxy that received the request in plaintext can only downgrade.
  call->channel_secure = req.secure && req.header("x-forwarded-proto").value_or("https") != "http";
  try {
    call->target = net::parse_target(req.target);
    dispatch(call);
  } catch (const Error& e) {
    call->respond(error_response(e));
  } catch (const std::exception& e) {
    call->respond(json_response(500, Json{{"error", "Internal"}, {"detail", e.what()}}));
  }
}

TokenClaims ManagementApi::authenticate(Call& call) {
  const auto auth = call.req.header("authorization");
  std::optional<TokenClaims> claims;
  if (auth && auth->rfind("Bearer ", 0) == 0) {
    try {
      claims = tokens_.verify(std::string_view(*auth).substr(7), manager_.executor().now());
    } catch (const Error&) {
    }
  }
  if (claims) {
    if (auto declared = call.req.header("x-app-id"); declared && *declared != claims->appid.str()) claims.reset();
  }
  stage(call, "verify", claims.has_value());
  if (!claims) throw Error(Errc::Unauthorized, "missing or invalid bearer token");
  call.claims = claims;
  return *claims;
}

void ManagementApi::require_management(Call& call) {
  if (call.claims->role != Role::ManagementApp) {
    throw Error(Errc::RoleForbidden, "reserved for management applications");
  }
}

void ManagementApi::require_owner(Call& call, const Mtid& mtid) {
  auto profile = manager_.security().profile(mtid);
  if (!profile) throw Error(Errc::UnknownMT, mtid.str());
  const auto& actor = call.claims->appid.str();
  if (actor != profile->owner && !manager_.security().is_admin(actor)) {
    throw Error(Errc::NotOwner, actor + " does not own " + mtid.str());
  }
}

void ManagementApi::security_gate(Call& call, const Mtid& mtid) {
  security::PolicyVerdict verdict;
  try {
    verdict = manager_.security().check(call.claims->appid.str(), mtid, call.channel_secure);
  } catch (const Error&) {
    stage(call, "sm", false);
    throw;
  }
  stage(call, "sm", verdict.allowed);
  if (!verdict.allowed) {
    throw Error(Errc::Forbidden, std::string("security check failed at ") + std::string(to_string(verdict.denied_at)));
  }
}

TimeMs ManagementApi::policy_time(const Call& call) const {
  if (config_.what_if_time_override) {
    if (auto t = call.req.header("x-iotmp-time")) return parse_time(*t, "X-IoTMP-Time");
  }
  return manager_.executor().now();
}

void ManagementApi::dispatch(const CallPtr& call) {
  const auto& seg = call->target.segments;
  const auto& method = call->req.method;
  const auto n = seg.size();
  auto is = [&](std::size_t i, std::string_view s) { return i < n && seg[i] == s; };

  if (n == 1 && is(0, "health") && method == "GET") {
    call->respond(json_response(200, Json{{"managerid", manager_.id().str()}, {"status", "ok"}}));
    return;
  }
  if (n == 1 && is(0, "apps") && method == "POST") {
    if (config_.operator_key) {
      const auto key = call->req.header("x-operator-key");
      if (!key || !crypto::constant_time_equal(*key, *config_.operator_key)) {
        throw Error(Errc::Unauthorized, "operator key required");
      }
    }
    const auto body = parse_body(call->req.body);
    std::optional<std::string> appid;
    if (body.contains("appid") && !body["appid"].is_null()) {
      if (!body["appid"].is_string()) throw Error(Errc::BadRequest, "appid must be a string");
      appid = body["appid"].get<std::string>();
    }
    Role role = Role::IotApp;
    if (body.contains("role")) {
      if (!body["role"].is_string()) throw Error(Errc::BadRequest, "role must be a string");
      role = parse_role(body["role"].get<std::string>());
    }
    std::optional<std::string> secret;
    if (body.contains("secret")) {
      if (!body["secret"].is_string()) throw Error(Errc::BadRequest, "secret must be a string");
      secret = body["secret"].get<std::string>();
    }
    auto reg = apps_.register_app(appid, role, manager_.executor().now(), secret);
    call->respond(json_response(201, Json{{"appid", reg.appid.str()},
                                          {"secret", reg.secret},
                                          {"role", std::string(to_string(reg.role))},
                                          {"created_at", reg.created_at}}));
    return;
  }
  if (n == 1 && is(0, "tokens") && method == "POST") {
    const auto body = parse_body(call->req.body);
    if (!body.contains("appid") || !body["appid"].is_string() || !body.contains("secret") ||
        !body["secret"].is_string()) {
      throw Error(Errc::BadRequest, "appid and secret are required");
    }
    const auto now = manager_.executor().now();
    auto token = tokens_.mint(body["appid"].get<std::string>(), body["secret"].get<std::string>(), now);
    call->respond(json_response(200, Json{{"token", token}, {"expires_at", now + tokens_.ttl_ms()}}));
    return;
  }

  authenticate(*call);

  if (is(0, "mt")) {
    if (n == 1 && method == "GET") return list_things(*call);
    if (n < 2) throw Error(Errc::NotFound, call->req.target);
    const Mtid mtid(seg[1]);
    if (n == 2 && method == "DELETE") {
      require_management(*call);
      require_owner(*call, mtid);
      manager_.delete_thing(mtid);
      call->respond(json_response(200, Json{{"deleted", mtid.str()}}));
      return;
    }
    if (n == 3 && is(2, "status") && method == "GET") return get_status(call, mtid);
    if (n == 3 && is(2, "actuation") && method == "POST") return post_actuation(call, mtid);
    if (n == 3 && is(2, "data") && method == "POST") return post_data(*call, mtid);
    if (n == 3 && is(2, "attributes") && method == "PUT") {
      require_management(*call);
      require_owner(*call, mtid);
      auto attrs = management_attributes_from_json(parse_body(call->req.body));
      auto rec = manager_.put_attributes(mtid, attrs);
      call->respond(json_response(200, manager::to_json(rec, manager_.approval_of(rec))));
      return;
    }
    if (n == 4 && is(2, "readings") && method == "DELETE") {
      require_management(*call);
      require_owner(*call, mtid);
      manager::TimeRange range;
      const auto& q = call->target.query;
      if (auto it = q.find("from"); it != q.end()) range.from = parse_time(it->second, "from");
      if (auto it = q.find("to"); it != q.end()) range.to = parse_time(it->second, "to");
      const auto removed = manager_.delete_readings(mtid, seg[3], range);
      call->respond(json_response(200, Json{{"deleted", removed}}));
      return;
    }
    if (n == 3 && method == "GET") return get_attribute(call, mtid, seg[2]);
    throw Error(Errc::NotFound, call->req.method + " " + call->req.target);
  }
  if (n == 1 && is(0, "alerts") && method == "GET") return list_alerts(*call);
  if (n == 2 && is(0, "profiles")) return profiles(*call, Mtid(seg[1]));
  if (n == 2 && is(0, "policies")) return policies(*call, Mtid(seg[1]));
  if (n == 2 && is(0, "agents") && is(1, "pending") && method == "GET") {
    require_management(*call);
    Json out = Json::array();
    for (const auto& a : manager_.security().pending()) out.push_back(admission_view(a, manager_));
    call->respond(json_response(200, out));
    return;
  }
  if (n == 3 && is(0, "agents") && method == "POST" && (is(2, "approve") || is(2, "revoke"))) {
    require_management(*call);
    const AgentId agentid(seg[1]);
    const auto& actor = call->claims->appid.str();
    bool allowed = manager_.security().is_admin(actor);
    for (const auto& r : manager_.records()) {
      if (r.agentid == agentid) {
        auto p = manager_.security().profile(r.mtid);
        if (p && p->owner == actor) allowed = true;
      }
    }
    if (!allowed) throw Error(Errc::NotOwner, actor + " may not change admission of " + agentid.str());
    if (is(2, "approve")) {
      manager_.approve_agent(agentid, actor);
    } else {
      manager_.revoke_agent(agentid, actor);
    }
    call->respond(json_response(200, admission_view(*manager_.security().admission(agentid), manager_)));
    return;
  }
  throw Error(Errc::NotFound, call->req.method + " " + call->req.target);
}

void ManagementApi::list_things(Call& call) {
  Json out = Json::array();
  const bool management = call.claims->role == Role::ManagementApp;
  for (const auto& r : manager_.records()) {
    if (!management) {
      auto p = manager_.security().profile(r.mtid);
      if (!p || !security::check_policy(*p, call.claims->appid.str(), call.channel_secure).allowed) continue;
    }
    Json j = manager::to_json(r, manager_.approval_of(r));
    // Locations only leave through the privacy gate.
    Json attrs = Json::array();
    for (const auto& a : j["attributes"]) {
      if (!is_location_attribute(a["name"].get<std::string>())) attrs.push_back(a);
    }
    j["attributes"] = attrs;
    out.push_back(std::move(j));
  }
  call.respond(json_response(200, out));
}

void ManagementApi::list_alerts(Call& call) {
  std::optional<Mtid> filter;
  if (auto it = call.target.query.find("mtid"); it != call.target.query.end()) filter = Mtid(it->second);
  Json out = Json::array();
  std::map<Mtid, bool> allowed;
  for (const auto& a : manager_.alerts(filter)) {
    auto [it, fresh] = allowed.try_emplace(a.mtid, false);
    if (fresh) {
      auto p = manager_.security().profile(a.mtid);
      it->second = p && security::check_policy(*p, call.claims->appid.str(), call.channel_secure).allowed;
    }
    if (!it->second || is_location_attribute(a.attribute)) continue;
    out.push_back(manager::to_json(a));
  }
  stage(call, "sm", true);
  call.respond(json_response(200, out));
}

void ManagementApi::get_attribute(const CallPtr& call, const Mtid& mtid, const std::string& attribute) {
  security_gate(*call, mtid);

  std::optional<int> level;
  if (is_location_attribute(attribute)) {
    auto rec = manager_.record(mtid);
    if (!rec) throw Error(Errc::UnknownMT, mtid.str());
    if (!rec->loc) {
      stage(*call, "pm", false);
      throw Error(Errc::UnknownAttribute, "no location known for " + mtid.str());
    }
    privacy::RequestContext ctx{call->claims->appid, mtid, policy_time(*call), *rec->loc};
    const auto decision = manager_.privacy().decide(ctx);
    stage(*call, "pm", decision.disclose());
    if (!decision.disclose()) throw Error(Errc::Forbidden, "location disclosure denied by policy");
    level = decision.level;
  }

  auto shape = [this, level](AttributeValue v) -> AttributeValue {
    if (level) {
      if (const auto* loc = std::get_if<SemanticLocation>(&v)) return privacy::obfuscate(*loc, *level, manager_.hierarchy());
    }
    return v;
  };

  const auto& q = call->target.query;
  if (truthy(q, "live")) {
    stage(*call, "device", true);
    manager_.get_live(mtid, attribute, [call, mtid, attribute, level, shape](Result<std::vector<BehaviouralAttribute>> r) {
      try {
        if (!r.ok()) throw r.error();
        Json readings = Json::array();
        for (auto v : r.value()) {
          v.value = shape(std::move(v.value));
          readings.push_back(reading_json(v));
        }
        Json body{{"mtid", mtid.str()}, {"attribute", attribute}, {"readings", readings}, {"live", true}};
        body["latest"] = readings.empty() ? Json(nullptr) : readings.back();
        if (level) body["level"] = *level;
        call->respond(json_response(200, body));
      } catch (const Error& e) {
        call->respond(error_response(e));
      }
    });
    return;
  }

  manager::TimeRange range;
  if (auto it = q.find("from"); it != q.end()) range.from = parse_time(it->second, "from");
  if (auto it = q.find("to"); it != q.end()) range.to = parse_time(it->second, "to");
  manager::QueryResult result;
  try {
    result = manager_.query_mt(mtid, attribute, range);
  } catch (const Error&) {
    stage(*call, "store", false);
    throw;
  }
  stage(*call, "store", true);
  Json body{{"mtid", mtid.str()}, {"attribute", attribute}};
  if (result.management) {
    body["value"] = to_json(shape(result.management->value));
    if (result.management->unit) body["unit"] = *result.management->unit;
  } else {
    Json readings = Json::array();
    for (auto& r : result.readings) {
      r.value = shape(std::move(r.value));
      readings.push_back(reading_json(r));
    }
    body["latest"] = readings.empty() ? Json(nullptr) : readings.back();
    body["readings"] = std::move(readings);
  }
  if (level) body["level"] = *level;
  call->respond(json_response(200, body));
}

void ManagementApi::post_actuation(const CallPtr& call, const Mtid& mtid) {
  security_gate(*call, mtid);
  const auto body = parse_body(call->req.body);
  if (!body.contains("attribute") || !body["attribute"].is_string() || !body.contains("value") ||
      !body["value"].is_string()) {
    throw Error(Errc::BadRequest, "actuation needs string attribute and value");
  }
  stage(*call, "device", true);
  manager_.actuate(mtid, body["attribute"].get<std::string>(), body["value"].get<std::string>(),
                   [call, mtid](Result<manager::SetResult> r) {
                     if (!r.ok()) {
                       call->respond(error_response(r.error()));
                       return;
                     }
                     call->respond(json_response(200, Json{{"mtid", mtid.str()},
                                                           {"attribute", r.value().attribute},
                                                           {"state", r.value().state},
                                                           {"result", "ok"}}));
                   });
}

void ManagementApi::post_data(Call& call, const Mtid& mtid) {
  security_gate(call, mtid);
  auto body = parse_body(call.req.body);
  Json list = body.contains("readings") ? body["readings"] : Json::array({body});
  if (!list.is_array()) throw Error(Errc::BadRequest, "readings must be an array");
  std::vector<BehaviouralAttribute> readings;
  for (const auto& e : list) {
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("value")) {
      throw Error(Errc::BadRequest, "each reading needs name and value");
    }
    BehaviouralAttribute r;
    r.name = e["name"].get<std::string>();
    r.value = value_from_json(e["value"]);
    if (e.contains("unit")) r.unit = e["unit"].get<std::string>();
    r.timestamp = e.contains("ts") ? e["ts"].get<TimeMs>() : manager_.executor().now();
    readings.push_back(std::move(r));
  }
  const auto n = readings.size();
  manager_.contribute(mtid, call.claims->appid.str(), std::move(readings));
  stage(call, "store", true);
  call.respond(json_response(201, Json{{"stored", n}}));
}

void ManagementApi::get_status(const CallPtr& call, const Mtid& mtid) {
  if (call->claims->role != Role::ManagementApp) security_gate(*call, mtid);
  stage(*call, "device", true);
  manager_.mgmt_status(mtid, [call](Result<manager::ManagementStatus> r) {
    if (!r.ok()) {
      call->respond(error_response(r.error()));
      return;
    }
    call->respond(json_response(200, manager::to_json(r.value())));
  });
}

void ManagementApi::profiles(Call& call, const Mtid& mtid) {
  require_management(call);
  require_owner(call, mtid);
  auto& sec = manager_.security();
  const auto& actor = call.claims->appid.str();
  if (call.req.method == "GET") {
    call.respond(json_response(200, security::to_json(*sec.profile(mtid))));
    return;
  }
  if (call.req.method != "PUT") throw Error(Errc::NotFound, call.req.method + " " + call.req.target);
  const auto body = parse_body(call.req.body);
  if (!body.is_object()) throw Error(Errc::BadRequest, "profile body must be an object");
  security::SecurityProfile out;
  try {
    if (body.contains("authorized_entities")) {
      const auto entities = body["authorized_entities"].get<std::set<std::string>>();
      const bool secure = body.contains("secure_only") ? body["secure_only"].get<bool>() : sec.profile(mtid)->secure_only;
      out = sec.replace_profile(mtid, entities, secure, actor);
    } else {
      out = *sec.profile(mtid);
      if (body.contains("add")) out = sec.edit_profile(mtid, security::ProfileChange::add(body["add"].get<std::string>()), actor);
      if (body.contains("remove")) {
        out = sec.edit_profile(mtid, security::ProfileChange::remove(body["remove"].get<std::string>()), actor);
      }
      if (body.contains("secure_only")) {
        out = sec.edit_profile(mtid, security::ProfileChange::set_secure_only(body["secure_only"].get<bool>()), actor);
      }
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::BadRequest, e.what());
  }
  call.respond(json_response(200, security::to_json(out)));
}

void ManagementApi::policies(Call& call, const Mtid& mtid) {
  require_management(call);
  require_owner(call, mtid);
  if (call.req.method == "GET") {
    Json out = Json::array();
    if (auto snap = manager_.privacy().policies(mtid)) {
      for (const auto& p : *snap) out.push_back(privacy::to_json(p));
    }
    call.respond(json_response(200, out));
    return;
  }
  if (call.req.method != "PUT") throw Error(Errc::NotFound, call.req.method + " " + call.req.target);
  auto body = parse_body(call.req.body);
  Json list = body.is_object() && body.contains("policies") ? body["policies"] : body;
  if (!list.is_array()) throw Error(Errc::BadRequest, "policies must be an array");
  std::vector<privacy::DisclosurePolicy> set;
  std::int64_t next_id = 1;
  for (auto p : list) {
    if (p.is_object() && !p.contains("mtid")) p["mtid"] = mtid.str();
    // Policies without an id are numbered by position.
    if (p.is_object() && !p.contains("id")) p["id"] = next_id;
    ++next_id;
    auto policy = privacy::policy_from_json(p);
    if (policy.mtid != mtid) throw Error(Errc::InvalidPolicy, "policy " + std::to_string(policy.id) + " names another MT");
    set.push_back(std::move(policy));
  }
  try {
    manager_.set_policies(mtid, std::move(set));
  } catch (const Error& e) {
    // Out-of-range levels are a request error when editing.
    if (e.code() == Errc::LevelOutOfRange) throw Error(Errc::InvalidPolicy, e.what());
    throw;
  }
  Json out = Json::array();
  for (const auto& p : *manager_.privacy().policies(mtid)) out.push_back(privacy::to_json(p));
  call.respond(json_response(200, out));
}

}  // namespace iotmp::api
