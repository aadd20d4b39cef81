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

// iotmp: operator command line for the platform. Runs services, registers
// applications, issues API calls and runs simulated scenarios.
//
// Exit codes: 0 success (2xx), 1 configuration or usage error, 2 request
// refused (4xx), 3 server or network failure (5xx, unreachable).

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "iotmp/agent/agent.hpp"
#include "iotmp/api/management_api.hpp"
#include "iotmp/live/live.hpp"
#include "iotmp/manager/manager.hpp"
#include "iotmp/moms/moms.hpp"
#include "iotmp/net/runtime.hpp"
#include "iotmp/sim/sim.hpp"

namespace {

using iotmp::Errc;
using iotmp::Error;
using iotmp::Json;
using iotmp::TimeMs;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRefused = 2;
constexpr int kExitFailure = 3;

struct Endpoint {
  std::string address;  // host:port
  bool secure = true;
};

/// Accepts "https://host:port", "http://host:port" or "host:port" (TLS).
Endpoint parse_endpoint(const std::string& url) {
  Endpoint e;
  std::string rest = url;
  if (rest.rfind("https://", 0) == 0) {
    rest = rest.substr(8);
  } else if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
    e.secure = false;
  }
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  std::string host;
  int port = 0;
  if (!iotmp::live::split_host_port(rest, host, port)) throw Error(Errc::ConfigInvalid, "bad endpoint '" + url + "'");
  e.address = rest;
  return e;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigInvalid, path + ": " + e.what());
  }
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

int exit_code_for(int status) {
  if (status >= 200 && status < 300) return kExitOk;
  if (status >= 400 && status < 500) return kExitRefused;
  return kExitFailure;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigInvalid:
    case Errc::BindFailure:
    case Errc::ScriptInvalid:
      return kExitConfig;
    default:
      return exit_code_for(iotmp::api::http_status(code));
  }
}

// ---------------------------------------------------------------------------
// output

std::string cell(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "-";
  return v.dump();
}

void render_table(const Json& body, std::ostream& out) {
  if (body.is_array()) {
    if (body.empty()) {
      out << "(none)\n";
      return;
    }
    std::vector<std::string> columns;
    for (const auto& row : body) {
      if (!row.is_object()) {
        out << cell(row) << '\n';
        continue;
      }
      for (const auto& [k, _] : row.items()) {
        if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
      }
    }
    if (columns.empty()) return;
    std::vector<std::size_t> width(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      width[c] = columns[c].size();
      for (const auto& row : body) {
        if (row.is_object() && row.contains(columns[c])) width[c] = std::max(width[c], cell(row[columns[c]]).size());
      }
      width[c] = std::min<std::size_t>(width[c], 48);
    }
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        auto text = cells[c].size() > width[c] ? cells[c].substr(0, width[c] - 1) + "~" : cells[c];
        out << text << std::string(width[c] - text.size() + 2, ' ');
      }
      out << '\n';
    };
    line(columns);
    for (const auto& row : body) {
      if (!row.is_object()) continue;
      std::vector<std::string> cells;
      for (const auto& c : columns) cells.push_back(row.contains(c) ? cell(row[c]) : "");
      line(cells);
    }
    return;
  }
  if (body.is_object()) {
    std::size_t w = 0;
    for (const auto& [k, _] : body.items()) w = std::max(w, k.size());
    for (const auto& [k, v] : body.items()) out << k << std::string(w - k.size() + 2, ' ') << cell(v) << '\n';
    return;
  }
  out << cell(body) << '\n';
}

// ---------------------------------------------------------------------------
// request plumbing

struct Globals {
  std::string manager;
  std::string moms;
  std::string token_file;
  std::string config;
  std::string operator_key;
  std::string ca_file;
  bool json = false;
  TimeMs timeout_ms = 15'000;

  /// Fills unset fields from the --config file {manager, moms, token, format}.
  void apply_config() {
    if (config.empty()) return;
    const auto j = read_json_file(config);
    if (manager.empty()) manager = j.value("manager", std::string());
    if (moms.empty()) moms = j.value("moms", std::string());
    if (token_file.empty()) token_file = j.value("token", std::string());
    if (!json) json = j.value("format", std::string("table")) == "json";
  }

  std::string token() const {
    if (token_file.empty()) throw Error(Errc::ConfigInvalid, "no token: pass --token FILE or set IOTMP_TOKEN");
    return trim(read_file(token_file));
  }
};

struct Reply {
  int status = 0;
  Json body;
  std::string raw;
};

Reply call(const Globals& g, const std::string& url, const std::string& method, const std::string& target,
           const std::optional<std::string>& token, const Json& body = nullptr,
           std::map<std::string, std::string> headers = {}) {
  if (url.empty()) throw Error(Errc::ConfigInvalid, "no endpoint: pass --manager or --moms");
  const auto ep = parse_endpoint(url);
  iotmp::net::HttpRequest req;
  req.method = method;
  req.target = target;
  req.headers = std::move(headers);
  req.secure = ep.secure;
  if (token) req.headers["authorization"] = "Bearer " + *token;
  if (!body.is_null()) {
    req.headers["content-type"] = "application/json";
    req.body = body.dump();
  }
  auto resp = iotmp::live::LiveHttpClient::fetch(ep.address, req, g.timeout_ms, g.ca_file);
  if (!resp) throw Error(Errc::ManagerUnreachable, url);
  Reply r;
  r.status = resp->status;
  r.raw = resp->body;
  try {
    r.body = resp->body.empty() ? Json() : Json::parse(resp->body);
  } catch (const Json::exception&) {
    r.body = resp->body;
  }
  return r;
}

/// Prints the reply (raw JSON or a table) and maps its status to an exit code.
int show(const Globals& g, const Reply& r) {
  const bool ok = r.status >= 200 && r.status < 300;
  auto& out = ok ? std::cout : std::cerr;
  if (g.json) {
    out << r.raw << '\n';
  } else if (!ok && r.body.is_object() && r.body.contains("error")) {
    out << "error " << r.status << ' ' << cell(r.body["error"]);
    if (r.body.contains("detail")) out << ": " << cell(r.body["detail"]);
    out << '\n';
  } else {
    render_table(r.body, out);
  }
  return exit_code_for(r.status);
}

/// Application calls go through the MoMs when one is configured.
const std::string& app_endpoint(const Globals& g) { return g.moms.empty() ? g.manager : g.moms; }

// ---------------------------------------------------------------------------
// services

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

std::shared_ptr<const iotmp::privacy::GeoHierarchy> load_hierarchy(const Json& cfg) {
  if (!cfg.contains("hierarchy")) {
    return std::make_shared<iotmp::privacy::GeoHierarchy>(iotmp::privacy::GeoHierarchy::bundled());
  }
  return std::make_shared<iotmp::privacy::GeoHierarchy>(
      iotmp::privacy::GeoHierarchy::from_json(read_json_file(cfg["hierarchy"].get<std::string>())));
}

iotmp::live::HttpServerHost::Options listener_options(const Json& j) {
  iotmp::live::HttpServerHost::Options o;
  o.host = j.value("host", o.host);
  o.tls_port = j.value("tls_port", 0);
  o.plain_port = j.value("plain_port", 0);
  if (o.tls_port == 0 && o.plain_port == 0) throw Error(Errc::ConfigInvalid, "no listener: set tls_port and/or plain_port");
  return o;
}

int run_manager(const std::string& path) {
  const auto cfg = read_json_file(path);
  auto mc = iotmp::manager::manager_config_from_json(cfg.at("manager"));
  if (mc.moms_address) mc.moms_address = parse_endpoint(*mc.moms_address).address;
  const auto& api_cfg = cfg.value("api", Json::object());
  iotmp::api::ApiConfig ac;
  ac.server_secret = api_cfg.value("server_secret", std::string());
  if (ac.server_secret.size() < 16) throw Error(Errc::ConfigInvalid, "api.server_secret must be at least 16 characters");
  ac.token_ttl_ms = api_cfg.value("token_ttl_ms", ac.token_ttl_ms);
  ac.what_if_time_override = api_cfg.value("what_if_time_override", false);
  if (api_cfg.contains("operator_key")) ac.operator_key = api_cfg["operator_key"].get<std::string>();
  auto hierarchy = load_hierarchy(cfg);

  block_signals();
  iotmp::live::AsioExecutor executor;
  executor.start();
  iotmp::live::TcpFrameTransport transport(executor);
  iotmp::live::LiveHttpClient http(executor, api_cfg.value("ca_file", std::string()));
  iotmp::crypto::SystemRandom random;
  std::unique_ptr<iotmp::manager::Manager> manager;
  std::unique_ptr<iotmp::api::ManagementApi> api;
  executor.run_sync([&] {
    manager = std::make_unique<iotmp::manager::Manager>(mc, executor, transport, &http, hierarchy);
    api = std::make_unique<iotmp::api::ManagementApi>(*manager, ac, random);
    manager->start();
  });
  auto identity = iotmp::live::load_tls_identity(api_cfg.value("tls_cert", std::string()),
                                                 api_cfg.value("tls_key", std::string()), mc.managerid.str());
  iotmp::live::HttpServerHost server(executor, api->handler(), listener_options(api_cfg), identity);
  server.start();
  std::cout << "ready manager " << mc.managerid << " agents=" << mc.agent_address << " https=" << server.tls_port()
            << " http=" << server.plain_port() << std::endl;
  wait_for_signal();
  server.stop();
  executor.run_sync([&] {
    api.reset();
    manager.reset();
  });
  executor.stop();
  return kExitOk;
}

int run_moms(const std::string& path) {
  const auto cfg = read_json_file(path);
  auto mc = iotmp::moms::moms_config_from_json(cfg.at("moms"));
  const auto& listen = cfg.value("listen", Json::object());
  block_signals();
  iotmp::live::AsioExecutor executor;
  executor.start();
  iotmp::live::LiveHttpClient http(executor, listen.value("ca_file", std::string()));
  std::unique_ptr<iotmp::moms::Moms> moms;
  executor.run_sync([&] { moms = std::make_unique<iotmp::moms::Moms>(mc, executor, http); });
  auto identity = iotmp::live::load_tls_identity(listen.value("tls_cert", std::string()),
                                                 listen.value("tls_key", std::string()), "moms");
  iotmp::live::HttpServerHost server(executor, moms->handler(), listener_options(listen), identity);
  server.start();
  std::cout << "ready moms https=" << server.tls_port() << " http=" << server.plain_port() << std::endl;
  wait_for_signal();
  server.stop();
  executor.run_sync([&] { moms.reset(); });
  executor.stop();
  return kExitOk;
}

int run_agent(const std::string& path) {
  auto ac = iotmp::agent::agent_config_from_json(read_json_file(path));
  block_signals();
  iotmp::live::AsioExecutor executor;
  executor.start();
  iotmp::live::TcpFrameTransport transport(executor);
  std::unique_ptr<iotmp::agent::Agent> agent;
  const auto mtid = ac.descriptor.id().str();
  executor.run_sync([&] {
    agent = std::make_unique<iotmp::agent::Agent>(std::move(ac), executor, transport);
    agent->start();
  });
  std::cout << "ready agent " << mtid << std::endl;
  wait_for_signal();
  executor.run_sync([&] { agent.reset(); });
  executor.stop();
  return kExitOk;
}

int run_fleet(std::size_t n, std::size_t managers, TimeMs duration_ms, std::uint64_t seed, const std::string& join,
              const std::string& profile, bool json) {
  Json script{{"seed", seed}, {"duration_ms", duration_ms}, {"managers", Json::array()}};
  for (std::size_t i = 1; i <= managers; ++i) script["managers"].push_back(Json{{"managerid", "m" + std::to_string(i)}});
  script["fleets"] = Json::array({Json{{"count", n}, {"join", join}, {"profile", profile}}});
  const auto s = iotmp::sim::script_from_json(script);
  iotmp::sim::SimWorld world(s);
  std::cout << "launched " << n << " agents on " << managers << " simulated managers" << std::endl;
  world.run_until(s.start_time + s.duration_ms);
  Json summary{{"agents", n}, {"records", world.total_records()}, {"trace_digest", world.trace().digest()}};
  Json per = Json::object();
  for (const auto& id : world.manager_ids()) per[id] = world.manager(id).record_count();
  summary["per_manager"] = per;
  std::size_t registered = 0;
  for (auto* a : world.agents()) registered += a->phase() == iotmp::agent::Phase::Registered ? 1 : 0;
  summary["registered"] = registered;
  if (json) {
    std::cout << summary.dump() << '\n';
  } else {
    render_table(summary, std::cout);
  }
  return kExitOk;
}

int run_scenario_file(const std::string& path, bool json, const std::string& trace_out) {
  const auto script = iotmp::sim::script_from_json(read_json_file(path));
  const auto report = iotmp::sim::run_scenario(script);
  if (!trace_out.empty()) std::ofstream(trace_out) << report.trace_text;
  if (json) {
    std::cout << report.to_json().dump() << '\n';
  } else {
    for (const auto& p : report.probes) {
      std::cout << (p.passed ? "PASS " : "FAIL ") << p.name << " (t=" << p.at << ", status " << p.status << ")";
      if (!p.passed) std::cout << ": " << p.detail;
      std::cout << '\n';
    }
    std::cout << "records " << report.records << ", trace events " << report.trace_events << ", digest "
              << report.trace_digest << '\n';
  }
  return report.all_passed() ? kExitOk : kExitRefused;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iotmp: operate managers, the MoMs, agents and simulated deployments"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--manager", g.manager, "Manager API URL (https://host:port)")->envname("IOTMP_MANAGER");
  app.add_option("--moms", g.moms, "MoMs URL; application calls are routed through it")->envname("IOTMP_MOMS");
  app.add_option("--token", g.token_file, "File holding the bearer token")->envname("IOTMP_TOKEN");
  app.add_option("--config", g.config, "Config file (service config for `run`)")->envname("IOTMP_CONFIG");
  app.add_option("--ca-file", g.ca_file, "CA bundle for verifying TLS peers")->envname("IOTMP_CA_FILE");
  app.add_option("--timeout-ms", g.timeout_ms, "Request timeout")->envname("IOTMP_TIMEOUT_MS");
  app.add_flag("--json", g.json, "Print raw JSON instead of tables")->envname("IOTMP_JSON");

  std::function<int()> action;

  // run
  auto* run = app.add_subcommand("run", "Run a service in the foreground");
  run->require_subcommand(1);
  run->add_subcommand("manager", "Run a manager with its API listeners")->callback([&] {
    action = [&] { return run_manager(g.config); };
  });
  run->add_subcommand("moms", "Run the Manager of Managers")->callback([&] {
    action = [&] { return run_moms(g.config); };
  });
  run->add_subcommand("agent", "Run one agent")->callback([&] { action = [&] { return run_agent(g.config); }; });
  auto* fleet = run->add_subcommand("fleet", "Run a simulated fleet on the simulated transport");
  std::size_t fleet_n = 30;
  std::size_t fleet_managers = 3;
  TimeMs fleet_duration = 30'000;
  std::uint64_t fleet_seed = 1;
  std::string fleet_join = "direct";
  std::string fleet_profile = "thermometer";
  fleet->add_option("-n,--count", fleet_n, "Number of agents")->check(CLI::PositiveNumber);
  fleet->add_option("--managers", fleet_managers, "Number of managers")->check(CLI::PositiveNumber);
  fleet->add_option("--duration-ms", fleet_duration, "Simulated run time");
  fleet->add_option("--seed", fleet_seed, "Simulation seed");
  fleet->add_option("--join", fleet_join, "direct or associate")->check(CLI::IsMember({"direct", "associate"}));
  fleet->add_option("--profile", fleet_profile, "Device profile");
  fleet->callback([&] {
    action = [&] {
      return run_fleet(fleet_n, fleet_managers, fleet_duration, fleet_seed, fleet_join, fleet_profile, g.json);
    };
  });

  // app
  auto* appcmd = app.add_subcommand("app", "Application credentials");
  appcmd->require_subcommand(1);
  auto* reg = appcmd->add_subcommand("register", "Register an application and print its AppID and secret once");
  std::string reg_appid;
  std::string reg_role = "iot_app";
  std::string reg_secret_out;
  reg->add_option("appid", reg_appid, "Requested AppID (generated when omitted)");
  reg->add_option("--role", reg_role, "iot_app or management_app")->check(CLI::IsMember({"iot_app", "management_app"}));
  reg->add_option("--secret-out", reg_secret_out, "Write the secret to this file instead of stdout");
  reg->add_option("--operator-key", g.operator_key, "Operator key for POST /apps")->envname("IOTMP_OPERATOR_KEY");
  reg->callback([&] {
    action = [&] {
      Json body{{"role", reg_role}};
      if (!reg_appid.empty()) body["appid"] = reg_appid;
      std::map<std::string, std::string> headers;
      if (!g.operator_key.empty()) headers["x-operator-key"] = g.operator_key;
      auto r = call(g, g.manager, "POST", "/apps", std::nullopt, body, headers);
      if (r.status != 201 || reg_secret_out.empty()) return show(g, r);
      std::ofstream(reg_secret_out) << r.body["secret"].get<std::string>() << '\n';
      r.body.erase("secret");
      r.raw = r.body.dump();
      return show(g, r);
    };
  });
  auto* tok = appcmd->add_subcommand("token", "Exchange AppID and secret for a bearer token");
  std::string tok_appid;
  std::string tok_secret_file;
  std::string tok_out;
  tok->add_option("appid", tok_appid, "AppID")->required();
  tok->add_option("--secret-file", tok_secret_file, "File holding the secret")->envname("IOTMP_SECRET_FILE")->required();
  tok->add_option("--out", tok_out, "Write the token to this file instead of stdout");
  tok->callback([&] {
    action = [&] {
      Json body{{"appid", tok_appid}, {"secret", trim(read_file(tok_secret_file))}};
      auto r = call(g, g.manager, "POST", "/tokens", std::nullopt, body);
      if (r.status != 200 || tok_out.empty()) return show(g, r);
      std::ofstream(tok_out) << r.body["token"].get<std::string>() << '\n';
      r.body.erase("token");
      r.raw = r.body.dump();
      return show(g, r);
    };
  });

  // mt
  auto* mt = app.add_subcommand("mt", "Managed-thing requests (routed via --moms when set)");
  mt->require_subcommand(1);
  std::string mtid;
  std::string attribute;
  std::string from;
  std::string to;
  std::string at;
  bool live_read = false;
  auto* get = mt->add_subcommand("get", "Read an attribute");
  get->add_option("mtid", mtid)->required();
  get->add_option("attribute", attribute)->required();
  get->add_option("--from", from, "Start of the time range (ms)");
  get->add_option("--to", to, "End of the time range (ms)");
  get->add_option("--at", at, "Evaluate disclosure at this time (what-if; manager must allow it)");
  get->add_flag("--live", live_read, "Ask the device instead of the store");
  get->callback([&] {
    action = [&] {
      std::string target = "/mt/" + iotmp::net::url_encode(mtid) + "/" + iotmp::net::url_encode(attribute);
      std::string sep = "?";
      auto add = [&](const std::string& k, const std::string& v) {
        target += sep + k + "=" + iotmp::net::url_encode(v);
        sep = "&";
      };
      if (!from.empty()) add("from", from);
      if (!to.empty()) add("to", to);
      if (live_read) add("live", "1");
      std::map<std::string, std::string> headers;
      if (!at.empty()) headers["x-iotmp-time"] = at;
      return show(g, call(g, app_endpoint(g), "GET", target, g.token(), nullptr, headers));
    };
  });
  auto* post = mt->add_subcommand("post", "Actuate or contribute data");
  std::string actuate;
  std::string data;
  post->add_option("mtid", mtid)->required();
  auto* act_opt = post->add_option("--actuate", actuate, "ATTRIBUTE=STATE");
  auto* data_opt = post->add_option("--data", data, "JSON readings to contribute");
  act_opt->excludes(data_opt);
  post->callback([&] {
    action = [&] {
      if (!actuate.empty()) {
        const auto eq = actuate.find('=');
        if (eq == std::string::npos) throw Error(Errc::ConfigInvalid, "--actuate expects ATTRIBUTE=STATE");
        Json body{{"attribute", actuate.substr(0, eq)}, {"value", actuate.substr(eq + 1)}};
        return show(g, call(g, app_endpoint(g), "POST", "/mt/" + mtid + "/actuation", g.token(), body));
      }
      if (data.empty()) throw Error(Errc::ConfigInvalid, "mt post needs --actuate or --data");
      Json body;
      try {
        body = Json::parse(data);
      } catch (const Json::exception& e) {
        throw Error(Errc::ConfigInvalid, std::string("--data: ") + e.what());
      }
      return show(g, call(g, app_endpoint(g), "POST", "/mt/" + mtid + "/data", g.token(), body));
    };
  });
  auto* status = mt->add_subcommand("status", "Management status of a thing");
  status->add_option("mtid", mtid)->required();
  status->callback([&] {
    action = [&] { return show(g, call(g, app_endpoint(g), "GET", "/mt/" + mtid + "/status", g.token())); };
  });
  mt->add_subcommand("list", "List things on the manager")->callback([&] {
    action = [&] { return show(g, call(g, g.manager, "GET", "/mt", g.token())); };
  });
  auto* alerts = mt->add_subcommand("alerts", "List stored alerts");
  std::string alerts_mtid;
  alerts->add_option("--mtid", alerts_mtid);
  alerts->callback([&] {
    action = [&] {
      const std::string target = alerts_mtid.empty() ? "/alerts" : "/alerts?mtid=" + iotmp::net::url_encode(alerts_mtid);
      return show(g, call(g, g.manager, "GET", target, g.token()));
    };
  });

  // admin
  auto* admin = app.add_subcommand("admin", "Administration (management-role token)");
  admin->require_subcommand(1);
  std::string agentid;
  auto* approve = admin->add_subcommand("approve-agent", "Approve a pending agent");
  approve->add_option("agentid", agentid)->required();
  approve->callback([&] {
    action = [&] { return show(g, call(g, g.manager, "POST", "/agents/" + agentid + "/approve", g.token())); };
  });
  auto* revoke = admin->add_subcommand("revoke-agent", "Revoke an agent");
  revoke->add_option("agentid", agentid)->required();
  revoke->callback([&] {
    action = [&] { return show(g, call(g, g.manager, "POST", "/agents/" + agentid + "/revoke", g.token())); };
  });
  admin->add_subcommand("list-pending", "Agents waiting for approval")->callback([&] {
    action = [&] { return show(g, call(g, g.manager, "GET", "/agents/pending", g.token())); };
  });
  auto* profile = admin->add_subcommand("edit-profile", "Edit a thing's security profile");
  std::string add_entity;
  std::string remove_entity;
  std::string secure_only;
  std::vector<std::string> set_entities;
  bool show_only = false;
  profile->add_option("mtid", mtid)->required();
  profile->add_option("--add", add_entity, "Authorize an AppID");
  profile->add_option("--remove", remove_entity, "Remove an AppID");
  profile->add_option("--secure-only", secure_only, "true or false")->check(CLI::IsMember({"true", "false"}));
  profile->add_option("--set", set_entities, "Replace the authorized AppIDs")->delimiter(',');
  profile->add_flag("--show", show_only, "Print the profile without changing it");
  profile->callback([&] {
    action = [&] {
      if (show_only) return show(g, call(g, g.manager, "GET", "/profiles/" + mtid, g.token()));
      Json body = Json::object();
      if (!set_entities.empty()) body["authorized_entities"] = set_entities;
      if (!add_entity.empty()) body["add"] = add_entity;
      if (!remove_entity.empty()) body["remove"] = remove_entity;
      if (!secure_only.empty()) body["secure_only"] = secure_only == "true";
      if (body.empty()) throw Error(Errc::ConfigInvalid, "nothing to change");
      return show(g, call(g, g.manager, "PUT", "/profiles/" + mtid, g.token(), body));
    };
  });
  auto* policy = admin->add_subcommand("edit-policy", "Replace a thing's disclosure policies");
  std::string policy_file;
  std::string policy_json;
  policy->add_option("mtid", mtid)->required();
  auto* pf = policy->add_option("--file", policy_file, "JSON file with the policy array");
  auto* pj = policy->add_option("--policy", policy_json, "Policy array as JSON text");
  pf->excludes(pj);
  policy->add_flag("--show", show_only, "Print the policies without changing them");
  policy->callback([&] {
    action = [&] {
      if (show_only) return show(g, call(g, g.manager, "GET", "/policies/" + mtid, g.token()));
      Json body;
      try {
        body = !policy_file.empty() ? read_json_file(policy_file) : Json::parse(policy_json);
      } catch (const Json::exception& e) {
        throw Error(Errc::ConfigInvalid, std::string("policy: ") + e.what());
      }
      return show(g, call(g, g.manager, "PUT", "/policies/" + mtid, g.token(), body));
    };
  });

  // scenario
  auto* scenario = app.add_subcommand("scenario", "Simulated scenarios");
  scenario->require_subcommand(1);
  auto* srun = scenario->add_subcommand("run", "Run a scenario script and report its probes");
  std::string script_path;
  std::string trace_out;
  srun->add_option("script", script_path)->required();
  srun->add_option("--trace", trace_out, "Write the canonical trace to this file");
  srun->callback([&] { action = [&] { return run_scenario_file(script_path, g.json, trace_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }
  try {
    if (std::string(app.get_subcommands().front()->get_name()) != "run") g.apply_config();
    return action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
