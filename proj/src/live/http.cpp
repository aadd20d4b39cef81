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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <cctype>
#include <fstream>
#include <future>
#include <sstream>

#include "iotmp/live/live.hpp"

namespace iotmp::live {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string bio_string(BIO* bio) {
  BUF_MEM* mem = nullptr;
  BIO_get_mem_ptr(bio, &mem);
  return std::string(mem->data, mem->length);
}

template <class T, void (*F)(T*)>
struct Deleter {
  void operator()(T* p) const { F(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, Deleter<EVP_PKEY, EVP_PKEY_free>>;
using X509Ptr = std::unique_ptr<X509, Deleter<X509, X509_free>>;
using BioPtr = std::unique_ptr<BIO, Deleter<BIO, BIO_free_all>>;

}  // namespace

TlsIdentity make_self_signed(const std::string& common_name) {
  PkeyPtr key(EVP_EC_gen("P-256"));
  X509Ptr cert(X509_new());
  if (!key || !cert) throw Error(Errc::ConfigInvalid, "TLS key generation failed");
  X509_set_version(cert.get(), 2);
  ASN1_INTEGER_set(X509_get_serialNumber(cert.get()), 1);
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), 365L * 24 * 3600);
  X509_set_pubkey(cert.get(), key.get());
  X509_NAME* name = X509_get_subject_name(cert.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC, reinterpret_cast<const unsigned char*>(common_name.c_str()), -1,
                             -1, 0);
  X509_set_issuer_name(cert.get(), name);
  if (X509_sign(cert.get(), key.get(), EVP_sha256()) == 0) throw Error(Errc::ConfigInvalid, "certificate signing failed");

  TlsIdentity id;
  BioPtr cbio(BIO_new(BIO_s_mem()));
  PEM_write_bio_X509(cbio.get(), cert.get());
  id.cert_pem = bio_string(cbio.get());
  BioPtr kbio(BIO_new(BIO_s_mem()));
  PEM_write_bio_PrivateKey(kbio.get(), key.get(), nullptr, nullptr, 0, nullptr, nullptr);
  id.key_pem = bio_string(kbio.get());
  return id;
}

TlsIdentity load_tls_identity(const std::string& cert_path, const std::string& key_path,
                              const std::string& common_name) {
  if (cert_path.empty() && key_path.empty()) return make_self_signed(common_name);
  if (cert_path.empty() || key_path.empty()) throw Error(Errc::ConfigInvalid, "tls needs both cert and key");
  return TlsIdentity{read_file(cert_path), read_file(key_path)};
}

// ---------------------------------------------------------------------------
// server

struct HttpServerHost::Impl {
  AsioExecutor& executor;
  net::HttpHandler handler;
  Options options;
  TlsIdentity identity;
  std::unique_ptr<httplib::Server> plain;
  std::unique_ptr<httplib::SSLServer> tls;
  std::thread plain_thread;
  std::thread tls_thread;

  void install(httplib::Server& server, bool secure) {
    auto route = [this, secure](const httplib::Request& r, httplib::Response& res) { serve(r, res, secure); };
    server.Get(".*", route);
    server.Post(".*", route);
    server.Put(".*", route);
    server.Delete(".*", route);
    server.Patch(".*", route);
  }

  void serve(const httplib::Request& r, httplib::Response& res, bool secure) {
    net::HttpRequest req;
    req.method = r.method;
    req.target = r.target;
    for (const auto& [k, v] : r.headers) req.headers.emplace(lower(k), v);
    req.body = r.body;
    req.secure = secure;

    auto promise = std::make_shared<std::promise<net::HttpResponse>>();
    auto once = std::make_shared<std::atomic<bool>>(false);
    auto fut = promise->get_future();
    executor.schedule(0, [this, req = std::move(req), promise, once] {
      handler(req, [promise, once](net::HttpResponse resp) {
        if (!once->exchange(true)) promise->set_value(std::move(resp));
      });
    });
    if (fut.wait_for(std::chrono::milliseconds(options.reply_timeout_ms)) != std::future_status::ready) {
      res.status = 504;
      res.set_content(R"({"error":"DeviceTimeout","detail":"no reply from the service"})", "application/json");
      return;
    }
    auto resp = fut.get();
    res.status = resp.status;
    std::string content_type = "application/json";
    for (const auto& [k, v] : resp.headers) {
      if (k == "content-type") {
        content_type = v;
      } else if (k != "content-length") {
        res.set_header(k, v);
      }
    }
    res.set_content(resp.body, content_type);
  }
};

HttpServerHost::HttpServerHost(AsioExecutor& executor, net::HttpHandler handler, Options options, TlsIdentity identity)
    : impl_(std::make_unique<Impl>(Impl{executor, std::move(handler), std::move(options), std::move(identity), {}, {}, {}, {}})) {}

HttpServerHost::~HttpServerHost() { stop(); }

namespace {

int bind_listener(httplib::Server& server, const std::string& host, int port) {
  if (port < 0) {
    const int bound = server.bind_to_any_port(host);
    if (bound <= 0) throw Error(Errc::BindFailure, host + ":<any>");
    return bound;
  }
  if (!server.bind_to_port(host, port)) throw Error(Errc::BindFailure, host + ":" + std::to_string(port));
  return port;
}

}  // namespace

void HttpServerHost::start() {
  auto& im = *impl_;
  if (im.options.tls_port != 0) {
    BioPtr cbio(BIO_new_mem_buf(im.identity.cert_pem.data(), static_cast<int>(im.identity.cert_pem.size())));
    BioPtr kbio(BIO_new_mem_buf(im.identity.key_pem.data(), static_cast<int>(im.identity.key_pem.size())));
    X509Ptr cert(PEM_read_bio_X509(cbio.get(), nullptr, nullptr, nullptr));
    PkeyPtr key(PEM_read_bio_PrivateKey(kbio.get(), nullptr, nullptr, nullptr));
    if (!cert || !key) throw Error(Errc::ConfigInvalid, "unreadable TLS certificate or key");
    im.tls = std::make_unique<httplib::SSLServer>(cert.get(), key.get());
    if (!im.tls->is_valid()) throw Error(Errc::ConfigInvalid, "TLS context rejected the certificate");
    im.install(*im.tls, true);
    bound_tls_ = bind_listener(*im.tls, im.options.host, im.options.tls_port);
    im.tls_thread = std::thread([&im] { im.tls->listen_after_bind(); });
  }
  if (im.options.plain_port != 0) {
    im.plain = std::make_unique<httplib::Server>();
    im.install(*im.plain, false);
    bound_plain_ = bind_listener(*im.plain, im.options.host, im.options.plain_port);
    im.plain_thread = std::thread([&im] { im.plain->listen_after_bind(); });
  }
}

void HttpServerHost::stop() {
  auto& im = *impl_;
  if (im.tls) im.tls->stop();
  if (im.plain) im.plain->stop();
  if (im.tls_thread.joinable()) im.tls_thread.join();
  if (im.plain_thread.joinable()) im.plain_thread.join();
}

// ---------------------------------------------------------------------------
// client

LiveHttpClient::LiveHttpClient(net::Executor& executor, std::string ca_file)
    : executor_(executor), ca_file_(std::move(ca_file)), pool_(std::make_unique<boost::asio::thread_pool>(4)) {}

LiveHttpClient::~LiveHttpClient() {
  *alive_ = false;
  pool_->join();
}

std::optional<net::HttpResponse> LiveHttpClient::fetch(const std::string& address, const net::HttpRequest& req,
                                                       TimeMs timeout_ms, const std::string& ca_file) {
  std::string host;
  int port = 0;
  if (!split_host_port(address, host, port)) return std::nullopt;
  httplib::Request r;
  r.method = req.method;
  r.path = req.target;
  for (const auto& [k, v] : req.headers) {
    if (k == "host" || k == "content-length") continue;
    r.headers.emplace(k, v);
  }
  r.body = req.body;
  if (!req.body.empty() && r.headers.find("content-type") == r.headers.end()) {
    r.headers.emplace("content-type", "application/json");
  }

  auto run = [&](httplib::ClientImpl& client) -> std::optional<net::HttpResponse> {
    const auto secs = timeout_ms / 1000;
    const auto usecs = (timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto result = client.send(r);
    if (!result) return std::nullopt;
    net::HttpResponse resp;
    resp.status = result->status;
    for (const auto& [k, v] : result->headers) resp.headers.emplace(lower(k), v);
    resp.headers.erase("content-length");
    resp.headers.erase("keep-alive");
    resp.headers.erase("connection");
    resp.body = result->body;
    return resp;
  };
  if (req.secure) {
    httplib::SSLClient client(host, port);
    if (ca_file.empty()) {
      client.enable_server_certificate_verification(false);
    } else {
      client.set_ca_cert_path(ca_file.c_str());
      client.enable_server_certificate_verification(true);
    }
    return run(client);
  }
  httplib::ClientImpl client(host, port);
  return run(client);
}

void LiveHttpClient::request(const std::string& address, net::HttpRequest req, TimeMs timeout_ms,
                             std::function<void(std::optional<net::HttpResponse>)> done) {
  boost::asio::post(*pool_, [this, alive = alive_, address, req = std::move(req), timeout_ms,
                             done = std::move(done)]() mutable {
    auto resp = fetch(address, req, timeout_ms, ca_file_);
    if (!*alive) return;
    executor_.schedule(0, [resp = std::move(resp), done = std::move(done)]() mutable { done(std::move(resp)); });
  });
}

}  // namespace iotmp::live
