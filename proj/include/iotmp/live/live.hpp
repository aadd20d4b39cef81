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

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "iotmp/net/runtime.hpp"

namespace boost::asio {
class io_context;
class thread_pool;
}

namespace iotmp::live {

/// Wall-clock executor backed by one Asio event loop thread. Every scheduled
/// callback runs on that thread.
class AsioExecutor final : public net::Executor {
 public:
  AsioExecutor();
  ~AsioExecutor() override;
  AsioExecutor(const AsioExecutor&) = delete;
  AsioExecutor& operator=(const AsioExecutor&) = delete;

  TimeMs now() const override;
  net::TimerId schedule(TimeMs delay_ms, std::function<void()> fn) override;
  void cancel(net::TimerId id) override;

  /// Starts the loop thread.
  void start();
  /// Stops the loop and joins its thread.
  void stop();
  /// Runs `fn` on the loop thread and waits for it.
  void run_sync(std::function<void()> fn);
  bool on_loop_thread() const;

  boost::asio::io_context& context() noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Frame transport over TCP. Addresses of the form "host:port" are TCP
/// endpoints: binding one listens on it, sending to one dials it. Any other
/// address is a local name announced to the remote side when dialing, so
/// replies find their way back over the same connection.
class TcpFrameTransport final : public net::FrameTransport {
 public:
  explicit TcpFrameTransport(AsioExecutor& executor);
  ~TcpFrameTransport() override;

  /// Throws BindFailure when a listening address cannot be bound.
  void bind(const std::string& address, net::FrameHandler handler) override;
  void unbind(const std::string& address) override;
  bool send(const std::string& from, const std::string& to, std::vector<std::uint8_t> frame) override;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Self-signed certificate and key in PEM form.
struct TlsIdentity {
  std::string cert_pem;
  std::string key_pem;
};
TlsIdentity make_self_signed(const std::string& common_name);
/// Reads the pair from files, or generates one when both paths are empty.
TlsIdentity load_tls_identity(const std::string& cert_path, const std::string& key_path,
                              const std::string& common_name);

/// Serves one handler on a TLS listener and, optionally, a plaintext one.
/// Requests are handed to the executor thread; the listener's thread waits
/// for the reply.
class HttpServerHost {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    /// 0 disables the listener; -1 binds an ephemeral port.
    int tls_port = 0;
    int plain_port = 0;
    TimeMs reply_timeout_ms = 30'000;
  };

  HttpServerHost(AsioExecutor& executor, net::HttpHandler handler, Options options, TlsIdentity identity);
  ~HttpServerHost();

  /// Binds both listeners and starts serving. Throws BindFailure.
  void start();
  void stop();
  int tls_port() const noexcept { return bound_tls_; }
  int plain_port() const noexcept { return bound_plain_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int bound_tls_ = 0;
  int bound_plain_ = 0;
};

/// HTTP client for live mode. Addresses are "host:port"; requests marked
/// secure use TLS. Certificates are not verified unless a CA file is set,
/// since deployments default to self-signed identities.
class LiveHttpClient final : public net::HttpClient {
 public:
  explicit LiveHttpClient(net::Executor& executor, std::string ca_file = {});
  ~LiveHttpClient() override;

  void request(const std::string& address, net::HttpRequest req, TimeMs timeout_ms,
               std::function<void(std::optional<net::HttpResponse>)> done) override;

  /// Blocking variant for command-line use; nullopt when unreachable.
  static std::optional<net::HttpResponse> fetch(const std::string& address, const net::HttpRequest& req,
                                                TimeMs timeout_ms, const std::string& ca_file = {});

 private:
  net::Executor& executor_;
  std::string ca_file_;
  std::shared_ptr<std::atomic<bool>> alive_ = std::make_shared<std::atomic<bool>>(true);
  std::unique_ptr<boost::asio::thread_pool> pool_;
};

/// Splits "host:port". Returns false when the text is not of that form.
bool split_host_port(const std::string& address, std::string& host, int& port);

}  // namespace iotmp::live
