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

#include <array>
#include <boost/asio.hpp>
#include <chrono>
#include <future>
#include <iostream>
#include <optional>

#include "iotmp/core/message.hpp"
#include "iotmp/live/live.hpp"

namespace iotmp::live {

namespace asio = boost::asio;
using asio::ip::tcp;

bool split_host_port(const std::string& address, std::string& host, int& port) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) return false;
  const auto digits = address.substr(colon + 1);
  if (digits.size() > 5 || digits.find_first_not_of("0123456789") != std::string::npos) return false;
  port = std::stoi(digits);
  if (port > 65535) return false;
  host = address.substr(0, colon);
  return true;
}

// ---------------------------------------------------------------------------
// executor

struct AsioExecutor::Impl {
  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> guard;
  std::thread thread;
  std::thread::id loop_id;
  std::mutex mu;
  std::map<net::TimerId, std::shared_ptr<asio::steady_timer>> timers;
  net::TimerId next = 0;
};

AsioExecutor::AsioExecutor() : impl_(std::make_unique<Impl>()) {}

AsioExecutor::~AsioExecutor() { stop(); }

TimeMs AsioExecutor::now() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

net::TimerId AsioExecutor::schedule(TimeMs delay_ms, std::function<void()> fn) {
  auto timer = std::make_shared<asio::steady_timer>(impl_->io, std::chrono::milliseconds(std::max<TimeMs>(0, delay_ms)));
  net::TimerId id = 0;
  {
    std::lock_guard lock(impl_->mu);
    id = ++impl_->next;
    impl_->timers.emplace(id, timer);
  }
  timer->async_wait([impl = impl_.get(), id, fn = std::move(fn)](const boost::system::error_code& ec) {
    if (ec) return;
    {
      std::lock_guard lock(impl->mu);
      if (impl->timers.erase(id) == 0) return;
    }
    try {
      fn();
    } catch (const std::exception& e) {
      std::cerr << "iotmp: unhandled error in event loop: " << e.what() << '\n';
    }
  });
  return id;
}

void AsioExecutor::cancel(net::TimerId id) {
  std::shared_ptr<asio::steady_timer> timer;
  {
    std::lock_guard lock(impl_->mu);
    auto it = impl_->timers.find(id);
    if (it == impl_->timers.end()) return;
    timer = it->second;
    impl_->timers.erase(it);
  }
  // The erase above already disarms the callback; cancelling only frees the wait.
  asio::post(impl_->io, [timer] { timer->cancel(); });
}

void AsioExecutor::start() {
  if (impl_->thread.joinable()) return;
  impl_->guard.emplace(impl_->io.get_executor());
  impl_->thread = std::thread([this] {
    impl_->loop_id = std::this_thread::get_id();
    impl_->io.run();
  });
}

void AsioExecutor::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->guard.reset();
  impl_->io.stop();
  impl_->thread.join();
  impl_->io.restart();
}

bool AsioExecutor::on_loop_thread() const { return std::this_thread::get_id() == impl_->loop_id; }

void AsioExecutor::run_sync(std::function<void()> fn) {
  if (on_loop_thread() || !impl_->thread.joinable()) {
    fn();
    return;
  }
  std::promise<void> done;
  auto fut = done.get_future();
  asio::post(impl_->io, [&] {
    try {
      fn();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  fut.get();
}

asio::io_context& AsioExecutor::context() noexcept { return impl_->io; }

// ---------------------------------------------------------------------------
// TCP frames

struct TcpFrameTransport::Impl : std::enable_shared_from_this<TcpFrameTransport::Impl> {
  struct Conn {
    explicit Conn(asio::io_context& io) : socket(io) {}
    tcp::socket socket;
    std::string peer;   // remote name; empty until the hello arrives
    std::string local;  // local address whose handler receives frames
    std::vector<std::uint8_t> hello;
    bool greeted = false;
    FrameReader reader;
    std::array<std::uint8_t, 8192> buffer{};
  };
  using ConnPtr = std::shared_ptr<Conn>;

  explicit Impl(AsioExecutor& ex) : executor(ex), io(ex.context()) {}

  AsioExecutor& executor;
  asio::io_context& io;
  std::map<std::string, net::FrameHandler> handlers;
  std::map<std::string, std::unique_ptr<tcp::acceptor>> acceptors;
  std::map<std::string, ConnPtr> conns;  // by peer name

  void accept(const std::string& local) {
    auto it = acceptors.find(local);
    if (it == acceptors.end()) return;
    auto conn = std::make_shared<Conn>(io);
    conn->local = local;
    it->second->async_accept(conn->socket, [self = shared_from_this(), conn, local](const boost::system::error_code& ec) {
      if (ec) {
        if (ec != asio::error::operation_aborted) self->accept(local);
        return;
      }
      self->read(conn);
      self->accept(local);
    });
  }

  void read(const ConnPtr& conn) {
    conn->socket.async_read_some(
        asio::buffer(conn->buffer), [self = shared_from_this(), conn](const boost::system::error_code& ec, std::size_t n) {
          if (ec) return self->drop(conn);
          std::span<const std::uint8_t> data(conn->buffer.data(), n);
          if (!conn->greeted) {
            conn->hello.insert(conn->hello.end(), data.begin(), data.end());
            if (conn->hello.size() < 4) return self->read(conn);
            const std::size_t len = (std::size_t{conn->hello[0]} << 24) | (std::size_t{conn->hello[1]} << 16) |
                                    (std::size_t{conn->hello[2]} << 8) | conn->hello[3];
            if (len == 0 || len > 256) return self->drop(conn);
            if (conn->hello.size() < 4 + len) return self->read(conn);
            conn->peer.assign(conn->hello.begin() + 4, conn->hello.begin() + 4 + static_cast<std::ptrdiff_t>(len));
            conn->greeted = true;
            std::vector<std::uint8_t> rest(conn->hello.begin() + 4 + static_cast<std::ptrdiff_t>(len), conn->hello.end());
            conn->hello.clear();
            if (auto old = self->conns.find(conn->peer); old != self->conns.end() && old->second != conn) {
              // A reconnect from the same peer supersedes the old socket.
              boost::system::error_code ignored;
              old->second->socket.close(ignored);
            }
            self->conns[conn->peer] = conn;
            if (!self->deliver(conn, rest)) return;
            return self->read(conn);
          }
          if (!self->deliver(conn, data)) return;
          self->read(conn);
        });
  }

  bool deliver(const ConnPtr& conn, std::span<const std::uint8_t> data) {
    bool fed = false;
    for (;;) {
      std::optional<std::vector<std::uint8_t>> frame;
      try {
        if (!fed) {
          conn->reader.feed(data);
          fed = true;
        }
        frame = conn->reader.next();
      } catch (const Error&) {
        // Framing is lost; nothing after this point can be trusted.
        drop(conn);
        return false;
      }
      if (!frame) return true;
      auto h = handlers.find(conn->local);
      if (h == handlers.end() || !h->second.on_frame) continue;
      auto on_frame = h->second.on_frame;
      try {
        on_frame(conn->peer, std::move(*frame));
      } catch (const std::exception&) {
        // A failing handler loses its own frame only, not the stream.
      }
    }
  }

  void drop(const ConnPtr& conn) {
    boost::system::error_code ignored;
    conn->socket.close(ignored);
    if (conn->peer.empty()) return;
    auto it = conns.find(conn->peer);
    if (it == conns.end() || it->second != conn) return;
    conns.erase(it);
    auto h = handlers.find(conn->local);
    if (h != handlers.end() && h->second.on_link_down) {
      auto on_down = h->second.on_link_down;
      on_down(conn->peer);
    }
  }

  ConnPtr dial(const std::string& from, const std::string& to) {
    std::string host;
    int port = 0;
    if (!split_host_port(to, host, port)) return nullptr;
    auto conn = std::make_shared<Conn>(io);
    boost::system::error_code ec;
    tcp::resolver resolver(io);
    auto endpoints = resolver.resolve(host, std::to_string(port), ec);
    if (ec) return nullptr;
    asio::connect(conn->socket, endpoints, ec);
    if (ec) return nullptr;
    std::vector<std::uint8_t> hello{static_cast<std::uint8_t>(from.size() >> 24), static_cast<std::uint8_t>(from.size() >> 16),
                                    static_cast<std::uint8_t>(from.size() >> 8), static_cast<std::uint8_t>(from.size())};
    hello.insert(hello.end(), from.begin(), from.end());
    asio::write(conn->socket, asio::buffer(hello), ec);
    if (ec) return nullptr;
    conn->peer = to;
    conn->local = from;
    conn->greeted = true;
    conns[to] = conn;
    read(conn);
    return conn;
  }
};

TcpFrameTransport::TcpFrameTransport(AsioExecutor& executor) : impl_(std::make_shared<Impl>(executor)) {}

TcpFrameTransport::~TcpFrameTransport() {
  impl_->executor.run_sync([impl = impl_] {
    for (auto& [_, a] : impl->acceptors) {
      boost::system::error_code ignored;
      a->close(ignored);
    }
    for (auto& [_, c] : impl->conns) {
      boost::system::error_code ignored;
      c->socket.close(ignored);
    }
    impl->handlers.clear();
    impl->conns.clear();
  });
}

void TcpFrameTransport::bind(const std::string& address, net::FrameHandler handler) {
  impl_->executor.run_sync([impl = impl_, address, handler = std::move(handler)]() mutable {
    impl->handlers[address] = std::move(handler);
    std::string host;
    int port = 0;
    if (!split_host_port(address, host, port)) return;
    try {
      auto acceptor = std::make_unique<tcp::acceptor>(impl->io);
      tcp::endpoint ep(asio::ip::make_address(host == "localhost" ? "127.0.0.1" : host), static_cast<unsigned short>(port));
      acceptor->open(ep.protocol());
      acceptor->set_option(tcp::acceptor::reuse_address(true));
      acceptor->bind(ep);
      acceptor->listen();
      impl->acceptors[address] = std::move(acceptor);
    } catch (const std::exception& e) {
      impl->handlers.erase(address);
      throw Error(Errc::BindFailure, address + ": " + e.what());
    }
    impl->accept(address);
  });
}

void TcpFrameTransport::unbind(const std::string& address) {
  impl_->executor.run_sync([impl = impl_, address] {
    impl->handlers.erase(address);
    if (auto it = impl->acceptors.find(address); it != impl->acceptors.end()) {
      boost::system::error_code ignored;
      it->second->close(ignored);
      impl->acceptors.erase(it);
    }
  });
}

bool TcpFrameTransport::send(const std::string& from, const std::string& to, std::vector<std::uint8_t> frame) {
  bool ok = false;
  impl_->executor.run_sync([&] {
    auto it = impl_->conns.find(to);
    Impl::ConnPtr conn = it != impl_->conns.end() ? it->second : impl_->dial(from, to);
    if (!conn) return;
    boost::system::error_code ec;
    asio::write(conn->socket, asio::buffer(frame), ec);
    if (ec) {
      // Report the loss asynchronously, as a remote close would be.
      asio::post(impl_->io, [impl = impl_, conn] { impl->drop(conn); });
      return;
    }
    ok = true;
  });
  return ok;
}

}  // namespace iotmp::live
