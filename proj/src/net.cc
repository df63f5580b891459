// Copyright 2026 The evonas Authors.
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

#include "evonas/net.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace evonas::net {
namespace {

std::string errno_text() { return std::strerror(errno); }

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = ep.host.empty() ? "0.0.0.0" : ep.host;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res) {
    throw NetError(fmt::format("cannot resolve '{}': {}", host, ::gai_strerror(rc)));
  }
  sockaddr_in addr = *reinterpret_cast<const sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

int ms_until(TimePoint deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size()) {
    throw std::invalid_argument(fmt::format("expected host:port, got '{}'", text));
  }
  unsigned port = 0;
  const auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port > 65535) {
    throw std::invalid_argument(fmt::format("bad port in '{}'", text));
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::string Endpoint::to_string() const { return fmt::format("{}:{}", host, port); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    reset();
    fd_ = other.release();
  }
  return *this;
}

int Socket::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Socket listen_tcp(const Endpoint& ep, Endpoint* bound) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetError("socket(): " + errno_text());
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(ep);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw NetError(fmt::format("bind {}: {}", ep.to_string(), errno_text()));
  }
  if (::listen(s.fd(), 128) != 0) throw NetError("listen(): " + errno_text());
  if (bound) {
    socklen_t len = sizeof(addr);
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    *bound = ep;
    bound->port = ntohs(addr.sin_port);
  }
  return s;
}

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetError("socket(): " + errno_text());
  set_nonblocking(s.fd());
  sockaddr_in addr = resolve(ep);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno != EINPROGRESS) {
      throw NetError(fmt::format("connect {}: {}", ep.to_string(), errno_text()));
    }
    pollfd pfd{s.fd(), POLLOUT, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc <= 0) throw NetError(fmt::format("connect {}: timed out", ep.to_string()));
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      throw NetError(fmt::format("connect {}: {}", ep.to_string(), std::strerror(err)));
    }
  }
  set_nodelay(s.fd());
  return s;
}

Connection Connection::open(const Endpoint& ep, std::chrono::milliseconds timeout) {
  return Connection(connect_tcp(ep, timeout));
}

Connection::Connection(Socket sock) : sock_(std::move(sock)) {}

Connection::Connection(Connection&& other) noexcept
    : sock_(std::move(other.sock_)), reader_(std::move(other.reader_)) {}

void Connection::send(const wire::Message& m) {
  const auto frame = wire::encode_frame(m);
  std::lock_guard<std::mutex> lock(write_mu_);
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(sock_.fd(), frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      pollfd pfd{sock_.fd(), POLLOUT, 0};
      ::poll(&pfd, 1, 100);
      continue;
    }
    throw ConnectionClosed("send: " + errno_text());
  }
}

std::optional<wire::Message> Connection::receive(std::chrono::milliseconds timeout) {
  const TimePoint deadline = Clock::now() + timeout;
  std::uint8_t buf[64 * 1024];
  while (true) {
    if (auto m = reader_.next()) return m;
    pollfd pfd{sock_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, ms_until(deadline));
    if (rc < 0 && errno != EINTR) throw ConnectionClosed("poll: " + errno_text());
    if (rc <= 0) {
      if (Clock::now() >= deadline) return std::nullopt;
      continue;
    }
    const ssize_t n = ::recv(sock_.fd(), buf, sizeof(buf), 0);
    if (n == 0) throw ConnectionClosed("peer closed the connection");
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      throw ConnectionClosed("recv: " + errno_text());
    }
    reader_.feed({buf, static_cast<std::size_t>(n)});
  }
}

void Connection::shutdown() {
  if (sock_.valid()) ::shutdown(sock_.fd(), SHUT_RDWR);
}

EventLoop::EventLoop(Handler& handler, std::chrono::milliseconds tick_period)
    : handler_(handler), tick_period_(tick_period) {
  int fds[2];
  if (::pipe2(fds, O_NONBLOCK | O_CLOEXEC) != 0) throw NetError("pipe2: " + errno_text());
  wake_read_ = Socket(fds[0]);
  wake_write_ = Socket(fds[1]);
}

EventLoop::~EventLoop() = default;

Endpoint EventLoop::listen(const Endpoint& ep) {
  Endpoint bound;
  listener_ = listen_tcp(ep, &bound);
  set_nonblocking(listener_.fd());
  return bound;
}

std::optional<ConnId> EventLoop::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  try {
    Socket s = connect_tcp(ep, timeout);
    return add(std::move(s), /*outbound=*/true);
  } catch (const NetError& e) {
    spdlog::debug("connect {} failed: {}", ep.to_string(), e.what());
    return std::nullopt;
  }
}

ConnId EventLoop::add(Socket sock, bool outbound) {
  set_nonblocking(sock.fd());
  set_nodelay(sock.fd());
  const ConnId id = next_id_++;
  conns_.emplace(id, Conn{std::move(sock), {}, {}, 0});
  handler_.on_open(id, outbound);
  return id;
}

void EventLoop::send(ConnId id, const wire::Message& m) {
  const auto it = conns_.find(id);
  if (it == conns_.end()) return;
  const auto frame = wire::encode_frame(m);
  Conn& c = it->second;
  c.out.insert(c.out.end(), frame.begin(), frame.end());
  flush(id, c);
}

void EventLoop::flush(ConnId id, Conn& c) {
  while (c.out_offset < c.out.size()) {
    const ssize_t n = ::send(c.sock.fd(), c.out.data() + c.out_offset,
                             c.out.size() - c.out_offset, MSG_NOSIGNAL);
    if (n > 0) {
      c.out_offset += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return;
    if (n < 0 && errno == EINTR) continue;
    closing_.push_back(id);
    return;
  }
  c.out.clear();
  c.out_offset = 0;
}

void EventLoop::close(ConnId id) {
  if (conns_.count(id)) closing_.push_back(id);
}

void EventLoop::read_ready(ConnId id) {
  std::uint8_t buf[64 * 1024];
  while (true) {
    auto it = conns_.find(id);
    if (it == conns_.end()) return;
    const ssize_t n = ::recv(it->second.sock.fd(), buf, sizeof(buf), 0);
    if (n == 0) {
      closing_.push_back(id);
      return;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno != EAGAIN && errno != EWOULDBLOCK) closing_.push_back(id);
      return;
    }
    it->second.reader.feed({buf, static_cast<std::size_t>(n)});
    while (true) {
      it = conns_.find(id);
      if (it == conns_.end()) return;
      if (std::find(closing_.begin(), closing_.end(), id) != closing_.end()) return;
      std::optional<wire::Message> m;
      try {
        m = it->second.reader.next();
      } catch (const wire::WireError& e) {
        spdlog::warn("closing connection {}: {}", id, e.what());
        closing_.push_back(id);
        return;
      }
      if (!m) break;
      handler_.on_message(id, std::move(*m));
    }
  }
}

void EventLoop::post(std::function<void()> fn) {
  {
    std::lock_guard<std::mutex> lock(post_mu_);
    posted_.push_back(std::move(fn));
  }
  wake();
}

void EventLoop::stop() {
  stop_ = true;
  wake();
}

void EventLoop::wake() {
  const char byte = 1;
  [[maybe_unused]] auto n = ::write(wake_write_.fd(), &byte, 1);
}

void EventLoop::drain_posted() {
  char buf[256];
  while (::read(wake_read_.fd(), buf, sizeof(buf)) > 0) {
  }
  std::deque<std::function<void()>> work;
  {
    std::lock_guard<std::mutex> lock(post_mu_);
    work.swap(posted_);
  }
  for (auto& fn : work) fn();
}

void EventLoop::run() {
  TimePoint next_tick = Clock::now() + tick_period_;
  std::vector<pollfd> pfds;
  std::vector<ConnId> ids;
  while (!stop_) {
    pfds.clear();
    ids.clear();
    pfds.push_back({wake_read_.fd(), POLLIN, 0});
    if (listener_.valid()) pfds.push_back({listener_.fd(), POLLIN, 0});
    const std::size_t first_conn = pfds.size();
    for (auto& [id, c] : conns_) {
      short events = POLLIN;
      if (c.out_offset < c.out.size()) events |= POLLOUT;
      pfds.push_back({c.sock.fd(), events, 0});
      ids.push_back(id);
    }

    const int rc = ::poll(pfds.data(), pfds.size(), ms_until(next_tick));
    if (rc < 0 && errno != EINTR) throw NetError("poll: " + errno_text());

    if (pfds[0].revents & POLLIN) drain_posted();
    if (listener_.valid() && (pfds[1].revents & POLLIN)) {
      while (true) {
        const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) break;
        add(Socket(fd), /*outbound=*/false);
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const short re = pfds[first_conn + i].revents;
      if (re == 0) continue;
      const ConnId id = ids[i];
      if (re & POLLOUT) {
        if (auto it = conns_.find(id); it != conns_.end()) flush(id, it->second);
      }
      if (re & (POLLIN | POLLHUP | POLLERR)) read_ready(id);
    }

    const TimePoint now = Clock::now();
    if (now >= next_tick) {
      handler_.on_tick(now);
      next_tick = now + tick_period_;
    }

    while (!closing_.empty()) {
      const ConnId id = closing_.back();
      closing_.pop_back();
      auto it = conns_.find(id);
      if (it == conns_.end()) continue;
      conns_.erase(it);
      handler_.on_close(id);
    }
  }
  // Best effort: push out anything queued (e.g. final acks) before exit.
  for (auto& [id, c] : conns_) flush(id, c);
}

}  // namespace evonas::net
