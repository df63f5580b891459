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

// TCP transport for wire frames: a blocking client connection and a
// single-threaded poll() event loop for daemons.

#ifndef EVONAS_NET_H_
#define EVONAS_NET_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/wire.h"

namespace evonas::net {

using Clock = std::chrono::steady_clock;
using TimePoint = Clock::time_point;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port". Throws std::invalid_argument.
  static Endpoint parse(std::string_view text);
  std::string to_string() const;
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Peer closed the connection, or it failed.
class ConnectionClosed : public NetError {
 public:
  using NetError::NetError;
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void reset();

 private:
  int fd_ = -1;
};

// Binds and listens; `bound` receives the actual port when port 0 is given.
Socket listen_tcp(const Endpoint& ep, Endpoint* bound = nullptr);
// Throws NetError on failure or timeout.
Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout);

// Blocking client side of one long-lived connection. send() may be called
// from several threads; receive() from one.
class Connection {
 public:
  static Connection open(const Endpoint& ep, std::chrono::milliseconds timeout);

  explicit Connection(Socket sock);
  Connection(Connection&& other) noexcept;
  Connection& operator=(Connection&&) = delete;

  // Throws ConnectionClosed.
  void send(const wire::Message& m);
  // nullopt on timeout. Throws ConnectionClosed, wire::WireError.
  std::optional<wire::Message> receive(std::chrono::milliseconds timeout);
  // Wakes a blocked receive() with ConnectionClosed.
  void shutdown();

 private:
  Socket sock_;
  std::mutex write_mu_;
  wire::FrameReader reader_;
};

using ConnId = std::uint64_t;

// One thread runs the loop and owns all daemon state; handler callbacks are
// invoked only on that thread. post() and stop() are safe from any thread.
class EventLoop {
 public:
  class Handler {
   public:
    virtual ~Handler() = default;
    virtual void on_open(ConnId id, bool outbound) = 0;
    virtual void on_message(ConnId id, wire::Message m) = 0;
    virtual void on_close(ConnId id) = 0;
    virtual void on_tick(TimePoint now) = 0;
  };

  EventLoop(Handler& handler, std::chrono::milliseconds tick_period);
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  // Returns the bound endpoint. Call before run().
  Endpoint listen(const Endpoint& ep);

  // Loop thread (or before run()). Blocks up to `timeout` on connect.
  std::optional<ConnId> connect(const Endpoint& ep, std::chrono::milliseconds timeout);
  // Loop thread only. Frames to a closed or unknown id are dropped.
  void send(ConnId id, const wire::Message& m);
  // Loop thread only. on_close fires for the id.
  void close(ConnId id);
  bool is_open(ConnId id) const { return conns_.count(id) != 0; }

  void run();
  void stop();
  void post(std::function<void()> fn);

 private:
  struct Conn {
    Socket sock;
    wire::FrameReader reader;
    std::vector<std::uint8_t> out;
    std::size_t out_offset = 0;
  };

  ConnId add(Socket sock, bool outbound);
  void flush(ConnId id, Conn& c);
  void read_ready(ConnId id);
  void drain_posted();
  void wake();

  Handler& handler_;
  std::chrono::milliseconds tick_period_;
  Socket listener_;
  Socket wake_read_;
  Socket wake_write_;
  std::map<ConnId, Conn> conns_;
  std::vector<ConnId> closing_;
  ConnId next_id_ = 1;
  std::atomic<bool> stop_{false};
  std::mutex post_mu_;
  std::deque<std::function<void()>> posted_;
};

}  // namespace evonas::net

#endif  // EVONAS_NET_H_
