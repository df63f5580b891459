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

// Registry of live brokers. Brokers register and then heartbeat; a broker
// silent for heartbeat_interval * misses is dropped, and a heartbeat from a
// dropped or unknown broker is answered with `reconnect` so it registers
// again.

#ifndef EVONAS_NAMESERVER_H_
#define EVONAS_NAMESERVER_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/net.h"
#include "evonas/wire.h"

namespace evonas {

struct BrokerRecord {
  std::string broker_id;
  std::string address;
  net::TimePoint last_heartbeat;
  net::TimePoint registered_at;
  std::int64_t clients = -1;
  std::uint64_t order = 0;  // registration sequence number
};

// Registry state machine. Time is passed in, so tests drive it with a fake
// clock.
class NameserverCore {
 public:
  enum class RegisterStatus { kRegistered, kRefreshed, kAddressConflict, kBadAddress };
  enum class HeartbeatReply { kAck, kReconnect };

  explicit NameserverCore(wire::ProtocolTimeouts timeouts = {}) : timeouts_(timeouts) {}

  // Idempotent for an identical (id, address). Re-registering an id with a
  // new address moves it.
  RegisterStatus register_broker(const std::string& id, const std::string& address,
                                 net::TimePoint now);

  // Workers and models get brokers by ascending client count (unreported
  // counts last), ties by registration order. Brokers get every other
  // broker in registration order.
  std::vector<BrokerRecord> lookup_brokers(wire::Requester requester,
                                           std::string_view requester_id, net::TimePoint now);

  HeartbeatReply process_heartbeat(const std::string& id, net::TimePoint now,
                                   std::int64_t clients = -1);

  // Drops every record whose last heartbeat is older than the expiry window.
  void sweep(net::TimePoint now);

  std::size_t size() const { return records_.size(); }

 private:
  bool live(const BrokerRecord& r, net::TimePoint now) const;

  wire::ProtocolTimeouts timeouts_;
  std::vector<BrokerRecord> records_;
  std::uint64_t next_order_ = 0;
};

class NameserverServer final : private net::EventLoop::Handler {
 public:
  NameserverServer(const net::Endpoint& listen, wire::ProtocolTimeouts timeouts = {});

  const net::Endpoint& endpoint() const { return endpoint_; }

  // Blocks until stop().
  void run() { loop_.run(); }
  void stop() { loop_.stop(); }

 private:
  void on_open(net::ConnId, bool) override {}
  void on_message(net::ConnId id, wire::Message m) override;
  void on_close(net::ConnId) override {}
  void on_tick(net::TimePoint now) override { core_.sweep(now); }

  NameserverCore core_;
  net::EventLoop loop_;
  net::Endpoint endpoint_;
};

// Liveness sweep period for a heartbeat interval: a quarter interval, at
// least 5 ms.
std::chrono::milliseconds sweep_period(const wire::ProtocolTimeouts& t);

// Client-side lookup: one broker_list_request round trip. Throws
// net::NetError when the nameserver is unreachable or does not answer
// within `timeout`.
std::vector<wire::BrokerEntry> query_nameserver(const net::Endpoint& nameserver,
                                                const std::string& sender_id,
                                                wire::Requester requester,
                                                std::chrono::milliseconds timeout);

}  // namespace evonas

#endif  // EVONAS_NAMESERVER_H_
