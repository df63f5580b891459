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

#include "evonas/nameserver.h"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace evonas {

std::chrono::milliseconds sweep_period(const wire::ProtocolTimeouts& t) {
  return std::max(std::chrono::milliseconds(5), t.heartbeat_interval / 4);
}

bool NameserverCore::live(const BrokerRecord& r, net::TimePoint now) const {
  return now - r.last_heartbeat <= timeouts_.expiry_window();
}

void NameserverCore::sweep(net::TimePoint now) {
  std::erase_if(records_, [&](const BrokerRecord& r) {
    if (live(r, now)) return false;
    spdlog::info("nameserver: broker {} ({}) expired", r.broker_id, r.address);
    return true;
  });
}

NameserverCore::RegisterStatus NameserverCore::register_broker(const std::string& id,
                                                               const std::string& address,
                                                               net::TimePoint now) {
  try {
    net::Endpoint::parse(address);
  } catch (const std::invalid_argument&) {
    return RegisterStatus::kBadAddress;
  }
  sweep(now);
  for (const auto& r : records_) {
    if (r.address == address && r.broker_id != id) return RegisterStatus::kAddressConflict;
  }
  const auto it = std::find_if(records_.begin(), records_.end(),
                               [&](const BrokerRecord& r) { return r.broker_id == id; });
  if (it != records_.end()) {
    it->address = address;
    it->last_heartbeat = now;
    return RegisterStatus::kRefreshed;
  }
  records_.push_back(BrokerRecord{id, address, now, now, -1, next_order_++});
  return RegisterStatus::kRegistered;
}

std::vector<BrokerRecord> NameserverCore::lookup_brokers(wire::Requester requester,
                                                         std::string_view requester_id,
                                                         net::TimePoint now) {
  sweep(now);
  std::vector<BrokerRecord> out;
  for (const auto& r : records_) {
    if (requester == wire::Requester::kBroker && r.broker_id == requester_id) continue;
    out.push_back(r);
  }
  if (requester != wire::Requester::kBroker) {
    std::stable_sort(out.begin(), out.end(), [](const BrokerRecord& a, const BrokerRecord& b) {
      const bool ra = a.clients >= 0;
      const bool rb = b.clients >= 0;
      if (ra != rb) return ra;
      if (ra && a.clients != b.clients) return a.clients < b.clients;
      return a.order < b.order;
    });
  }
  return out;
}

NameserverCore::HeartbeatReply NameserverCore::process_heartbeat(const std::string& id,
                                                                 net::TimePoint now,
                                                                 std::int64_t clients) {
  sweep(now);
  const auto it = std::find_if(records_.begin(), records_.end(),
                               [&](const BrokerRecord& r) { return r.broker_id == id; });
  if (it == records_.end()) return HeartbeatReply::kReconnect;
  it->last_heartbeat = now;
  if (clients >= 0) it->clients = clients;
  return HeartbeatReply::kAck;
}

NameserverServer::NameserverServer(const net::Endpoint& listen, wire::ProtocolTimeouts timeouts)
    : core_(timeouts), loop_(*this, sweep_period(timeouts)) {
  endpoint_ = loop_.listen(listen);
}

void NameserverServer::on_message(net::ConnId id, wire::Message m) {
  const auto now = net::Clock::now();
  if (auto* reg = std::get_if<wire::RegisterBroker>(&m)) {
    using S = NameserverCore::RegisterStatus;
    switch (core_.register_broker(reg->sender_id, reg->address, now)) {
      case S::kRegistered:
        spdlog::info("nameserver: registered broker {} at {}", reg->sender_id, reg->address);
        [[fallthrough]];
      case S::kRefreshed:
        loop_.send(id, wire::HeartbeatAck{""});
        break;
      case S::kAddressConflict:
        loop_.send(id, wire::Reconnect{"", "address_conflict"});
        break;
      case S::kBadAddress:
        loop_.send(id, wire::Reconnect{"", "bad_address"});
        break;
    }
  } else if (auto* hb = std::get_if<wire::Heartbeat>(&m)) {
    if (core_.process_heartbeat(hb->sender_id, now, hb->clients) ==
        NameserverCore::HeartbeatReply::kAck) {
      loop_.send(id, wire::HeartbeatAck{hb->lease_id});
    } else {
      loop_.send(id, wire::Reconnect{hb->lease_id, "expired"});
    }
  } else if (auto* req = std::get_if<wire::BrokerListRequest>(&m)) {
    wire::BrokerList list;
    for (const auto& r : core_.lookup_brokers(req->requester, req->sender_id, now)) {
      list.brokers.push_back({r.broker_id, r.address, r.clients});
    }
    loop_.send(id, list);
  } else {
    spdlog::warn("nameserver: ignoring unexpected '{}' message", wire::type_name(m));
  }
}

std::vector<wire::BrokerEntry> query_nameserver(const net::Endpoint& nameserver,
                                                const std::string& sender_id,
                                                wire::Requester requester,
                                                std::chrono::milliseconds timeout) {
  auto conn = net::Connection::open(nameserver, timeout);
  conn.send(wire::BrokerListRequest{sender_id, requester});
  const auto deadline = net::Clock::now() + timeout;
  while (net::Clock::now() < deadline) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - net::Clock::now());
    auto m = conn.receive(std::max(left, std::chrono::milliseconds(1)));
    if (!m) break;
    if (auto* list = std::get_if<wire::BrokerList>(&*m)) return list->brokers;
  }
  throw net::NetError("nameserver " + nameserver.to_string() + " did not answer");
}

}  // namespace evonas
