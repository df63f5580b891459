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

#include "evonas/broker.h"

#include <algorithm>
#include <cmath>
#include <future>

#include <spdlog/spdlog.h>

#include "evonas/random.h"

namespace evonas {

BrokerCore::BrokerCore(BrokerSettings settings, SendFn send, CloseFn close)
    : settings_(std::move(settings)), send_(std::move(send)), close_(std::move(close)) {}

void BrokerCore::emit(BrokerEvent::Kind kind, const std::string& task_id,
                      const std::string& holder, net::TimePoint now) {
  if (on_event_) on_event_(BrokerEvent{kind, task_id, holder, now});
}

void BrokerCore::enqueue_front(TaskRecord& t) {
  t.state = TaskState::kQueued;
  queue_for(t).push_front(t.task_id);
}

void BrokerCore::end_lease(TaskRecord& t) {
  if (!t.lease) return;
  lease_task_.erase(t.lease->lease_id);
  if (!t.lease->peer) {
    const auto it = worker_lease_.find(t.lease->holder);
    if (it != worker_lease_.end() && it->second == t.lease->lease_id) worker_lease_.erase(it);
  }
  leased_.erase(t.task_id);
  t.lease.reset();
}

std::optional<std::string> BrokerCore::pop_next() {
  for (auto* q : {&owned_queue_, &shared_queue_}) {
    if (!q->empty()) {
      std::string id = std::move(q->front());
      q->pop_front();
      return id;
    }
  }
  return std::nullopt;
}

void BrokerCore::grant(TaskRecord& t, net::ConnId conn, const std::string& worker_id,
                       net::TimePoint now) {
  Lease lease{make_uuid(), worker_id, conn, false, now, now};
  t.state = TaskState::kLeased;
  lease_task_[lease.lease_id] = t.task_id;
  worker_lease_[worker_id] = lease.lease_id;
  leased_.insert(t.task_id);
  send_(conn, wire::TaskAssignment{t.task_id, lease.lease_id, t.genotype, t.eval_config, t.owned});
  t.lease = std::move(lease);
  emit(BrokerEvent::Kind::kLeaseGranted, t.task_id, worker_id, now);
}

void BrokerCore::assign_waiting(net::TimePoint now) {
  while (!waiting_.empty()) {
    auto id = pop_next();
    if (!id) return;
    Waiter w = std::move(waiting_.front());
    waiting_.pop_front();
    grant(tasks_.at(*id), w.conn, w.worker_id, now);
  }
}

std::int64_t BrokerCore::idle_capacity() const {
  if (!owned_queue_.empty() || !shared_queue_.empty()) return 0;
  return static_cast<std::int64_t>(waiting_.size());
}

void BrokerCore::advertise_idle(net::TimePoint now) {
  const auto idle = idle_capacity();
  for (auto& [conn, peer] : peers_) {
    if (peer.advertised == idle) continue;
    send_(conn, wire::Heartbeat{settings_.broker_id, "", idle, -1});
    peer.advertised = idle;
    peer.last_sent = now;
  }
}

void BrokerCore::maybe_share(net::TimePoint now) {
  if (peers_.empty() || owned_queue_.empty()) return;
  const double threshold = settings_.share_factor * static_cast<double>(waiting_.size());
  if (static_cast<double>(owned_queue_.size()) <= threshold) return;
  auto excess = static_cast<std::int64_t>(owned_queue_.size()) -
                static_cast<std::int64_t>(std::floor(threshold));
  for (auto& [conn, peer] : peers_) {
    while (excess > 0 && peer.idle > 0 && !owned_queue_.empty()) {
      TaskRecord& t = tasks_.at(owned_queue_.back());
      owned_queue_.pop_back();
      Lease lease{make_uuid(), peer.peer_id, conn, true, now, now};
      t.state = TaskState::kLeased;
      lease_task_[lease.lease_id] = t.task_id;
      leased_.insert(t.task_id);
      t.lease = std::move(lease);
      send_(conn, wire::ShareTask{t.task_id, settings_.broker_id, t.genotype, t.eval_config});
      ++counters_.tasks_shared;
      --peer.idle;
      --excess;
      emit(BrokerEvent::Kind::kShared, t.task_id, peer.peer_id, now);
    }
  }
}

BrokerCore::SubmitStatus BrokerCore::submit_task(net::ConnId model, const wire::SubmitTask& task,
                                                 net::TimePoint now) {
  const auto it = tasks_.find(task.task_id);
  if (it != tasks_.end()) {
    TaskRecord& t = it->second;
    const bool orphaned = t.origin == 0 || (t.origin != model && t.origin_sender == task.sender_id);
    if (!t.owned || !orphaned) {
      spdlog::warn("broker: duplicate task id {}", task.task_id);
      return SubmitStatus::kDuplicateTaskId;
    }
    t.origin = model;
    t.origin_sender = task.sender_id;
    if (t.state == TaskState::kCompleted && t.result) send_(model, *t.result);
    return SubmitStatus::kReadopted;
  }
  TaskRecord t;
  t.task_id = task.task_id;
  t.genotype = task.genotype;
  t.eval_config = task.eval_config;
  t.owned = true;
  t.origin_sender = task.sender_id;
  t.origin = model;
  owned_queue_.push_back(task.task_id);
  tasks_.emplace(task.task_id, std::move(t));
  emit(BrokerEvent::Kind::kSubmitted, task.task_id, task.sender_id, now);
  assign_waiting(now);
  maybe_share(now);
  return SubmitStatus::kAccepted;
}

void BrokerCore::handle_task_request(net::ConnId conn, const std::string& worker_id,
                                     net::TimePoint now) {
  if (const auto held = worker_lease_.find(worker_id); held != worker_lease_.end()) {
    TaskRecord& t = tasks_.at(lease_task_.at(held->second));
    end_lease(t);
    enqueue_front(t);
    emit(BrokerEvent::Kind::kLeaseRevoked, t.task_id, worker_id, now);
  }
  std::erase_if(waiting_, [&](const Waiter& w) { return w.worker_id == worker_id; });

  if (auto id = pop_next()) {
    grant(tasks_.at(*id), conn, worker_id, now);
    return;
  }
  if (settings_.park_timeout.count() <= 0) {
    send_(conn, wire::NoTask{});
    return;
  }
  waiting_.push_back(Waiter{conn, worker_id, now});
  advertise_idle(now);
}

BrokerCore::HeartbeatStatus BrokerCore::process_worker_heartbeat(net::ConnId conn,
                                                                 const wire::Heartbeat& hb,
                                                                 net::TimePoint now) {
  const auto it = lease_task_.find(hb.lease_id);
  if (it == lease_task_.end()) {
    send_(conn, wire::Reconnect{hb.lease_id, "unknown_lease"});
    return HeartbeatStatus::kReconnect;
  }
  TaskRecord& t = tasks_.at(it->second);
  t.lease->last_heartbeat = now;
  send_(conn, wire::HeartbeatAck{hb.lease_id});
  return HeartbeatStatus::kAck;
}

void BrokerCore::finish(TaskRecord& t, wire::TaskResult result, net::TimePoint now) {
  if (t.state == TaskState::kQueued) std::erase(queue_for(t), t.task_id);
  end_lease(t);
  t.state = TaskState::kCompleted;
  ++counters_.completed;
  if (result.worker_id.empty()) result.worker_id = result.sender_id;
  emit(BrokerEvent::Kind::kCompleted, t.task_id, result.worker_id, now);
  if (t.owned) {
    t.result = result;
    if (t.origin != 0) {
      send_(t.origin, result);
      ++counters_.results_forwarded;
    }
  } else if (t.origin != 0 && peers_.count(t.origin)) {
    send_(t.origin, wire::ReclaimTask{t.task_id, settings_.broker_id, result.fitness,
                                      result.loss, result.error, result.error_message,
                                      result.eval_ms, result.worker_id});
    ++counters_.results_forwarded;
  }
}

BrokerCore::CompleteStatus BrokerCore::complete_task(net::ConnId, const wire::TaskResult& result,
                                                     net::TimePoint now) {
  const auto it = tasks_.find(result.task_id);
  if (it == tasks_.end()) {
    spdlog::warn("broker: result for unknown task {}", result.task_id);
    return CompleteStatus::kUnknownTask;
  }
  TaskRecord& t = it->second;
  if (t.state == TaskState::kCompleted) {
    ++counters_.duplicate_results;
    emit(BrokerEvent::Kind::kDuplicateResult, t.task_id, result.sender_id, now);
    return CompleteStatus::kDuplicate;
  }
  finish(t, result, now);
  return CompleteStatus::kForwarded;
}

void BrokerCore::add_peer(net::ConnId conn, const std::string& peer_id, net::TimePoint now) {
  Peer peer;
  peer.peer_id = peer_id;
  peer.last_heard = now;
  peer.last_sent = now;
  peers_[conn] = std::move(peer);
  spdlog::info("broker {}: linked with {}", settings_.broker_id, peer_id);
  advertise_idle(now);
}

std::vector<net::ConnId> BrokerCore::peer_conns() const {
  std::vector<net::ConnId> out;
  for (const auto& [conn, peer] : peers_) out.push_back(conn);
  return out;
}

void BrokerCore::handle_peer_heartbeat(net::ConnId conn, const wire::Heartbeat& hb,
                                       net::TimePoint now) {
  const auto it = peers_.find(conn);
  if (it == peers_.end()) return;
  it->second.last_heard = now;
  it->second.idle = std::max<std::int64_t>(0, hb.idle_workers);
  for (const auto& id : leased_) {
    TaskRecord& t = tasks_.at(id);
    if (t.lease->peer && t.lease->conn == conn) t.lease->last_heartbeat = now;
  }
  maybe_share(now);
}

void BrokerCore::handle_share_task(net::ConnId conn, const wire::ShareTask& task,
                                   net::TimePoint now) {
  const auto peer = peers_.find(conn);
  if (peer == peers_.end()) {
    spdlog::warn("broker: share_task from unlinked connection ignored");
    return;
  }
  peer->second.last_heard = now;
  if (tasks_.count(task.task_id)) return;
  TaskRecord t;
  t.task_id = task.task_id;
  t.genotype = task.genotype;
  t.eval_config = task.eval_config;
  t.owned = false;
  t.from_broker = peer->second.peer_id;
  t.origin = conn;
  shared_queue_.push_back(task.task_id);
  tasks_.emplace(task.task_id, std::move(t));
  ++counters_.shared_received;
  emit(BrokerEvent::Kind::kSharedReceived, task.task_id, peer->second.peer_id, now);
  assign_waiting(now);
}

BrokerCore::CompleteStatus BrokerCore::handle_reclaim_task(net::ConnId conn,
                                                           const wire::ReclaimTask& r,
                                                           net::TimePoint now) {
  if (const auto peer = peers_.find(conn); peer != peers_.end()) peer->second.last_heard = now;
  wire::TaskResult result{r.task_id, r.sender_id, "", r.fitness, r.loss, r.error,
                          r.error_message, r.eval_ms, r.worker_id};
  return complete_task(conn, result, now);
}

void BrokerCore::drop_peer(net::ConnId conn, net::TimePoint now) {
  const auto it = peers_.find(conn);
  if (it == peers_.end()) return;
  const std::string peer_id = it->second.peer_id;
  peers_.erase(it);
  spdlog::info("broker {}: link with {} dropped", settings_.broker_id, peer_id);

  std::vector<std::string> requeue;
  for (const auto& id : leased_) {
    const TaskRecord& t = tasks_.at(id);
    if (t.lease->peer && t.lease->conn == conn) requeue.push_back(id);
  }
  for (const auto& id : requeue) {
    TaskRecord& t = tasks_.at(id);
    end_lease(t);
    enqueue_front(t);
    emit(BrokerEvent::Kind::kShareRequeued, id, peer_id, now);
  }
  // Work received from that peer: drop what has not started; anything in
  // flight runs to completion but its result has nowhere to go.
  std::erase_if(shared_queue_, [&](const std::string& id) {
    if (tasks_.at(id).origin != conn) return false;
    tasks_.erase(id);
    return true;
  });
  for (auto& [id, t] : tasks_) {
    if (!t.owned && t.origin == conn) t.origin = 0;
  }
  assign_waiting(now);
}

void BrokerCore::connection_closed(net::ConnId conn, net::TimePoint now) {
  std::erase_if(waiting_, [&](const Waiter& w) { return w.conn == conn; });
  if (peers_.count(conn)) {
    drop_peer(conn, now);
    return;
  }
  for (auto& [id, t] : tasks_) {
    if (t.owned && t.origin == conn) t.origin = 0;
  }
}

void BrokerCore::tick(net::TimePoint now) {
  const auto window = settings_.timeouts.expiry_window();

  std::vector<TaskRecord*> expired;
  for (const auto& id : leased_) {
    TaskRecord& t = tasks_.at(id);
    if (now - t.lease->last_heartbeat > window) expired.push_back(&t);
  }
  // Requeue so that the oldest grant ends up at the very front.
  std::sort(expired.begin(), expired.end(), [](const TaskRecord* a, const TaskRecord* b) {
    if (a->lease->granted_at != b->lease->granted_at) {
      return a->lease->granted_at > b->lease->granted_at;
    }
    return a->task_id > b->task_id;
  });
  for (TaskRecord* t : expired) {
    const std::string holder = t->lease->holder;
    end_lease(*t);
    enqueue_front(*t);
    ++counters_.leases_expired;
    spdlog::info("broker {}: lease on {} held by {} expired", settings_.broker_id, t->task_id,
                 holder);
    emit(BrokerEvent::Kind::kLeaseExpired, t->task_id, holder, now);
  }

  while (!waiting_.empty() && now - waiting_.front().since >= settings_.park_timeout) {
    send_(waiting_.front().conn, wire::NoTask{});
    waiting_.pop_front();
  }

  std::vector<net::ConnId> silent;
  for (auto& [conn, peer] : peers_) {
    if (now - peer.last_heard > window) {
      silent.push_back(conn);
      continue;
    }
    if (now - peer.last_sent >= settings_.timeouts.heartbeat_interval) {
      peer.advertised = idle_capacity();
      peer.last_sent = now;
      send_(conn, wire::Heartbeat{settings_.broker_id, "", peer.advertised, -1});
    }
  }
  for (const auto conn : silent) {
    drop_peer(conn, now);
    if (close_) close_(conn);
  }

  assign_waiting(now);
  maybe_share(now);
  advertise_idle(now);
}

BrokerStats BrokerCore::stats() const {
  BrokerStats s = counters_;
  s.owned_queued = owned_queue_.size();
  s.shared_queued = shared_queue_.size();
  s.leased = leased_.size();
  s.waiting_workers = waiting_.size();
  s.peers = peers_.size();
  return s;
}

namespace {

BrokerSettings with_id(BrokerSettings s) {
  if (s.broker_id.empty()) s.broker_id = "broker-" + make_uuid().substr(0, 8);
  return s;
}

std::chrono::milliseconds broker_tick(const wire::ProtocolTimeouts& t) {
  return std::clamp(t.heartbeat_interval / 4, std::chrono::milliseconds(5),
                    std::chrono::milliseconds(100));
}

constexpr std::chrono::milliseconds kConnectTimeout{1000};

}  // namespace

BrokerServer::BrokerServer(BrokerServerConfig cfg)
    : cfg_(std::move(cfg)),
      core_(with_id(cfg_.settings),
            [this](net::ConnId id, const wire::Message& m) { loop_.send(id, m); },
            [this](net::ConnId id) { loop_.close(id); }),
      loop_(*this, broker_tick(cfg_.settings.timeouts)) {
  endpoint_ = loop_.listen(cfg_.listen);
  if (cfg_.nameserver) connect_nameserver();
  for (const auto& ep : cfg_.links) link_to(ep);
}

void BrokerServer::connect_nameserver() {
  try {
    nameserver_conn_ = loop_.connect(*cfg_.nameserver, kConnectTimeout);
  } catch (const net::NetError& e) {
    spdlog::warn("broker {}: nameserver {} unreachable: {}", broker_id(),
                 cfg_.nameserver->to_string(), e.what());
    nameserver_conn_.reset();
  }
  if (!nameserver_conn_) return;
  register_with_nameserver();
  if (cfg_.discover_peers) {
    loop_.send(*nameserver_conn_, wire::BrokerListRequest{broker_id(), wire::Requester::kBroker});
  }
}

void BrokerServer::register_with_nameserver() {
  loop_.send(*nameserver_conn_, wire::RegisterBroker{broker_id(), endpoint_.to_string()});
  last_ns_heartbeat_ = net::Clock::now();
}

void BrokerServer::link_to(const net::Endpoint& ep) {
  const auto address = ep.to_string();
  if (ep == endpoint_ || linked_addresses_.count(address)) return;
  std::optional<net::ConnId> conn;
  try {
    conn = loop_.connect(ep, kConnectTimeout);
  } catch (const net::NetError& e) {
    spdlog::warn("broker {}: cannot link with {}: {}", broker_id(), address, e.what());
  }
  if (!conn) return;
  linked_addresses_.insert(address);
  pending_links_.insert(*conn);
  loop_.send(*conn, wire::LinkRequest{broker_id(), endpoint_.to_string()});
}

void BrokerServer::on_message(net::ConnId id, wire::Message m) {
  const auto now = net::Clock::now();
  if (auto* submit = std::get_if<wire::SubmitTask>(&m)) {
    clients_.insert(id);
    core_.submit_task(id, *submit, now);
  } else if (auto* req = std::get_if<wire::TaskRequest>(&m)) {
    clients_.insert(id);
    core_.handle_task_request(id, req->sender_id, now);
  } else if (auto* hb = std::get_if<wire::Heartbeat>(&m)) {
    if (core_.is_peer(id)) {
      core_.handle_peer_heartbeat(id, *hb, now);
    } else {
      core_.process_worker_heartbeat(id, *hb, now);
    }
  } else if (auto* result = std::get_if<wire::TaskResult>(&m)) {
    core_.complete_task(id, *result, now);
  } else if (auto* link = std::get_if<wire::LinkRequest>(&m)) {
    linked_addresses_.insert(link->address);
    core_.add_peer(id, link->sender_id, now);
    loop_.send(id, wire::LinkAccept{broker_id()});
  } else if (auto* accept = std::get_if<wire::LinkAccept>(&m)) {
    if (pending_links_.erase(id)) core_.add_peer(id, accept->sender_id, now);
  } else if (auto* share = std::get_if<wire::ShareTask>(&m)) {
    core_.handle_share_task(id, *share, now);
  } else if (auto* reclaim = std::get_if<wire::ReclaimTask>(&m)) {
    core_.handle_reclaim_task(id, *reclaim, now);
  } else if (auto* rc = std::get_if<wire::Reconnect>(&m)) {
    if (nameserver_conn_ && id == *nameserver_conn_) {
      spdlog::info("broker {}: nameserver asked to reconnect ({})", broker_id(), rc->reason);
      register_with_nameserver();
    }
  } else if (auto* list = std::get_if<wire::BrokerList>(&m)) {
    for (const auto& entry : list->brokers) {
      if (entry.broker_id == broker_id()) continue;
      try {
        link_to(net::Endpoint::parse(entry.address));
      } catch (const std::invalid_argument&) {
        spdlog::warn("broker {}: bad peer address '{}'", broker_id(), entry.address);
      }
    }
  } else if (std::holds_alternative<wire::HeartbeatAck>(m)) {
    // Nameserver or peer acknowledgement; nothing to do.
  } else {
    spdlog::warn("broker {}: ignoring unexpected '{}' message", broker_id(), wire::type_name(m));
  }
}

void BrokerServer::on_close(net::ConnId id) {
  if (nameserver_conn_ && *nameserver_conn_ == id) nameserver_conn_.reset();
  pending_links_.erase(id);
  clients_.erase(id);
  core_.connection_closed(id, net::Clock::now());
}

void BrokerServer::on_tick(net::TimePoint now) {
  core_.tick(now);
  if (!cfg_.nameserver) return;
  if (now - last_ns_heartbeat_ < cfg_.settings.timeouts.heartbeat_interval) return;
  if (!nameserver_conn_) {
    last_ns_heartbeat_ = now;
    connect_nameserver();
    return;
  }
  last_ns_heartbeat_ = now;
  loop_.send(*nameserver_conn_,
             wire::Heartbeat{broker_id(), "", core_.idle_capacity(),
                             static_cast<std::int64_t>(clients_.size())});
}

BrokerStats BrokerServer::stats() {
  std::promise<BrokerStats> p;
  auto f = p.get_future();
  loop_.post([&] { p.set_value(core_.stats()); });
  return f.get();
}

void BrokerServer::drop_links() {
  std::promise<void> p;
  auto f = p.get_future();
  loop_.post([&] {
    for (const auto conn : core_.peer_conns()) loop_.close(conn);
    p.set_value();
  });
  f.get();
}

}  // namespace evonas
