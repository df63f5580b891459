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

// The broker moves tasks from models to workers and results back.
//
// Task lifecycle: queued -> leased -> completed. A lease is held by one
// worker (or, for work shared out, by one linked broker) and is kept alive
// by heartbeats; a lease that misses heartbeat_misses_to_expire intervals
// expires and its task goes back to the front of its queue. The first
// result for a task is forwarded to its origin exactly once; later results
// are acknowledged and dropped.
//
// Owned tasks (submitted by a model connected here) are always handed out
// before shared tasks (accepted from a linked broker). When the owned queue
// is longer than share_factor times the number of idle local workers and a
// linked broker reports idle workers, tasks from the back of the owned queue
// are shared with it. Shared tasks are never shared again.

#ifndef EVONAS_BROKER_H_
#define EVONAS_BROKER_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "evonas/net.h"
#include "evonas/wire.h"

namespace evonas {

struct BrokerSettings {
  std::string broker_id;
  wire::ProtocolTimeouts timeouts;
  double share_factor = 2.0;
  // A task_request that finds no work waits this long for a submission
  // before it is answered with no_task.
  std::chrono::milliseconds park_timeout{2000};
};

struct BrokerEvent {
  enum class Kind {
    kSubmitted,
    kLeaseGranted,
    kLeaseExpired,
    kLeaseRevoked,
    kCompleted,
    kDuplicateResult,
    kShared,
    kSharedReceived,
    kShareRequeued,
  };
  Kind kind;
  std::string task_id;
  std::string holder;  // worker id or peer broker id
  net::TimePoint time;
};

struct BrokerStats {
  std::size_t owned_queued = 0;
  std::size_t shared_queued = 0;
  std::size_t leased = 0;
  std::size_t completed = 0;
  std::size_t waiting_workers = 0;
  std::size_t peers = 0;
  std::uint64_t results_forwarded = 0;
  std::uint64_t duplicate_results = 0;
  std::uint64_t leases_expired = 0;
  std::uint64_t tasks_shared = 0;
  std::uint64_t shared_received = 0;
};

class BrokerCore {
 public:
  using SendFn = std::function<void(net::ConnId, const wire::Message&)>;
  using EventFn = std::function<void(const BrokerEvent&)>;
  using CloseFn = std::function<void(net::ConnId)>;

  enum class SubmitStatus { kAccepted, kReadopted, kDuplicateTaskId };
  enum class HeartbeatStatus { kAck, kReconnect };
  enum class CompleteStatus { kForwarded, kDuplicate, kUnknownTask };

  // `close` is called when a linked broker goes silent.
  BrokerCore(BrokerSettings settings, SendFn send, CloseFn close = {});

  void set_event_listener(EventFn fn) { on_event_ = std::move(fn); }
  const BrokerSettings& settings() const { return settings_; }

  // A resubmission from a new connection after the original model
  // connection dropped re-adopts the task (and replays its result if it
  // already finished); any other repeated id is a duplicate.
  SubmitStatus submit_task(net::ConnId model, const wire::SubmitTask& task, net::TimePoint now);

  // Assigns immediately or parks the worker until work arrives or
  // park_timeout passes. A worker that asks while still holding a lease
  // has restarted: the old lease is revoked and its task requeued first.
  void handle_task_request(net::ConnId conn, const std::string& worker_id, net::TimePoint now);

  HeartbeatStatus process_worker_heartbeat(net::ConnId conn, const wire::Heartbeat& hb,
                                           net::TimePoint now);

  CompleteStatus complete_task(net::ConnId conn, const wire::TaskResult& result,
                               net::TimePoint now);

  // Linking. The server handles link_request/link_accept framing.
  void add_peer(net::ConnId conn, const std::string& peer_id, net::TimePoint now);
  bool is_peer(net::ConnId conn) const { return peers_.count(conn) != 0; }
  std::vector<net::ConnId> peer_conns() const;
  void handle_peer_heartbeat(net::ConnId conn, const wire::Heartbeat& hb, net::TimePoint now);
  void handle_share_task(net::ConnId conn, const wire::ShareTask& task, net::TimePoint now);
  CompleteStatus handle_reclaim_task(net::ConnId conn, const wire::ReclaimTask& r,
                                     net::TimePoint now);

  void connection_closed(net::ConnId conn, net::TimePoint now);

  // Lease expiry, park timeouts, peer liveness and heartbeats, sharing.
  void tick(net::TimePoint now);

  BrokerStats stats() const;
  // Idle capacity advertised to linked brokers.
  std::int64_t idle_capacity() const;

 private:
  enum class TaskState { kQueued, kLeased, kCompleted };

  struct Lease {
    std::string lease_id;
    std::string holder;  // worker id, or peer broker id for shared-out work
    net::ConnId conn = 0;
    bool peer = false;
    net::TimePoint granted_at;
    net::TimePoint last_heartbeat;
  };

  struct TaskRecord {
    std::string task_id;
    std::string genotype;
    EvalConfig eval_config;
    bool owned = true;
    std::string from_broker;     // shared tasks: originating broker
    std::string origin_sender;   // model id that submitted it
    net::ConnId origin = 0;      // model or peer connection; 0 when gone
    TaskState state = TaskState::kQueued;
    std::optional<Lease> lease;
    std::optional<wire::TaskResult> result;
  };

  struct Waiter {
    net::ConnId conn;
    std::string worker_id;
    net::TimePoint since;
  };

  struct Peer {
    std::string peer_id;
    net::TimePoint last_heard;
    net::TimePoint last_sent;
    std::int64_t idle = 0;
    std::int64_t advertised = -1;  // last idle count we sent
  };

  std::deque<std::string>& queue_for(const TaskRecord& t) {
    return t.owned ? owned_queue_ : shared_queue_;
  }
  void emit(BrokerEvent::Kind kind, const std::string& task_id, const std::string& holder,
            net::TimePoint now);
  void enqueue_front(TaskRecord& t);
  void end_lease(TaskRecord& t);
  std::optional<std::string> pop_next();
  void grant(TaskRecord& t, net::ConnId conn, const std::string& worker_id, net::TimePoint now);
  void assign_waiting(net::TimePoint now);
  void maybe_share(net::TimePoint now);
  void finish(TaskRecord& t, wire::TaskResult result, net::TimePoint now);
  void drop_peer(net::ConnId conn, net::TimePoint now);
  void advertise_idle(net::TimePoint now);

  BrokerSettings settings_;
  SendFn send_;
  CloseFn close_;
  EventFn on_event_;

  std::unordered_map<std::string, TaskRecord> tasks_;
  std::deque<std::string> owned_queue_;
  std::deque<std::string> shared_queue_;
  std::unordered_set<std::string> leased_;                      // task ids
  std::unordered_map<std::string, std::string> lease_task_;     // lease id -> task id
  std::unordered_map<std::string, std::string> worker_lease_;   // worker id -> lease id
  std::deque<Waiter> waiting_;
  std::map<net::ConnId, Peer> peers_;
  BrokerStats counters_;
};

struct BrokerServerConfig {
  net::Endpoint listen;
  std::optional<net::Endpoint> nameserver;
  // Brokers to link with at startup.
  std::vector<net::Endpoint> links;
  // Also link with every broker the nameserver knows at startup.
  bool discover_peers = false;
  BrokerSettings settings;
};

class BrokerServer final : private net::EventLoop::Handler {
 public:
  explicit BrokerServer(BrokerServerConfig cfg);

  const net::Endpoint& endpoint() const { return endpoint_; }
  const std::string& broker_id() const { return core_.settings().broker_id; }

  // Must be called before run(); invoked on the loop thread.
  void set_event_listener(BrokerCore::EventFn fn) { core_.set_event_listener(std::move(fn)); }

  // Blocks until stop().
  void run() { loop_.run(); }
  void stop() { loop_.stop(); }

  // Thread-safe snapshot; the loop must be running.
  BrokerStats stats();
  // Thread-safe; closes every broker link (fault injection for tests).
  void drop_links();

 private:
  void on_open(net::ConnId, bool) override {}
  void on_message(net::ConnId id, wire::Message m) override;
  void on_close(net::ConnId id) override;
  void on_tick(net::TimePoint now) override;

  void connect_nameserver();
  void register_with_nameserver();
  void link_to(const net::Endpoint& ep);

  BrokerServerConfig cfg_;
  BrokerCore core_;
  net::EventLoop loop_;
  net::Endpoint endpoint_;
  std::optional<net::ConnId> nameserver_conn_;
  net::TimePoint last_ns_heartbeat_{};
  std::unordered_set<net::ConnId> pending_links_;
  std::unordered_set<net::ConnId> clients_;
  std::unordered_set<std::string> linked_addresses_;
};

}  // namespace evonas

#endif  // EVONAS_BROKER_H_
