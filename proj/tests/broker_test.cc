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

#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "evonas/broker.h"
#include "evonas/random.h"
#include "test_support.h"

namespace evonas {
namespace {

using namespace std::chrono_literals;
using testing_support::FakeClock;
using testing_support::Outbox;
using Kind = BrokerEvent::Kind;

constexpr net::ConnId kModel = 1;
constexpr net::ConnId kW1 = 11;
constexpr net::ConnId kW2 = 12;
constexpr net::ConnId kPeer = 21;

wire::ProtocolTimeouts fast() {
  wire::ProtocolTimeouts t;
  t.heartbeat_interval = 100ms;
  t.heartbeat_misses_to_expire = 3;
  return t;
}

class BrokerCoreTest : public ::testing::Test {
 protected:
  BrokerCoreTest() { make(500ms); }

  void make(std::chrono::milliseconds park) {
    BrokerSettings s;
    s.broker_id = "A";
    s.timeouts = fast();
    s.park_timeout = park;
    core_ = std::make_unique<BrokerCore>(
        s, [this](net::ConnId c, const wire::Message& m) { out_.sent.emplace_back(c, m); },
        [this](net::ConnId c) { out_.closed.push_back(c); });
    core_->set_event_listener([this](const BrokerEvent& e) { events_.push_back(e); });
  }

  void submit(const std::string& id, net::ConnId model = kModel, const std::string& sender = "m") {
    ASSERT_EQ(core_->submit_task(model, wire::SubmitTask{id, sender, "dropout2d", {}, 0}, clock_.now),
              BrokerCore::SubmitStatus::kAccepted);
  }

  std::vector<std::string> assigned(net::ConnId conn) const {
    std::vector<std::string> ids;
    for (const auto& a : out_.of_type<wire::TaskAssignment>(conn)) ids.push_back(a.task_id);
    return ids;
  }
  wire::TaskAssignment last_assignment(net::ConnId conn) const {
    auto v = out_.of_type<wire::TaskAssignment>(conn);
    if (v.empty()) throw std::logic_error("no assignment");
    return v.back();
  }
  wire::TaskResult result_for(const wire::TaskAssignment& a, const std::string& worker,
                              double fitness = 1.0) const {
    return wire::TaskResult{a.task_id, worker, a.lease_id, fitness, 1.0 / fitness, false, "", 1.0,
                            worker};
  }
  std::size_t count(Kind k) const {
    std::size_t n = 0;
    for (const auto& e : events_) n += e.kind == k ? 1 : 0;
    return n;
  }

  FakeClock clock_;
  Outbox out_;
  std::vector<BrokerEvent> events_;
  std::unique_ptr<BrokerCore> core_;
};

TEST_F(BrokerCoreTest, FifoAssignment) {
  submit("t1");
  submit("t2");
  submit("t3");
  EXPECT_EQ(core_->stats().owned_queued, 3u);
  core_->handle_task_request(kW1, "w1", clock_.now);
  core_->handle_task_request(kW2, "w2", clock_.now);
  core_->handle_task_request(kW1 + 100, "w3", clock_.now);
  EXPECT_EQ(assigned(kW1), std::vector<std::string>{"t1"});
  EXPECT_EQ(assigned(kW2), std::vector<std::string>{"t2"});
  EXPECT_EQ(assigned(kW1 + 100), std::vector<std::string>{"t3"});
  EXPECT_EQ(core_->stats().leased, 3u);
}

TEST_F(BrokerCoreTest, DuplicateTaskId) {
  submit("t1");
  EXPECT_EQ(core_->submit_task(kModel, wire::SubmitTask{"t1", "m", "dropout2d", {}, 0}, clock_.now),
            BrokerCore::SubmitStatus::kDuplicateTaskId);
  EXPECT_EQ(core_->submit_task(kModel + 1, wire::SubmitTask{"t1", "other", "dropout2d", {}, 0},
                               clock_.now),
            BrokerCore::SubmitStatus::kDuplicateTaskId);
  EXPECT_EQ(core_->stats().owned_queued, 1u);
}

TEST_F(BrokerCoreTest, ParkedWorkersServedLongestWaitingFirst) {
  core_->handle_task_request(kW1, "w1", clock_.now);
  clock_.advance(10ms);
  core_->handle_task_request(kW2, "w2", clock_.now);
  EXPECT_EQ(core_->stats().waiting_workers, 2u);
  EXPECT_EQ(core_->idle_capacity(), 2);
  submit("t1");
  EXPECT_EQ(assigned(kW1), std::vector<std::string>{"t1"});
  EXPECT_TRUE(assigned(kW2).empty());
  submit("t2");
  EXPECT_EQ(assigned(kW2), std::vector<std::string>{"t2"});
}

TEST_F(BrokerCoreTest, ParkTimeoutAnswersNoTask) {
  core_->handle_task_request(kW1, "w1", clock_.now);
  EXPECT_EQ(out_.count<wire::NoTask>(), 0u);
  clock_.advance(499ms);
  core_->tick(clock_.now);
  EXPECT_EQ(out_.count<wire::NoTask>(), 0u);
  clock_.advance(1ms);
  core_->tick(clock_.now);
  EXPECT_EQ(out_.of_type<wire::NoTask>(kW1).size(), 1u);
  EXPECT_EQ(core_->stats().waiting_workers, 0u);
}

TEST_F(BrokerCoreTest, NoParkingMeansImmediateNoTask) {
  make(0ms);
  core_->handle_task_request(kW1, "w1", clock_.now);
  EXPECT_EQ(out_.of_type<wire::NoTask>(kW1).size(), 1u);
}

TEST_F(BrokerCoreTest, OwnedBeforeShared) {
  core_->add_peer(kPeer, "B", clock_.now);
  core_->handle_share_task(kPeer, wire::ShareTask{"s1", "B", "dropout2d", {}}, clock_.now);
  submit("o1");
  core_->handle_task_request(kW1, "w1", clock_.now);
  EXPECT_EQ(assigned(kW1), std::vector<std::string>{"o1"});
  EXPECT_TRUE(last_assignment(kW1).owned);
  core_->handle_task_request(kW2, "w2", clock_.now);
  EXPECT_EQ(assigned(kW2), std::vector<std::string>{"s1"});
  EXPECT_FALSE(last_assignment(kW2).owned);
}

TEST_F(BrokerCoreTest, ReRequestRevokesAndRequeuesAtFront) {
  submit("t1");
  submit("t2");
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto first = last_assignment(kW1);
  ASSERT_EQ(first.task_id, "t1");
  // w1 restarted and asks again on a new connection.
  core_->handle_task_request(kW2, "w1", clock_.now);
  EXPECT_EQ(count(Kind::kLeaseRevoked), 1u);
  EXPECT_EQ(last_assignment(kW2).task_id, "t1");
  EXPECT_NE(last_assignment(kW2).lease_id, first.lease_id);
  EXPECT_EQ(core_->process_worker_heartbeat(kW1, {"w1", first.lease_id, 0, -1}, clock_.now),
            BrokerCore::HeartbeatStatus::kReconnect);
  EXPECT_EQ(core_->stats().owned_queued, 1u);
}

TEST_F(BrokerCoreTest, HeartbeatsKeepTheLeaseAlive) {
  submit("t1");
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto a = last_assignment(kW1);
  for (int i = 0; i < 20; ++i) {
    clock_.advance(100ms);
    ASSERT_EQ(core_->process_worker_heartbeat(kW1, {"w1", a.lease_id, 0, -1}, clock_.now),
              BrokerCore::HeartbeatStatus::kAck);
    core_->tick(clock_.now);
  }
  EXPECT_EQ(out_.of_type<wire::HeartbeatAck>(kW1).size(), 20u);
  EXPECT_EQ(core_->stats().leases_expired, 0u);
}

TEST_F(BrokerCoreTest, SilentWorkerLosesTheTaskWithinTheWindow) {
  submit("t1");
  submit("t2");
  core_->handle_task_request(kW1, "w1", clock_.now);
  clock_.advance(300ms);
  core_->tick(clock_.now);
  EXPECT_EQ(core_->stats().leased, 1u);
  clock_.advance(1ms);
  core_->tick(clock_.now);
  EXPECT_EQ(core_->stats().leases_expired, 1u);
  EXPECT_EQ(count(Kind::kLeaseExpired), 1u);
  // Requeued in front of t2.
  core_->handle_task_request(kW2, "w2", clock_.now);
  EXPECT_EQ(assigned(kW2), std::vector<std::string>{"t1"});
}

TEST_F(BrokerCoreTest, ExpiredLeasesRequeueOldestFirst) {
  submit("t1");
  submit("t2");
  submit("t3");
  core_->handle_task_request(kW1, "w1", clock_.now);
  clock_.advance(10ms);
  core_->handle_task_request(kW2, "w2", clock_.now);
  clock_.advance(400ms);
  core_->tick(clock_.now);
  EXPECT_EQ(core_->stats().owned_queued, 3u);
  std::vector<std::string> order;
  for (int i = 0; i < 3; ++i) {
    const net::ConnId c = 100 + i;
    core_->handle_task_request(c, "n" + std::to_string(i), clock_.now);
    order.push_back(last_assignment(c).task_id);
  }
  EXPECT_EQ(order, (std::vector<std::string>{"t1", "t2", "t3"}));
}

TEST_F(BrokerCoreTest, FirstResultWins) {
  submit("t1");
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto a1 = last_assignment(kW1);
  clock_.advance(400ms);
  core_->tick(clock_.now);
  core_->handle_task_request(kW2, "w2", clock_.now);
  const auto a2 = last_assignment(kW2);
  ASSERT_EQ(a2.task_id, "t1");

  EXPECT_EQ(core_->complete_task(kW2, result_for(a2, "w2", 2.0), clock_.now),
            BrokerCore::CompleteStatus::kForwarded);
  EXPECT_EQ(core_->complete_task(kW1, result_for(a1, "w1", 3.0), clock_.now),
            BrokerCore::CompleteStatus::kDuplicate);
  const auto results = out_.of_type<wire::TaskResult>(kModel);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].task_id, "t1");
  EXPECT_EQ(results[0].fitness, 2.0);
  EXPECT_EQ(core_->stats().duplicate_results, 1u);
  EXPECT_EQ(core_->process_worker_heartbeat(kW2, {"w2", a2.lease_id, 0, -1}, clock_.now),
            BrokerCore::HeartbeatStatus::kReconnect);
}

TEST_F(BrokerCoreTest, LateResultAfterExpiryStillCounts) {
  submit("t1");
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto a1 = last_assignment(kW1);
  clock_.advance(400ms);
  core_->tick(clock_.now);
  ASSERT_EQ(core_->stats().owned_queued, 1u);
  EXPECT_EQ(core_->complete_task(kW1, result_for(a1, "w1"), clock_.now),
            BrokerCore::CompleteStatus::kForwarded);
  EXPECT_EQ(core_->stats().owned_queued, 0u);
  EXPECT_EQ(out_.of_type<wire::TaskResult>(kModel).size(), 1u);
}

TEST_F(BrokerCoreTest, UnknownTaskResult) {
  EXPECT_EQ(core_->complete_task(kW1, wire::TaskResult{"nope", "w1", "l"}, clock_.now),
            BrokerCore::CompleteStatus::kUnknownTask);
}

TEST_F(BrokerCoreTest, ModelReconnectReadoptsAndReplays) {
  submit("t1", kModel, "m");
  submit("t2", kModel, "m");
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto a = last_assignment(kW1);
  core_->connection_closed(kModel, clock_.now);
  core_->complete_task(kW1, result_for(a, "w1", 5.0), clock_.now);
  EXPECT_TRUE(out_.of_type<wire::TaskResult>(kModel).empty());

  constexpr net::ConnId kModel2 = 2;
  EXPECT_EQ(core_->submit_task(kModel2, {"t1", "m", "dropout2d", {}, 0}, clock_.now),
            BrokerCore::SubmitStatus::kReadopted);
  EXPECT_EQ(core_->submit_task(kModel2, {"t2", "m", "dropout2d", {}, 0}, clock_.now),
            BrokerCore::SubmitStatus::kReadopted);
  const auto replay = out_.of_type<wire::TaskResult>(kModel2);
  ASSERT_EQ(replay.size(), 1u);
  EXPECT_EQ(replay[0].fitness, 5.0);
  core_->handle_task_request(kW2, "w2", clock_.now);
  core_->complete_task(kW2, result_for(last_assignment(kW2), "w2"), clock_.now);
  EXPECT_EQ(out_.of_type<wire::TaskResult>(kModel2).size(), 2u);
}

TEST_F(BrokerCoreTest, ClosedWorkerConnectionLeavesTheQueue) {
  core_->handle_task_request(kW1, "w1", clock_.now);
  core_->connection_closed(kW1, clock_.now);
  submit("t1");
  EXPECT_TRUE(out_.of_type<wire::TaskAssignment>(kW1).empty());
  EXPECT_EQ(core_->stats().owned_queued, 1u);
}

TEST_F(BrokerCoreTest, SharesExcessWithAnIdlePeer) {
  core_->add_peer(kPeer, "B", clock_.now);
  for (int i = 0; i < 5; ++i) submit("t" + std::to_string(i));
  EXPECT_TRUE(out_.of_type<wire::ShareTask>(kPeer).empty());
  core_->handle_peer_heartbeat(kPeer, {"B", "", 2, -1}, clock_.now);
  const auto shared = out_.of_type<wire::ShareTask>(kPeer);
  ASSERT_EQ(shared.size(), 2u);
  // From the back of the queue.
  EXPECT_EQ(shared[0].task_id, "t4");
  EXPECT_EQ(shared[1].task_id, "t3");
  EXPECT_EQ(shared[0].sender_id, "A");
  EXPECT_EQ(core_->stats().tasks_shared, 2u);
  EXPECT_EQ(core_->stats().owned_queued, 3u);

  // The peer reclaims one.
  EXPECT_EQ(core_->handle_reclaim_task(kPeer, {"t4", "B", 7.0, 1.0 / 7.0, false, "", 3.0, "bw"},
                                       clock_.now),
            BrokerCore::CompleteStatus::kForwarded);
  const auto results = out_.of_type<wire::TaskResult>(kModel);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].task_id, "t4");
  EXPECT_EQ(results[0].worker_id, "bw");
}

TEST_F(BrokerCoreTest, NoImbalanceNoSharing) {
  core_->add_peer(kPeer, "B", clock_.now);
  core_->handle_peer_heartbeat(kPeer, {"B", "", 4, -1}, clock_.now);
  core_->handle_task_request(kW1, "w1", clock_.now);
  core_->handle_task_request(kW2, "w2", clock_.now);
  submit("t1");
  submit("t2");
  core_->tick(clock_.now);
  EXPECT_EQ(out_.count<wire::ShareTask>(), 0u);
}

TEST_F(BrokerCoreTest, SharedTaskResultGoesBackAsReclaim) {
  core_->add_peer(kPeer, "B", clock_.now);
  core_->handle_share_task(kPeer, {"s1", "B", "dropout2d", {}}, clock_.now);
  EXPECT_EQ(core_->stats().shared_received, 1u);
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto a = last_assignment(kW1);
  EXPECT_EQ(core_->complete_task(kW1, result_for(a, "w1", 4.0), clock_.now),
            BrokerCore::CompleteStatus::kForwarded);
  const auto reclaim = out_.of_type<wire::ReclaimTask>(kPeer);
  ASSERT_EQ(reclaim.size(), 1u);
  EXPECT_EQ(reclaim[0].task_id, "s1");
  EXPECT_EQ(reclaim[0].sender_id, "A");
  EXPECT_EQ(reclaim[0].fitness, 4.0);
}

TEST_F(BrokerCoreTest, SharedTasksAreNotSharedAgain) {
  core_->add_peer(kPeer, "B", clock_.now);
  core_->add_peer(kPeer + 1, "C", clock_.now);
  core_->handle_peer_heartbeat(kPeer + 1, {"C", "", 5, -1}, clock_.now);
  for (int i = 0; i < 4; ++i) {
    core_->handle_share_task(kPeer, {"s" + std::to_string(i), "B", "dropout2d", {}}, clock_.now);
  }
  core_->tick(clock_.now);
  EXPECT_TRUE(out_.of_type<wire::ShareTask>(kPeer + 1).empty());
}

TEST_F(BrokerCoreTest, LinkDropRequeuesSharedOutWork) {
  core_->add_peer(kPeer, "B", clock_.now);
  for (int i = 0; i < 3; ++i) submit("t" + std::to_string(i));
  core_->handle_peer_heartbeat(kPeer, {"B", "", 1, -1}, clock_.now);
  ASSERT_EQ(out_.of_type<wire::ShareTask>(kPeer).size(), 1u);
  core_->connection_closed(kPeer, clock_.now);
  EXPECT_EQ(count(Kind::kShareRequeued), 1u);
  EXPECT_EQ(core_->stats().owned_queued, 3u);
  EXPECT_EQ(core_->stats().peers, 0u);
  // Requeued at the front.
  core_->handle_task_request(kW1, "w1", clock_.now);
  EXPECT_EQ(last_assignment(kW1).task_id, "t2");
}

TEST_F(BrokerCoreTest, SilentPeerIsDroppedAndClosed) {
  core_->add_peer(kPeer, "B", clock_.now);
  for (int i = 0; i < 3; ++i) submit("t" + std::to_string(i));
  core_->handle_peer_heartbeat(kPeer, {"B", "", 1, -1}, clock_.now);
  for (int i = 0; i < 3; ++i) {
    clock_.advance(100ms);
    core_->tick(clock_.now);
  }
  EXPECT_EQ(core_->stats().peers, 1u);
  EXPECT_GE(out_.of_type<wire::Heartbeat>(kPeer).size(), 3u);
  clock_.advance(2ms);
  core_->tick(clock_.now);
  EXPECT_EQ(core_->stats().peers, 0u);
  EXPECT_EQ(out_.closed, std::vector<net::ConnId>{kPeer});
  EXPECT_EQ(core_->stats().owned_queued, 3u);
}

TEST_F(BrokerCoreTest, PeerHeartbeatsRefreshSharedLeases) {
  core_->add_peer(kPeer, "B", clock_.now);
  for (int i = 0; i < 3; ++i) submit("t" + std::to_string(i));
  core_->handle_peer_heartbeat(kPeer, {"B", "", 1, -1}, clock_.now);
  for (int i = 0; i < 10; ++i) {
    clock_.advance(100ms);
    core_->handle_peer_heartbeat(kPeer, {"B", "", 0, -1}, clock_.now);
    core_->tick(clock_.now);
  }
  EXPECT_EQ(core_->stats().leases_expired, 0u);
  EXPECT_EQ(core_->stats().leased, 1u);
}

TEST_F(BrokerCoreTest, AdvertisesIdleCapacity) {
  core_->add_peer(kPeer, "B", clock_.now);
  out_.clear();
  core_->handle_task_request(kW1, "w1", clock_.now);
  const auto hbs = out_.of_type<wire::Heartbeat>(kPeer);
  ASSERT_FALSE(hbs.empty());
  EXPECT_EQ(hbs.back().idle_workers, 1);
  EXPECT_EQ(hbs.back().sender_id, "A");
}

// Two real brokers: A has the model and no workers, B has one worker.
TEST(BrokerServers, SaturatedBrokerSharesWithIdlePeer) {
  BrokerServerConfig cb;
  cb.settings.broker_id = "B";
  cb.settings.timeouts = fast();
  BrokerServer b(cb);
  BrokerServerConfig ca;
  ca.settings.broker_id = "A";
  ca.settings.timeouts = fast();
  ca.links = {b.endpoint()};
  BrokerServer a(ca);
  std::thread ta([&] { a.run(); });
  std::thread tb([&] { b.run(); });

  auto model = net::Connection::open(a.endpoint(), 1s);
  for (int i = 0; i < 4; ++i) {
    model.send(wire::SubmitTask{"t" + std::to_string(i), "m", "dropout2d", {}, 0});
  }
  auto worker = net::Connection::open(b.endpoint(), 1s);
  int completed_remotely = 0;
  for (int i = 0; i < 20 && completed_remotely == 0; ++i) {
    worker.send(wire::TaskRequest{"bw"});
    const auto m = worker.receive(2s);
    ASSERT_TRUE(m.has_value());
    if (const auto* t = std::get_if<wire::TaskAssignment>(&*m)) {
      EXPECT_FALSE(t->owned);
      worker.send(wire::TaskResult{t->task_id, "bw", t->lease_id, 2.0, 0.5, false, "", 1.0, "bw"});
      ++completed_remotely;
    }
  }
  ASSERT_EQ(completed_remotely, 1);
  const auto r = model.receive(2s);
  ASSERT_TRUE(r.has_value());
  ASSERT_TRUE(std::holds_alternative<wire::TaskResult>(*r));
  EXPECT_EQ(std::get<wire::TaskResult>(*r).worker_id, "bw");
  EXPECT_GE(a.stats().tasks_shared, 1u);
  EXPECT_GE(b.stats().shared_received, 1u);

  a.stop();
  b.stop();
  ta.join();
  tb.join();
}

TEST(BrokerServers, LinkDropMidShareStillCompletes) {
  BrokerServerConfig cb;
  cb.settings.broker_id = "B";
  cb.settings.timeouts = fast();
  BrokerServer b(cb);
  BrokerServerConfig ca;
  ca.settings.broker_id = "A";
  ca.settings.timeouts = fast();
  ca.links = {b.endpoint()};
  BrokerServer a(ca);
  std::thread ta([&] { a.run(); });
  std::thread tb([&] { b.run(); });

  auto model = net::Connection::open(a.endpoint(), 1s);
  auto bworker = net::Connection::open(b.endpoint(), 1s);
  bworker.send(wire::TaskRequest{"bw"});
  std::this_thread::sleep_for(100ms);  // B advertises its idle worker
  for (int i = 0; i < 3; ++i) {
    model.send(wire::SubmitTask{"t" + std::to_string(i), "m", "dropout2d", {}, 0});
  }
  // bw gets a shared task and sits on it while the link goes away.
  const auto got = bworker.receive(2s);
  ASSERT_TRUE(got.has_value());
  ASSERT_TRUE(std::holds_alternative<wire::TaskAssignment>(*got));
  a.drop_links();

  auto aworker = net::Connection::open(a.endpoint(), 1s);
  std::set<std::string> done;
  for (int i = 0; i < 20 && done.size() < 3; ++i) {
    aworker.send(wire::TaskRequest{"aw"});
    const auto m = aworker.receive(2s);
    ASSERT_TRUE(m.has_value());
    if (const auto* t = std::get_if<wire::TaskAssignment>(&*m)) {
      aworker.send(wire::TaskResult{t->task_id, "aw", t->lease_id, 1.0, 1.0, false, "", 1.0, "aw"});
      done.insert(t->task_id);
    }
  }
  EXPECT_EQ(done.size(), 3u);
  int results = 0;
  while (results < 3) {
    const auto r = model.receive(2s);
    ASSERT_TRUE(r.has_value());
    results += std::holds_alternative<wire::TaskResult>(*r) ? 1 : 0;
  }

  a.stop();
  b.stop();
  ta.join();
  tb.join();
}

}  // namespace
}  // namespace evonas
