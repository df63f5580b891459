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

#include "evonas/worker.h"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <stdexcept>
#include <stop_token>
#include <thread>

#include <spdlog/spdlog.h>

#include "evonas/genotype.h"
#include "evonas/nameserver.h"
#include "evonas/random.h"

namespace evonas {

namespace {

using std::chrono::milliseconds;

// Tasks may come from searches with a larger layer cap than the default.
constexpr std::size_t kTaskMaxLayers = 64;
constexpr milliseconds kConnectTimeout{1000};
constexpr milliseconds kPollSlice{50};

double ms_since(net::TimePoint start) {
  return std::chrono::duration<double, std::milli>(net::Clock::now() - start).count();
}

}  // namespace

void check_worker_config(const WorkerConfig& cfg) {
  if (cfg.broker.has_value() == cfg.nameserver.has_value()) {
    throw std::invalid_argument("worker needs exactly one of a broker or a nameserver address");
  }
  if (cfg.evaluator_override == EvaluatorKind::kExternal) {
    throw std::invalid_argument("the external evaluator is not available in this worker");
  }
  if (cfg.delay_ms_override && *cfg.delay_ms_override < 0) {
    throw std::invalid_argument("delay must be non-negative");
  }
  if (cfg.backoff_initial.count() <= 0 || cfg.backoff_max < cfg.backoff_initial) {
    throw std::invalid_argument("bad request backoff");
  }
  if (cfg.timeouts.heartbeat_interval.count() <= 0) {
    throw std::invalid_argument("heartbeat interval must be positive");
  }
}

wire::TaskResult evaluate_task(const wire::TaskAssignment& task, const std::string& worker_id,
                               const WorkerConfig& cfg) {
  wire::TaskResult r;
  r.task_id = task.task_id;
  r.sender_id = worker_id;
  r.lease_id = task.lease_id;
  r.worker_id = worker_id;
  const auto start = net::Clock::now();
  try {
    EvalConfig ec = task.eval_config;
    if (cfg.evaluator_override) ec.kind = *cfg.evaluator_override;
    if (cfg.delay_ms_override) ec.delay_ms = *cfg.delay_ms_override;
    const Genotype g = parse_genotype(task.genotype, SearchSpaceConfig{kTaskMaxLayers});
    const FitnessResult f = evaluate(g, ec);
    r.fitness = f.fitness;
    r.loss = f.loss;
  } catch (const std::exception& e) {
    r.error = true;
    r.error_message = e.what();
    r.fitness = 0.0;
    r.loss = 0.0;
  }
  r.eval_ms = ms_since(start);
  return r;
}

Worker::Worker(WorkerConfig cfg) : cfg_(std::move(cfg)) {
  check_worker_config(cfg_);
  if (cfg_.worker_id.empty()) cfg_.worker_id = make_uuid();
}

WorkerStats Worker::stats() const {
  return WorkerStats{requests_.load(), no_tasks_.load(), completed_.load(), errored_.load(),
                     heartbeats_.load()};
}

void Worker::pause(milliseconds d) const {
  const auto until = net::Clock::now() + d;
  while (!stop_.load()) {
    const auto now = net::Clock::now();
    if (now >= until) return;
    std::this_thread::sleep_for(std::min<net::Clock::duration>(until - now, kPollSlice));
  }
}

net::Connection Worker::connect() {
  if (cfg_.broker) {
    try {
      return net::Connection::open(*cfg_.broker, kConnectTimeout);
    } catch (const net::NetError& e) {
      throw BrokerUnreachable(e.what());
    }
  }
  std::vector<wire::BrokerEntry> brokers;
  try {
    brokers = query_nameserver(*cfg_.nameserver, cfg_.worker_id, wire::Requester::kWorker,
                               cfg_.timeouts.request_timeout);
  } catch (const net::NetError& e) {
    throw BrokerUnreachable(e.what());
  }
  for (const auto& b : brokers) {
    try {
      auto conn = net::Connection::open(net::Endpoint::parse(b.address), kConnectTimeout);
      spdlog::info("worker {}: using broker {} at {}", cfg_.worker_id, b.broker_id, b.address);
      return conn;
    } catch (const std::exception& e) {
      spdlog::warn("worker {}: broker {} unreachable: {}", cfg_.worker_id, b.address, e.what());
    }
  }
  throw BrokerUnreachable("no reachable broker known to the nameserver");
}

std::optional<wire::TaskAssignment> Worker::request_task(net::Connection& conn) {
  conn.send(wire::TaskRequest{cfg_.worker_id});
  ++requests_;
  // The broker holds a request for a while before answering no_task, so
  // silence is only suspicious after that plus the request timeout.
  const auto deadline =
      net::Clock::now() + cfg_.timeouts.request_timeout + cfg_.timeouts.heartbeat_interval;
  while (net::Clock::now() < deadline) {
    if (stop_.load()) throw net::ConnectionClosed("worker stopping");
    auto m = conn.receive(kPollSlice);
    if (!m) continue;
    if (auto* a = std::get_if<wire::TaskAssignment>(&*m)) return std::move(*a);
    if (std::holds_alternative<wire::NoTask>(*m)) return std::nullopt;
    // Late heartbeat acks and reconnects for finished leases.
  }
  throw net::ConnectionClosed("broker did not answer a task request");
}

void Worker::run_task(std::optional<net::Connection>& conn, const wire::TaskAssignment& task) {
  std::mutex mu;
  std::condition_variable_any cv;
  std::jthread heartbeat([&](std::stop_token st) {
    std::unique_lock lock(mu);
    while (!cv.wait_for(lock, st, cfg_.timeouts.heartbeat_interval, [] { return false; })) {
      if (st.stop_requested()) return;
      try {
        conn->send(wire::Heartbeat{cfg_.worker_id, task.lease_id, 0, -1});
        ++heartbeats_;
      } catch (const net::NetError&) {
        return;  // the result send will notice and reconnect
      }
    }
  });
  wire::TaskResult result = evaluate_task(task, cfg_.worker_id, cfg_);
  heartbeat.request_stop();
  heartbeat.join();

  if (result.error) {
    ++errored_;
    spdlog::warn("worker {}: task {} failed: {}", cfg_.worker_id, task.task_id,
                 result.error_message);
  }
  // The broker accepts a result on any connection, so one reconnect is
  // enough to survive a dropped link.
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      if (!conn) conn.emplace(connect());
      conn->send(result);
      ++completed_;
      return;
    } catch (const net::NetError& e) {
      spdlog::warn("worker {}: could not return result for {}: {}", cfg_.worker_id,
                   task.task_id, e.what());
      conn.reset();
    }
  }
}

void Worker::run() {
  std::optional<net::Connection> conn;
  milliseconds backoff = cfg_.backoff_initial;
  spdlog::info("worker {} starting", cfg_.worker_id);
  while (!stop_.load()) {
    if (cfg_.max_tasks != 0 && completed_.load() >= cfg_.max_tasks) break;
    try {
      if (!conn) conn.emplace(connect());
      auto task = request_task(*conn);
      if (!task) {
        ++no_tasks_;
        pause(backoff);
        backoff = std::min(backoff * 2, cfg_.backoff_max);
        continue;
      }
      backoff = cfg_.backoff_initial;
      run_task(conn, *task);
    } catch (const net::NetError& e) {
      if (stop_.load()) break;
      spdlog::warn("worker {}: {}; retrying in {} ms", cfg_.worker_id, e.what(), backoff.count());
      conn.reset();
      pause(backoff);
      backoff = std::min(backoff * 2, cfg_.backoff_max);
    } catch (const wire::WireError& e) {
      spdlog::warn("worker {}: bad frame from broker: {}", cfg_.worker_id, e.what());
      conn.reset();
    }
  }
  if (conn) conn->shutdown();
  spdlog::info("worker {} stopped after {} tasks", cfg_.worker_id, completed_.load());
}

}  // namespace evonas
