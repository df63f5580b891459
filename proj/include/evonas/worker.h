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

// Worker: requests tasks one at a time, heartbeats the lease while the
// evaluator runs, and returns the result. Workers keep no state the rest of
// the system waits on, so they can come and go at will.

#ifndef EVONAS_WORKER_H_
#define EVONAS_WORKER_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "evonas/fitness.h"
#include "evonas/net.h"
#include "evonas/wire.h"

namespace evonas {

struct WorkerConfig {
  std::string worker_id;  // generated when empty
  // Exactly one of these.
  std::optional<net::Endpoint> broker;
  std::optional<net::Endpoint> nameserver;
  // Replace the evaluator kind / delay named in each task.
  std::optional<EvaluatorKind> evaluator_override;
  std::optional<int> delay_ms_override;
  wire::ProtocolTimeouts timeouts;
  std::chrono::milliseconds backoff_initial{100};
  std::chrono::milliseconds backoff_max{2000};
  std::size_t max_tasks = 0;  // 0: no limit
};

// Throws std::invalid_argument.
void check_worker_config(const WorkerConfig& cfg);

class BrokerUnreachable : public net::NetError {
 public:
  using net::NetError::NetError;
};

// Runs the evaluator for one assignment. Never throws for evaluator or
// genotype faults; those come back as errored results.
wire::TaskResult evaluate_task(const wire::TaskAssignment& task, const std::string& worker_id,
                               const WorkerConfig& cfg);

struct WorkerStats {
  std::uint64_t requests = 0;
  std::uint64_t no_tasks = 0;
  std::uint64_t completed = 0;
  std::uint64_t errored = 0;
  std::uint64_t heartbeats = 0;
};

class Worker {
 public:
  explicit Worker(WorkerConfig cfg);

  const std::string& id() const { return cfg_.worker_id; }

  // Loops until stop() or max_tasks results have been returned. An
  // in-flight task is always finished and reported first.
  void run();
  // Async-signal-safe.
  void stop() { stop_.store(true); }

  WorkerStats stats() const;

 private:
  net::Connection connect();
  void pause(std::chrono::milliseconds d) const;
  // Returns the assignment, or nullopt on no_task. Throws
  // net::ConnectionClosed when the broker goes away or stops answering.
  std::optional<wire::TaskAssignment> request_task(net::Connection& conn);
  void run_task(std::optional<net::Connection>& conn, const wire::TaskAssignment& task);

  WorkerConfig cfg_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> no_tasks_{0};
  std::atomic<std::uint64_t> completed_{0};
  std::atomic<std::uint64_t> errored_{0};
  std::atomic<std::uint64_t> heartbeats_{0};
};

}  // namespace evonas

#endif  // EVONAS_WORKER_H_
