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

// Experiment plumbing shared by the command line tool and the tests: child
// worker processes, the throughput scaling experiment, and a quick
// end-to-end self test.

#ifndef EVONAS_HARNESS_H_
#define EVONAS_HARNESS_H_

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/broker.h"
#include "evonas/wire.h"

namespace evonas {

class SpawnFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Path of the running executable.
std::string self_executable();

// A child process that is terminated (SIGTERM, then SIGKILL) and reaped on
// destruction.
class ChildProcess {
 public:
  // Throws SpawnFailure.
  static ChildProcess spawn(const std::string& exe, const std::vector<std::string>& args);

  ChildProcess(ChildProcess&& other) noexcept : pid_(other.pid_) { other.pid_ = -1; }
  ChildProcess& operator=(ChildProcess&&) = delete;
  ~ChildProcess();

  pid_t pid() const { return pid_; }
  void kill(int sig);
  // Returns the wait status, or -1 if still running at the deadline.
  int wait_for(std::chrono::milliseconds timeout);
  // SIGTERM, wait `grace`, then SIGKILL.
  void terminate(std::chrono::milliseconds grace = std::chrono::milliseconds(2000));

 private:
  explicit ChildProcess(pid_t pid) : pid_(pid) {}
  pid_t pid_ = -1;
};

// Arguments for `<exe> worker ...` against a broker.
std::vector<std::string> worker_args(const net::Endpoint& broker,
                                     const wire::ProtocolTimeouts& timeouts,
                                     const std::string& worker_id,
                                     std::chrono::milliseconds backoff_max);

// Polls `server` until it has `n` workers parked on task requests.
// Returns false on timeout.
bool wait_for_parked_workers(BrokerServer& server, std::size_t n,
                             std::chrono::milliseconds timeout);

struct ScalingConfig {
  std::vector<int> worker_counts{1, 2, 4, 8};
  int delay_ms = 200;
  int generations = 5;
  std::size_t tasks_per_generation = 24;
  std::uint64_t seed = 0;
  std::string worker_exe;  // defaults to self_executable()
  wire::ProtocolTimeouts timeouts;
};

struct ScalingRow {
  int workers = 0;
  // Geometric mean over generations of tasks evaluated per second.
  double tasks_per_second = 0.0;
  double speedup = 0.0;
  std::vector<double> per_generation;
};

// Runs an in-process broker, spawns the workers as real processes and
// times fixed-delay batches. Throws SpawnFailure or DispatchError.
std::vector<ScalingRow> run_scaling_test(const ScalingConfig& cfg);

inline constexpr const char* kScalingCsvHeader = "workers,tasks_per_second,speedup";
void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows);

double geometric_mean(const std::vector<double>& values);

// Short in-process end-to-end check: nameserver, broker, two workers and a
// brokered search compared against the loopback run. Returns the number of
// failed checks.
int run_selftest(std::ostream& os, std::uint64_t seed);

}  // namespace evonas

#endif  // EVONAS_HARNESS_H_
