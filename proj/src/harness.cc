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

#include "evonas/harness.h"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "evonas/nameserver.h"
#include "evonas/network_plan.h"
#include "evonas/random.h"
#include "evonas/search.h"
#include "evonas/worker.h"

extern char** environ;

namespace evonas {

using std::chrono::milliseconds;

std::string self_executable() {
  return std::filesystem::read_symlink("/proc/self/exe").string();
}

ChildProcess ChildProcess::spawn(const std::string& exe, const std::vector<std::string>& args) {
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(exe.c_str()));
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
  if (rc != 0) throw SpawnFailure(fmt::format("cannot spawn {}: {}", exe, std::strerror(rc)));
  return ChildProcess(pid);
}

ChildProcess::~ChildProcess() {
  if (pid_ > 0) terminate();
}

void ChildProcess::kill(int sig) {
  if (pid_ > 0) ::kill(pid_, sig);
}

int ChildProcess::wait_for(milliseconds timeout) {
  if (pid_ <= 0) return 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || (r < 0 && errno == ECHILD)) {
      pid_ = -1;
      return status;
    }
    if (std::chrono::steady_clock::now() >= deadline) return -1;
    std::this_thread::sleep_for(milliseconds(10));
  }
}

void ChildProcess::terminate(milliseconds grace) {
  if (pid_ <= 0) return;
  kill(SIGTERM);
  if (wait_for(grace) != -1) return;
  kill(SIGKILL);
  wait_for(milliseconds(5000));
}

std::vector<std::string> worker_args(const net::Endpoint& broker,
                                     const wire::ProtocolTimeouts& timeouts,
                                     const std::string& worker_id, milliseconds backoff_max) {
  return {"worker",
          "--broker",
          broker.to_string(),
          "--heartbeat-ms",
          std::to_string(timeouts.heartbeat_interval.count()),
          "--heartbeat-misses",
          std::to_string(timeouts.heartbeat_misses_to_expire),
          "--backoff-max-ms",
          std::to_string(backoff_max.count()),
          "--worker-id",
          worker_id,
          "--log-level",
          "warn"};
}

bool wait_for_parked_workers(BrokerServer& server, std::size_t n, milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (server.stats().waiting_workers >= n) return true;
    std::this_thread::sleep_for(milliseconds(5));
  }
  return false;
}

double geometric_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double log_sum = 0.0;
  for (double v : values) log_sum += std::log(v);
  return std::exp(log_sum / static_cast<double>(values.size()));
}

namespace {

// A broker on an ephemeral loopback port, running on its own thread.
class BrokerThread {
 public:
  explicit BrokerThread(BrokerServerConfig cfg) : server_(std::move(cfg)) {
    thread_ = std::thread([this] { server_.run(); });
  }
  ~BrokerThread() {
    server_.stop();
    thread_.join();
  }
  BrokerServer& server() { return server_; }

 private:
  BrokerServer server_;
  std::thread thread_;
};

std::vector<double> time_batches(const ScalingConfig& cfg, BrokerServer& broker,
                                 std::size_t workers) {
  BrokeredDispatcherConfig dcfg;
  dcfg.broker = broker.endpoint();
  dcfg.timeouts = cfg.timeouts;
  BrokeredDispatcher dispatcher(dcfg);

  EvalConfig eval;
  eval.kind = EvaluatorKind::kDelay;
  eval.delay_ms = cfg.delay_ms;

  if (!wait_for_parked_workers(broker, workers, milliseconds(30000))) {
    throw SpawnFailure(fmt::format("{} workers did not come up", workers));
  }
  SeededRandom rng(derive_seed(cfg.seed, workers));
  std::vector<double> rates;
  for (int g = 0; g < cfg.generations; ++g) {
    std::vector<PendingEvaluation> batch;
    for (std::size_t i = 0; i < cfg.tasks_per_generation; ++i) {
      batch.push_back(PendingEvaluation{random_genotype(rng, {}), {}});
    }
    const auto start = std::chrono::steady_clock::now();
    dispatcher.evaluate_batch(batch, eval, g);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rates.push_back(static_cast<double>(batch.size()) / seconds);
  }
  return rates;
}

}  // namespace

std::vector<ScalingRow> run_scaling_test(const ScalingConfig& cfg) {
  if (cfg.worker_counts.empty() || cfg.generations < 1 || cfg.tasks_per_generation == 0 ||
      cfg.delay_ms < 0) {
    throw std::invalid_argument("bad scaling test configuration");
  }
  const std::string exe = cfg.worker_exe.empty() ? self_executable() : cfg.worker_exe;
  std::vector<ScalingRow> rows;
  for (const int n : cfg.worker_counts) {
    if (n < 1) throw std::invalid_argument("worker counts must be positive");
    BrokerServerConfig bcfg;
    bcfg.settings.broker_id = fmt::format("scaling-broker-{}", n);
    bcfg.settings.timeouts = cfg.timeouts;
    BrokerThread broker(bcfg);

    std::vector<ChildProcess> children;
    for (int i = 0; i < n; ++i) {
      children.push_back(ChildProcess::spawn(
          exe, worker_args(broker.server().endpoint(), cfg.timeouts,
                           fmt::format("scaling-{}-{}", n, i), milliseconds(100))));
    }
    ScalingRow row;
    row.workers = n;
    row.per_generation = time_batches(cfg, broker.server(), static_cast<std::size_t>(n));
    row.tasks_per_second = geometric_mean(row.per_generation);
    rows.push_back(row);
    spdlog::info("scaling: {} workers -> {:.2f} tasks/s", n, row.tasks_per_second);
    for (auto& c : children) c.kill(SIGTERM);
  }
  const double base = rows.front().workers == 1 ? rows.front().tasks_per_second : 0.0;
  for (auto& r : rows) {
    // Relative to one worker; when 1 is not in the list, relative to the
    // first count, scaled by its worker count.
    r.speedup = base > 0.0 ? r.tasks_per_second / base
                           : r.tasks_per_second / rows.front().tasks_per_second *
                                 static_cast<double>(rows.front().workers);
  }
  return rows;
}

void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << kScalingCsvHeader << '\n';
  for (const auto& r : rows) {
    fmt::print(os, "{},{:.4f},{:.4f}\n", r.workers, r.tasks_per_second, r.speedup);
  }
}

int run_selftest(std::ostream& os, std::uint64_t seed) {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    fmt::print(os, "{} {}\n", ok ? "ok  " : "FAIL", what);
    if (!ok) ++failures;
  };

  const Genotype target = parse_genotype(kDefaultTarget);
  check(std::abs(surrogate_fitness(target, EvalConfig{}).fitness - 10.0) < 1e-9,
        "surrogate fitness at the target is 10");
  const auto plan = build_plan(target, BuildConfig{});
  check(plan.bottleneck_shape == TensorShape{24, 24, 256}, "bottleneck of the default target");

  wire::ProtocolTimeouts timeouts;
  timeouts.heartbeat_interval = milliseconds(200);
  timeouts.request_timeout = milliseconds(2000);

  NameserverServer ns(net::Endpoint{"127.0.0.1", 0}, timeouts);
  std::thread ns_thread([&] { ns.run(); });
  BrokerServerConfig bcfg;
  bcfg.nameserver = ns.endpoint();
  bcfg.settings.broker_id = "selftest-broker";
  bcfg.settings.timeouts = timeouts;
  std::optional<BrokerThread> broker;
  broker.emplace(bcfg);

  std::vector<std::unique_ptr<Worker>> workers;
  std::vector<std::thread> worker_threads;
  for (int i = 0; i < 2; ++i) {
    WorkerConfig wcfg;
    wcfg.nameserver = ns.endpoint();
    wcfg.worker_id = fmt::format("selftest-worker-{}", i);
    wcfg.timeouts = timeouts;
    workers.push_back(std::make_unique<Worker>(wcfg));
    worker_threads.emplace_back([w = workers.back().get()] { w->run(); });
  }

  EvolutionConfig evo;
  evo.mu = 4;
  evo.num_generations = 3;
  evo.rng_seed = seed;
  LoopbackDispatcher loopback;
  const SearchReport local = run_search(evo, EvalConfig{}, loopback);

  BrokeredDispatcherConfig dcfg;
  dcfg.nameserver = ns.endpoint();
  dcfg.timeouts = timeouts;
  dcfg.result_ceiling = milliseconds(30000);
  SearchReport remote;
  {
    BrokeredDispatcher brokered(dcfg);
    remote = run_search(evo, EvalConfig{}, brokered);
  }
  check(!remote.aborted, "brokered search completed");
  check(remote.generations == local.generations, "brokered report matches loopback");

  for (auto& w : workers) w->stop();
  for (auto& t : worker_threads) t.join();
  broker.reset();
  ns.stop();
  ns_thread.join();
  fmt::print(os, "{} failure(s)\n", failures);
  return failures;
}

}  // namespace evonas
