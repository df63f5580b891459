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

// evonas: daemons, searches and experiments from the command line.
//
// Exit codes: 0 success, 1 configuration or input error, 2 the search was
// aborted because evaluations could not be dispatched.

#include <cctype>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "evonas/broker.h"
#include "evonas/fitness.h"
#include "evonas/genotype.h"
#include "evonas/harness.h"
#include "evonas/nameserver.h"
#include "evonas/network_plan.h"
#include "evonas/random.h"
#include "evonas/search.h"
#include "evonas/worker.h"

namespace {

using namespace evonas;
using std::chrono::milliseconds;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitAborted = 2;

// Signal targets. Only async-signal-safe stop() calls happen in the handler.
Worker* g_worker = nullptr;
NameserverServer* g_nameserver = nullptr;
BrokerServer* g_broker = nullptr;

extern "C" void on_signal(int) {
  if (g_worker) g_worker->stop();
  if (g_nameserver) g_nameserver->stop();
  if (g_broker) g_broker->stop();
}

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

// Flags shared between subcommands. Every option also reads EVONAS_<NAME>.
struct Common {
  std::string log_level = "info";
  std::optional<std::uint64_t> seed;
  std::string listen;
  std::string nameserver;
  std::string broker;
  std::string csv_out;
  int heartbeat_ms = 2000;
  int heartbeat_misses = 3;
  int request_timeout_ms = 5000;
  std::string evaluator = "surrogate";
  std::string target = kDefaultTarget;
  int delay_ms = 0;
  int epochs = 2;
  double noise_sigma2 = 1.0 / 3.0;
  std::size_t mu = 10;
  int generations = 20;
  std::size_t max_layers = kDefaultMaxNumLayers;
  int reductions = 2;
  std::string input_shape = "96x96x3";
};

std::string env_name(const std::string& flag) {
  std::string out = "EVONAS_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return out;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option("--" + name, value, help)->envname(env_name(name))->capture_default_str();
}

wire::ProtocolTimeouts timeouts_from(const Common& c) {
  if (c.heartbeat_ms <= 0 || c.heartbeat_misses <= 0 || c.request_timeout_ms <= 0) {
    throw std::invalid_argument("heartbeat and timeout settings must be positive");
  }
  wire::ProtocolTimeouts t;
  t.heartbeat_interval = milliseconds(c.heartbeat_ms);
  t.heartbeat_misses_to_expire = c.heartbeat_misses;
  t.request_timeout = milliseconds(c.request_timeout_ms);
  return t;
}

std::optional<net::Endpoint> endpoint_or_none(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return net::Endpoint::parse(text);
}

TensorShape parse_shape(const std::string& text) {
  TensorShape s;
  char x1 = 0;
  char x2 = 0;
  std::istringstream in(text);
  if (!(in >> s.height >> x1 >> s.width >> x2 >> s.channels) || x1 != 'x' || x2 != 'x' ||
      !in.eof()) {
    throw std::invalid_argument(fmt::format("bad input shape '{}', expected HxWxC", text));
  }
  return s;
}

BuildConfig build_config_from(const Common& c) {
  BuildConfig b;
  b.input_shape = parse_shape(c.input_shape);
  b.num_reductions = c.reductions;
  return b;
}

EvalConfig eval_config_from(const Common& c) {
  EvalConfig e;
  e.kind = evaluator_from_name(c.evaluator);
  e.target_key = serialize(parse_genotype_lenient(c.target, SearchSpaceConfig{64}));
  e.epochs = c.epochs;
  e.delay_ms = c.delay_ms;
  e.noise_sigma2 = c.noise_sigma2;
  if (e.delay_ms < 0) throw std::invalid_argument("delay must be non-negative");
  if (e.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(e.noise_sigma2 > 0.0)) throw std::invalid_argument("noise variance must be positive");
  return e;
}

std::uint64_t seed_from(const Common& c) {
  const std::uint64_t seed = c.seed.value_or(entropy_seed());
  fmt::print(stderr, "seed: {}\n", seed);
  return seed;
}

void describe_best(std::ostream& os, const Genotype& g, const Common& c) {
  try {
    const NetworkPlan plan = build_plan(g, build_config_from(c));
    fmt::print(os, "best network: {} parameters, bottleneck {}, compression {}\n",
               plan.total_params, to_string(plan.bottleneck_shape), plan.compression_ratio);
  } catch (const BuildError& e) {
    fmt::print(os, "best network: not buildable ({})\n", e.what());
  }
}

std::unique_ptr<Dispatcher> make_dispatcher(const Common& c) {
  if (c.nameserver.empty() && c.broker.empty()) return std::make_unique<LoopbackDispatcher>();
  BrokeredDispatcherConfig d;
  d.nameserver = endpoint_or_none(c.nameserver);
  d.broker = endpoint_or_none(c.broker);
  d.timeouts = timeouts_from(c);
  return std::make_unique<BrokeredDispatcher>(d);
}

void emit_csv(const SearchReport& report, const std::string& path) {
  if (path.empty()) return;
  if (path == "-") {
    write_csv(std::cout, report);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  write_csv(out, report);
}

int finish_search(const SearchReport& report, const Common& c) {
  emit_csv(report, c.csv_out);
  std::ostream& os = c.csv_out == "-" ? std::cerr : std::cout;
  write_summary(os, report);
  if (report.best) describe_best(os, report.best->genotype, c);
  return report.aborted ? kExitAborted : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("evonas"));
  install_signal_handlers();

  CLI::App app{"evonas: distributed evolutionary search for autoencoder modules"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--log-level", c.log_level, "trace, debug, info, warn, error or off")
      ->envname("EVONAS_LOG_LEVEL")
      ->capture_default_str();

  auto add_seed = [&](CLI::App* sub) {
    flag(sub, "seed", c.seed, "master random seed (default: fresh entropy, always printed)");
  };
  auto add_timeouts = [&](CLI::App* sub) {
    flag(sub, "heartbeat-ms", c.heartbeat_ms, "heartbeat interval");
    flag(sub, "heartbeat-misses", c.heartbeat_misses, "missed heartbeats before expiry");
    flag(sub, "request-timeout-ms", c.request_timeout_ms, "request timeout");
  };
  auto add_eval = [&](CLI::App* sub) {
    flag(sub, "evaluator", c.evaluator, "surrogate, delay or external")
        ->check(CLI::IsMember({"surrogate", "delay", "external"}));
    flag(sub, "target", c.target, "surrogate target module");
    flag(sub, "delay-ms", c.delay_ms, "delay evaluator sleep per task");
    flag(sub, "epochs", c.epochs, "training epochs (external evaluators)");
    flag(sub, "noise-sigma2", c.noise_sigma2, "denoising noise variance (external evaluators)");
  };
  auto add_search = [&](CLI::App* sub) {
    add_seed(sub);
    add_eval(sub);
    add_timeouts(sub);
    flag(sub, "mu", c.mu, "parent population size");
    flag(sub, "generations", c.generations, "number of generations");
    flag(sub, "max-layers", c.max_layers, "maximum layers per module");
    flag(sub, "reductions", c.reductions, "reduction stages, for the network summary");
    flag(sub, "input-shape", c.input_shape, "HxWxC, for the network summary");
    flag(sub, "nameserver", c.nameserver, "dispatch through a broker found here")
        ->excludes(flag(sub, "broker", c.broker, "dispatch through this broker"));
    flag(sub, "csv-out", c.csv_out, "CSV path, '-' for stdout");
    sub->footer(std::string("CSV columns: ") + kCsvHeader);
  };

  // nameserver
  auto* ns_cmd = app.add_subcommand("nameserver", "run the broker registry");
  c.listen = "127.0.0.1:7000";
  flag(ns_cmd, "listen", c.listen, "host:port to listen on");
  add_timeouts(ns_cmd);

  // broker
  auto* broker_cmd = app.add_subcommand("broker", "run a task broker");
  std::string broker_listen = "127.0.0.1:7100";
  std::string broker_id;
  std::vector<std::string> links;
  bool discover = false;
  int park_ms = 2000;
  double share_factor = 2.0;
  flag(broker_cmd, "listen", broker_listen, "host:port to listen on");
  flag(broker_cmd, "nameserver", c.nameserver, "register with this nameserver");
  flag(broker_cmd, "broker-id", broker_id, "broker id (default: generated)");
  flag(broker_cmd, "link", links, "link with the broker at host:port (repeatable)");
  broker_cmd->add_flag("--discover-peers", discover, "link with every broker the nameserver knows")
      ->envname("EVONAS_DISCOVER_PEERS");
  flag(broker_cmd, "park-ms", park_ms, "how long a task request waits for work");
  flag(broker_cmd, "share-factor", share_factor, "share when queue > factor * idle workers");
  add_timeouts(broker_cmd);

  // worker
  auto* worker_cmd = app.add_subcommand("worker", "run an evaluation worker");
  std::string worker_evaluator = "auto";
  std::optional<int> worker_delay;
  std::string worker_id;
  int backoff_max_ms = 2000;
  std::size_t max_tasks = 0;
  flag(worker_cmd, "nameserver", c.nameserver, "find a broker here")
      ->excludes(flag(worker_cmd, "broker", c.broker, "use this broker"));
  flag(worker_cmd, "evaluator", worker_evaluator, "auto (as the task says), surrogate or delay")
      ->check(CLI::IsMember({"auto", "surrogate", "delay"}));
  flag(worker_cmd, "delay-ms", worker_delay, "override the task's delay");
  flag(worker_cmd, "worker-id", worker_id, "worker id (default: generated)");
  flag(worker_cmd, "backoff-max-ms", backoff_max_ms, "longest pause after no_task");
  flag(worker_cmd, "max-tasks", max_tasks, "exit after this many tasks (0: never)");
  add_timeouts(worker_cmd);

  // search / random-search
  auto* search_cmd = app.add_subcommand("search", "run the evolutionary search");
  bool wall_clock = false;
  add_search(search_cmd);
  search_cmd->add_flag("--wall-clock", wall_clock, "record wall time (breaks byte-identical CSV)");

  auto* random_cmd = app.add_subcommand("random-search", "evaluate random modules");
  std::size_t samples = 30;
  add_search(random_cmd);
  flag(random_cmd, "samples", samples, "number of random modules");

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "print the network built from a module");
  std::string genotype_text;
  describe_cmd->add_option("genotype", genotype_text, "module, e.g. 5x5conv2d:64 or 64-5x5conv2d")
      ->required();
  flag(describe_cmd, "reductions", c.reductions, "reduction stages");
  flag(describe_cmd, "input-shape", c.input_shape, "HxWxC");
  flag(describe_cmd, "max-layers", c.max_layers, "maximum layers per module");

  // scaling-test
  auto* scaling_cmd = app.add_subcommand("scaling-test", "measure throughput against worker count");
  ScalingConfig scaling;
  flag(scaling_cmd, "workers", scaling.worker_counts, "worker counts")->delimiter(',');
  flag(scaling_cmd, "delay-ms", scaling.delay_ms, "evaluation delay per task");
  flag(scaling_cmd, "generations", scaling.generations, "timed batches per worker count");
  flag(scaling_cmd, "tasks", scaling.tasks_per_generation, "tasks per batch");
  flag(scaling_cmd, "csv-out", c.csv_out, "CSV path, '-' or empty for stdout");
  add_seed(scaling_cmd);
  add_timeouts(scaling_cmd);
  scaling_cmd->footer(std::string("CSV columns: ") + kScalingCsvHeader);

  auto* selftest_cmd = app.add_subcommand("selftest", "quick end-to-end check");
  add_seed(selftest_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto level = spdlog::level::from_str(c.log_level);
    if (level == spdlog::level::off && c.log_level != "off") {
      throw std::invalid_argument("unknown log level " + c.log_level);
    }
    spdlog::set_level(level);

    if (*ns_cmd) {
      NameserverServer server(net::Endpoint::parse(c.listen), timeouts_from(c));
      g_nameserver = &server;
      fmt::print("listening on {}\n", server.endpoint().to_string());
      std::fflush(stdout);
      server.run();
      g_nameserver = nullptr;
      return kExitOk;
    }

    if (*broker_cmd) {
      BrokerServerConfig cfg;
      cfg.listen = net::Endpoint::parse(broker_listen);
      cfg.nameserver = endpoint_or_none(c.nameserver);
      for (const auto& l : links) cfg.links.push_back(net::Endpoint::parse(l));
      cfg.discover_peers = discover;
      if (discover && !cfg.nameserver) {
        throw std::invalid_argument("--discover-peers needs --nameserver");
      }
      if (park_ms < 0 || !(share_factor >= 0.0)) {
        throw std::invalid_argument("park and share settings must be non-negative");
      }
      cfg.settings.broker_id = broker_id;
      cfg.settings.timeouts = timeouts_from(c);
      cfg.settings.park_timeout = milliseconds(park_ms);
      cfg.settings.share_factor = share_factor;
      BrokerServer server(cfg);
      g_broker = &server;
      fmt::print("broker {} listening on {}\n", server.broker_id(), server.endpoint().to_string());
      std::fflush(stdout);
      server.run();
      g_broker = nullptr;
      return kExitOk;
    }

    if (*worker_cmd) {
      WorkerConfig cfg;
      cfg.worker_id = worker_id;
      cfg.broker = endpoint_or_none(c.broker);
      cfg.nameserver = endpoint_or_none(c.nameserver);
      if (worker_evaluator != "auto") cfg.evaluator_override = evaluator_from_name(worker_evaluator);
      cfg.delay_ms_override = worker_delay;
      cfg.timeouts = timeouts_from(c);
      cfg.backoff_max = milliseconds(backoff_max_ms);
      cfg.backoff_initial = std::min(cfg.backoff_initial, cfg.backoff_max);
      cfg.max_tasks = max_tasks;
      Worker worker(cfg);
      g_worker = &worker;
      worker.run();
      g_worker = nullptr;
      return kExitOk;
    }

    if (*search_cmd || *random_cmd) {
      EvolutionConfig evo;
      evo.mu = c.mu;
      evo.num_generations = c.generations;
      evo.max_num_layers = c.max_layers;
      evo.rng_seed = seed_from(c);
      const EvalConfig eval = eval_config_from(c);
      build_config_from(c);  // reject a bad shape before the run
      auto dispatcher = make_dispatcher(c);
      SearchOptions options;
      options.record_wall_clock = wall_clock || !c.nameserver.empty() || !c.broker.empty();
      options.on_generation = [](const GenerationStats& s) {
        spdlog::info("generation {}: best {} mean {} dispatched {}", s.generation, s.best_fitness,
                     s.mean_fitness, s.dispatched);
      };
      const SearchReport report =
          *search_cmd ? run_search(evo, eval, *dispatcher, options)
                      : run_random_search(samples, evo, eval, *dispatcher, options);
      return finish_search(report, c);
    }

    if (*describe_cmd) {
      const Genotype g = parse_genotype_lenient(genotype_text, SearchSpaceConfig{c.max_layers});
      const NetworkPlan plan = build_plan(g, build_config_from(c));
      write_plan_report(std::cout, g, plan);
      return kExitOk;
    }

    if (*scaling_cmd) {
      scaling.seed = seed_from(c);
      scaling.timeouts = timeouts_from(c);
      const auto rows = run_scaling_test(scaling);
      if (c.csv_out.empty() || c.csv_out == "-") {
        write_scaling_csv(std::cout, rows);
      } else {
        std::ofstream out(c.csv_out);
        if (!out) throw std::invalid_argument("cannot write " + c.csv_out);
        write_scaling_csv(out, rows);
      }
      return kExitOk;
    }

    if (*selftest_cmd) {
      return run_selftest(std::cout, seed_from(c)) == 0 ? kExitOk : kExitConfig;
    }
  } catch (const GenotypeError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const BuildError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const SpawnFailure& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitAborted;
  } catch (const DispatchError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitAborted;
  } catch (const net::NetError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
