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

// The search driver ("model"): runs the generation loop and hands each
// batch of evaluations to a Dispatcher, either in-process or through a
// broker.
//
// Randomness: the initial population (or the random-search sample) draws
// from stream 0 of the master seed and generation g from stream g, so the
// order in which results come back can never change the search.
//
// Report rows: row 0 is the evaluated initial population, rows 1..G the
// generations. Statistics are taken after selection; population,
// dispatched, cache_hits and skipped describe the batch before selection,
// with dispatched + cache_hits + skipped == population.

#ifndef EVONAS_SEARCH_H_
#define EVONAS_SEARCH_H_

#include <chrono>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/evolution.h"
#include "evonas/fitness.h"
#include "evonas/net.h"
#include "evonas/wire.h"

namespace evonas {

class DispatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Dispatcher {
 public:
  virtual ~Dispatcher() = default;
  // outcome[i] belongs to tasks[i]. Blocks until every task has a result.
  // Throws DispatchError when results cannot be obtained.
  virtual std::vector<EvaluationOutcome> evaluate_batch(std::span<const PendingEvaluation> tasks,
                                                        const EvalConfig& cfg,
                                                        int generation) = 0;
};

class LoopbackDispatcher final : public Dispatcher {
 public:
  std::vector<EvaluationOutcome> evaluate_batch(std::span<const PendingEvaluation> tasks,
                                                const EvalConfig& cfg, int generation) override;
};

struct BrokeredDispatcherConfig {
  // Exactly one of these.
  std::optional<net::Endpoint> broker;
  std::optional<net::Endpoint> nameserver;
  std::string model_id;  // generated when empty
  wire::ProtocolTimeouts timeouts;
  // A batch with no progress for this long while the connection is up
  // fails.
  std::chrono::milliseconds result_ceiling{std::chrono::minutes(10)};
};

// Submits every task of a batch, then waits for all results. When the
// broker connection drops, it reconnects once and resubmits the unresolved
// tasks under their original ids; a second loss aborts the batch.
class BrokeredDispatcher final : public Dispatcher {
 public:
  explicit BrokeredDispatcher(BrokeredDispatcherConfig cfg);
  ~BrokeredDispatcher() override;

  std::vector<EvaluationOutcome> evaluate_batch(std::span<const PendingEvaluation> tasks,
                                                const EvalConfig& cfg, int generation) override;

  const std::string& model_id() const { return cfg_.model_id; }
  std::uint64_t resubmissions() const { return resubmissions_; }

 private:
  net::Connection& connection();
  std::optional<net::Connection> open_connection();

  BrokeredDispatcherConfig cfg_;
  std::optional<net::Connection> conn_;
  std::uint64_t resubmissions_ = 0;
};

struct GenerationStats {
  int generation = 0;
  std::size_t population = 0;
  std::size_t dispatched = 0;
  std::size_t cache_hits = 0;
  std::size_t skipped = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  std::string best_genotype;
  double wall_ms = 0.0;

  friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

struct SearchReport {
  std::uint64_t seed = 0;
  std::vector<GenerationStats> generations;
  Population final_population;
  std::optional<Individual> best;
  // Random search only: every sample's fitness, in draw order.
  std::vector<double> sample_fitness;
  bool aborted = false;
  std::string abort_reason;
};

struct SearchOptions {
  // Otherwise wall_ms is written as 0 so reports are byte-reproducible.
  bool record_wall_clock = false;
  std::function<void(const GenerationStats&)> on_generation;
};

SearchReport run_search(const EvolutionConfig& evo, const EvalConfig& eval, Dispatcher& dispatcher,
                        const SearchOptions& options = {});

// n independent genotypes of uniform length 1..max_num_layers. Duplicates
// are evaluated once and reported n times. Throws std::invalid_argument
// when n == 0.
SearchReport run_random_search(std::size_t n, const EvolutionConfig& evo, const EvalConfig& eval,
                               Dispatcher& dispatcher, const SearchOptions& options = {});

inline constexpr const char* kCsvHeader =
    "generation,population,dispatched,cache_hits,skipped,best_fitness,mean_fitness,"
    "best_genotype,wall_ms";

void write_csv(std::ostream& os, const SearchReport& report);
void write_summary(std::ostream& os, const SearchReport& report);

// Population standard deviation; 0 for fewer than two values.
double stddev(std::span<const double> values);

}  // namespace evonas

#endif  // EVONAS_SEARCH_H_
