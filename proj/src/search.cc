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

#include "evonas/search.h"

#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "evonas/random.h"

namespace evonas {

std::vector<EvaluationOutcome> LoopbackDispatcher::evaluate_batch(
    std::span<const PendingEvaluation> tasks, const EvalConfig& cfg, int) {
  std::vector<EvaluationOutcome> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    try {
      const FitnessResult r = evaluate(t.genotype, cfg);
      out.push_back(EvaluationOutcome{r.fitness, r.loss, false});
    } catch (const EvaluationError& e) {
      spdlog::warn("evaluation of {} failed: {}", t.genotype.key(), e.what());
      out.push_back(EvaluationOutcome{0.0, 0.0, true});
    }
  }
  return out;
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

namespace {

using Ms = std::chrono::duration<double, std::milli>;

// Plans, dispatches and resolves one batch; fills the batch columns of
// `stats`.
void evaluate_population(Population& P, FitnessCache& cache, const EvalConfig& eval,
                         Dispatcher& dispatcher, GenerationStats& stats) {
  EvaluationPlan plan = plan_evaluations(P, cache);
  stats.population = P.members.size();
  stats.dispatched = plan.tasks.size();
  stats.cache_hits = plan.cache_hits;
  stats.skipped = plan.skipped_evaluated;
  if (!plan.tasks.empty()) {
    const auto outcomes = dispatcher.evaluate_batch(plan.tasks, eval, P.generation);
    if (outcomes.size() != plan.tasks.size()) {
      throw DispatchError("dispatcher returned the wrong number of results");
    }
    resolve_evaluations(P, plan, outcomes, cache);
  }
}

void fill_fitness_columns(const Population& P, GenerationStats& stats) {
  double sum = 0.0;
  for (const auto& m : P.members) sum += m.fitness.value_or(0.0);
  stats.mean_fitness = sum / static_cast<double>(P.members.size());
  stats.best_fitness = P.members.front().fitness.value_or(0.0);
  stats.best_genotype = P.members.front().genotype.key();
}

void finish_row(SearchReport& report, GenerationStats stats, net::TimePoint start,
                const SearchOptions& options) {
  stats.wall_ms = options.record_wall_clock ? Ms(net::Clock::now() - start).count() : 0.0;
  if (options.on_generation) options.on_generation(stats);
  report.generations.push_back(std::move(stats));
}

}  // namespace

SearchReport run_search(const EvolutionConfig& evo, const EvalConfig& eval, Dispatcher& dispatcher,
                        const SearchOptions& options) {
  check_config(evo);
  SearchReport report;
  report.seed = evo.rng_seed;
  FitnessCache cache(eval.digest());

  SeededRandom init_rng(derive_seed(evo.rng_seed, 0));
  Population P = initial_population(evo.mu, init_rng, evo.max_num_layers);
  P.generation = 0;

  try {
    for (int g = 0; g <= evo.num_generations; ++g) {
      const auto start = net::Clock::now();
      Population batch = P;
      if (g > 0) {
        SeededRandom rng(derive_seed(evo.rng_seed, static_cast<std::uint64_t>(g)));
        P.generation = g;
        batch = mutate_population(P, rng, evo.max_num_layers);
      }
      batch.generation = g;
      GenerationStats stats;
      stats.generation = g;
      evaluate_population(batch, cache, eval, dispatcher, stats);
      P = select(batch, evo.mu);
      fill_fitness_columns(P, stats);
      finish_row(report, std::move(stats), start, options);
    }
  } catch (const DispatchError& e) {
    report.aborted = true;
    report.abort_reason = e.what();
    spdlog::error("search aborted: {}", e.what());
  }
  if (!report.generations.empty()) {
    report.final_population = P;
    report.best = P.members.front();
  }
  return report;
}

SearchReport run_random_search(std::size_t n, const EvolutionConfig& evo, const EvalConfig& eval,
                               Dispatcher& dispatcher, const SearchOptions& options) {
  if (n == 0) throw std::invalid_argument("random search needs at least one sample");
  if (evo.max_num_layers < 1) throw std::invalid_argument("max_num_layers must be >= 1");
  SearchReport report;
  report.seed = evo.rng_seed;
  FitnessCache cache(eval.digest());

  SeededRandom rng(derive_seed(evo.rng_seed, 0));
  Population P;
  for (std::size_t i = 0; i < n; ++i) {
    P.members.push_back(Individual{
        random_genotype(rng, SearchSpaceConfig{evo.max_num_layers}), std::nullopt});
  }
  const auto start = net::Clock::now();
  GenerationStats stats;
  try {
    evaluate_population(P, cache, eval, dispatcher, stats);
  } catch (const DispatchError& e) {
    report.aborted = true;
    report.abort_reason = e.what();
    spdlog::error("random search aborted: {}", e.what());
    return report;
  }
  for (const auto& m : P.members) report.sample_fitness.push_back(m.fitness.value_or(0.0));
  Population ranked = select(P, n);
  fill_fitness_columns(ranked, stats);
  finish_row(report, std::move(stats), start, options);
  report.final_population = std::move(P);
  report.best = ranked.members.front();
  return report;
}

void write_csv(std::ostream& os, const SearchReport& report) {
  os << kCsvHeader << '\n';
  for (const auto& s : report.generations) {
    fmt::print(os, "{},{},{},{},{},{},{},{},{:.1f}\n", s.generation, s.population, s.dispatched,
               s.cache_hits, s.skipped, s.best_fitness, s.mean_fitness, s.best_genotype,
               s.wall_ms);
  }
}

void write_summary(std::ostream& os, const SearchReport& report) {
  fmt::print(os, "seed: {}\n", report.seed);
  if (report.aborted) fmt::print(os, "ABORTED: {}\n", report.abort_reason);
  std::size_t dispatched = 0;
  std::size_t hits = 0;
  std::size_t skipped = 0;
  std::size_t total = 0;
  for (const auto& s : report.generations) {
    dispatched += s.dispatched;
    hits += s.cache_hits;
    skipped += s.skipped;
    total += s.population;
  }
  fmt::print(os, "rows: {}\n", report.generations.size());
  fmt::print(os, "evaluations dispatched: {} of {} ({} cache hits, {} already evaluated)\n",
             dispatched, total, hits, skipped);
  if (!report.sample_fitness.empty()) {
    const double mean = std::accumulate(report.sample_fitness.begin(),
                                        report.sample_fitness.end(), 0.0) /
                        static_cast<double>(report.sample_fitness.size());
    fmt::print(os, "samples: {}\nmean fitness: {}\nstddev fitness: {}\n",
               report.sample_fitness.size(), mean, stddev(report.sample_fitness));
  }
  if (report.best) {
    fmt::print(os, "best fitness: {}\nbest genotype: {}\n", report.best->fitness.value_or(0.0),
               report.best->genotype.key());
  }
}

}  // namespace evonas
