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

// Variation and (mu + lambda) selection over layer-module genotypes.
//
// One generation:
//   P' = mutate_population(P)            parents + mutated clones + children
//   plan = plan_evaluations(P', cache)   skip evaluated, fill cached, dedup
//   ... evaluate plan.tasks somewhere ...
//   resolve_evaluations(P', plan, outcomes, cache)
//   P = select(P', mu)
//
// Genotypes are never edited in place; mutation and crossover return new
// values, so an evaluated parent stays evaluated and is never re-sent.

#ifndef EVONAS_EVOLUTION_H_
#define EVONAS_EVOLUTION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "evonas/genotype.h"
#include "evonas/random.h"

namespace evonas {

struct EvolutionConfig {
  std::size_t mu = 10;
  std::size_t max_num_layers = kDefaultMaxNumLayers;
  int num_generations = 20;
  std::uint64_t rng_seed = 0;
};

// Throws std::invalid_argument when mu < 2, num_generations < 1 or
// max_num_layers < 1.
void check_config(const EvolutionConfig& cfg);

struct Individual {
  Genotype genotype;
  std::optional<double> fitness;
  // Evaluation failed; fitness is 0 so the individual never survives.
  bool errored = false;
  int birth_generation = 0;

  bool evaluated() const { return fitness.has_value(); }
};

struct Population {
  std::vector<Individual> members;
  int generation = 0;
};

// Memo of fitness by (genotype key, evaluation config digest). Entries are
// write-once.
class FitnessCache {
 public:
  explicit FitnessCache(std::string config_digest = {})
      : digest_(std::move(config_digest)) {}

  // Counts a hit or a miss.
  std::optional<double> lookup(const Genotype& g);
  // Non-counting probe.
  bool contains(const Genotype& g) const;
  // Returns false (and keeps the old value) if the key is already present.
  bool insert(const Genotype& g, double fitness);
  // Resolution of an in-batch duplicate from a result that is already in
  // flight; counted with the hits.
  void record_duplicate_hit() { ++hits_; }

  std::size_t size() const { return entries_.size(); }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  const std::string& digest() const { return digest_; }

 private:
  std::string key_for(const Genotype& g) const;

  std::string digest_;
  std::unordered_map<std::string, double> entries_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// Clone-then-edit: appends a random layer when |g| < max_num_layers and
// z < 0.5, otherwise replaces a uniformly chosen position with a random
// layer (possibly the same one).
Genotype mutate_genotype(const Genotype& g, RandomSource& rng,
                         std::size_t max_num_layers = kDefaultMaxNumLayers);

// child = g1[0, i1) ++ g2[i2, |g2|), i1 uniform on 1..|g1|, i2 uniform on
// 0..|g2|-1, truncated to max_num_layers.
Genotype crossover(const Genotype& g1, const Genotype& g2, RandomSource& rng,
                   std::size_t max_num_layers = kDefaultMaxNumLayers);

// mu single-layer individuals.
Population initial_population(std::size_t mu, RandomSource& rng,
                              std::size_t max_num_layers = kDefaultMaxNumLayers);

// For each parent p (in order): partner o uniform over the other original
// members; with probability 1/2 each, p and o are replaced by mutated
// clones; the crossover child of the (possibly mutated) pair is always
// added, the mutated clones only if mutation fired. Result holds the parents
// first. New members carry birth_generation = P.generation.
// Throws std::invalid_argument when |P| < 2.
Population mutate_population(const Population& P, RandomSource& rng,
                             std::size_t max_num_layers = kDefaultMaxNumLayers);

class UnevaluatedIndividual : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Order: fitness descending, then fewer layers, then canonical key.
bool ranks_before(const Individual& a, const Individual& b);

// Top mu by ranks_before. Throws UnevaluatedIndividual, or
// std::invalid_argument when |P| < mu.
Population select(const Population& P, std::size_t mu);

struct PendingEvaluation {
  Genotype genotype;
  // Indices into the population sharing this genotype.
  std::vector<std::size_t> members;
};

struct EvaluationPlan {
  std::vector<PendingEvaluation> tasks;
  std::size_t skipped_evaluated = 0;
  // Includes in-batch duplicates, which are resolved from the one dispatched
  // evaluation. skipped_evaluated + cache_hits + tasks.size() == |P|.
  std::size_t cache_hits = 0;
};

// Fills cache hits into P directly; returns what still needs evaluation.
EvaluationPlan plan_evaluations(Population& P, FitnessCache& cache);

struct EvaluationOutcome {
  double fitness = 0.0;
  double loss = 0.0;
  bool error = false;
};

// outcomes[i] belongs to plan.tasks[i]. Successful fitness values are
// cached; errored ones become fitness 0 and are not cached, so a later
// rediscovery is evaluated again.
void resolve_evaluations(Population& P, const EvaluationPlan& plan,
                         std::span<const EvaluationOutcome> outcomes,
                         FitnessCache& cache);

}  // namespace evonas

#endif  // EVONAS_EVOLUTION_H_
