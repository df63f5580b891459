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

#include "evonas/evolution.h"

#include <algorithm>

#include <fmt/format.h>

namespace evonas {

void check_config(const EvolutionConfig& cfg) {
  if (cfg.mu < 2) {
    throw std::invalid_argument(fmt::format("mu must be >= 2, got {}", cfg.mu));
  }
  if (cfg.num_generations < 1) {
    throw std::invalid_argument(
        fmt::format("num_generations must be >= 1, got {}", cfg.num_generations));
  }
  if (cfg.max_num_layers < 1) {
    throw std::invalid_argument("max_num_layers must be >= 1");
  }
}

std::string FitnessCache::key_for(const Genotype& g) const {
  return g.key() + '#' + digest_;
}

std::optional<double> FitnessCache::lookup(const Genotype& g) {
  const auto it = entries_.find(key_for(g));
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

bool FitnessCache::contains(const Genotype& g) const {
  return entries_.count(key_for(g)) != 0;
}

bool FitnessCache::insert(const Genotype& g, double fitness) {
  return entries_.emplace(key_for(g), fitness).second;
}

Genotype mutate_genotype(const Genotype& g, RandomSource& rng,
                         std::size_t max_num_layers) {
  std::vector<LayerSpec> layers(g.layers().begin(), g.layers().end());
  const double z = rng.uniform01();
  if (layers.size() < max_num_layers && z < 0.5) {
    layers.push_back(random_layer(rng));
  } else {
    const std::size_t pos = rng.uniform_index(layers.size());
    layers[pos] = random_layer(rng);
  }
  return Genotype(std::move(layers), std::max(max_num_layers, g.size()));
}

Genotype crossover(const Genotype& g1, const Genotype& g2, RandomSource& rng,
                   std::size_t max_num_layers) {
  const std::size_t i1 = 1 + rng.uniform_index(g1.size());
  const std::size_t i2 = rng.uniform_index(g2.size());
  std::vector<LayerSpec> layers(g1.layers().begin(), g1.layers().begin() + i1);
  layers.insert(layers.end(), g2.layers().begin() + i2, g2.layers().end());
  if (layers.size() > max_num_layers) layers.erase(layers.begin() + max_num_layers, layers.end());
  return Genotype(std::move(layers), max_num_layers);
}

Population initial_population(std::size_t mu, RandomSource& rng,
                              std::size_t max_num_layers) {
  Population P;
  P.members.reserve(mu);
  for (std::size_t i = 0; i < mu; ++i) {
    P.members.push_back(Individual{Genotype({random_layer(rng)}, max_num_layers), std::nullopt});
  }
  return P;
}

Population mutate_population(const Population& P, RandomSource& rng,
                             std::size_t max_num_layers) {
  const std::size_t n = P.members.size();
  if (n < 2) {
    throw std::invalid_argument("mutate_population needs at least two members");
  }
  Population out = P;
  out.members.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    // Partner from the generation-start membership, excluding p itself.
    std::size_t j = rng.uniform_index(n - 1);
    if (j >= i) ++j;
    const double u1 = rng.uniform01();
    const double u2 = rng.uniform01();

    std::optional<Genotype> p_mut;
    std::optional<Genotype> o_mut;
    if (u1 < 0.5) p_mut = mutate_genotype(P.members[i].genotype, rng, max_num_layers);
    if (u2 < 0.5) o_mut = mutate_genotype(P.members[j].genotype, rng, max_num_layers);
    const Genotype& p = p_mut ? *p_mut : P.members[i].genotype;
    const Genotype& o = o_mut ? *o_mut : P.members[j].genotype;
    Genotype child = crossover(p, o, rng, max_num_layers);

    if (p_mut) out.members.push_back(Individual{*p_mut, std::nullopt, false, P.generation});
    if (o_mut) out.members.push_back(Individual{*o_mut, std::nullopt, false, P.generation});
    out.members.push_back(Individual{std::move(child), std::nullopt, false, P.generation});
  }
  return out;
}

bool ranks_before(const Individual& a, const Individual& b) {
  const double fa = a.fitness.value_or(0.0);
  const double fb = b.fitness.value_or(0.0);
  if (fa != fb) return fa > fb;
  if (a.genotype.size() != b.genotype.size()) return a.genotype.size() < b.genotype.size();
  return a.genotype.key() < b.genotype.key();
}

Population select(const Population& P, std::size_t mu) {
  if (P.members.size() < mu) {
    throw std::invalid_argument(
        fmt::format("cannot select {} from {} members", mu, P.members.size()));
  }
  for (const auto& m : P.members) {
    if (!m.evaluated()) {
      throw UnevaluatedIndividual(
          fmt::format("individual '{}' has no fitness", m.genotype.key()));
    }
  }
  Population out = P;
  std::stable_sort(out.members.begin(), out.members.end(), ranks_before);
  out.members.erase(out.members.begin() + mu, out.members.end());
  return out;
}

EvaluationPlan plan_evaluations(Population& P, FitnessCache& cache) {
  EvaluationPlan plan;
  std::unordered_map<std::string, std::size_t> pending;  // key -> task index
  for (std::size_t i = 0; i < P.members.size(); ++i) {
    Individual& m = P.members[i];
    if (m.evaluated()) {
      ++plan.skipped_evaluated;
      continue;
    }
    if (const auto it = pending.find(m.genotype.key()); it != pending.end()) {
      plan.tasks[it->second].members.push_back(i);
      cache.record_duplicate_hit();
      ++plan.cache_hits;
      continue;
    }
    if (const auto hit = cache.lookup(m.genotype)) {
      m.fitness = *hit;
      ++plan.cache_hits;
      continue;
    }
    pending.emplace(m.genotype.key(), plan.tasks.size());
    plan.tasks.push_back(PendingEvaluation{m.genotype, {i}});
  }
  return plan;
}

void resolve_evaluations(Population& P, const EvaluationPlan& plan,
                         std::span<const EvaluationOutcome> outcomes,
                         FitnessCache& cache) {
  if (outcomes.size() != plan.tasks.size()) {
    throw std::invalid_argument(fmt::format("{} outcomes for {} tasks", outcomes.size(),
                                            plan.tasks.size()));
  }
  for (std::size_t t = 0; t < plan.tasks.size(); ++t) {
    const auto& outcome = outcomes[t];
    const double fitness = outcome.error ? 0.0 : outcome.fitness;
    if (!outcome.error) cache.insert(plan.tasks[t].genotype, fitness);
    for (std::size_t idx : plan.tasks[t].members) {
      P.members[idx].fitness = fitness;
      P.members[idx].errored = outcome.error;
    }
  }
}

}  // namespace evonas
