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

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "evonas/evolution.h"
#include "test_support.h"

namespace evonas {
namespace {

using testing_support::ScriptedRandom;

std::size_t catalog_index_of(std::string_view token) {
  const auto& cat = catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].token() == token) return i;
  }
  throw std::logic_error("no such layer");
}

Individual evaluated(std::string_view text, double fitness) {
  return Individual{parse_genotype(text), fitness};
}

Individual fresh(std::string_view text) { return Individual{parse_genotype(text), std::nullopt}; }

TEST(Mutate, AppendBranch) {
  ScriptedRandom rng({ScriptedRandom::u(0.2), ScriptedRandom::idx(catalog_index_of("7x7conv2d:64"))});
  EXPECT_EQ(mutate_genotype(parse_genotype("3x3conv2d:8"), rng).key(), "3x3conv2d:8,7x7conv2d:64");
  EXPECT_TRUE(rng.exhausted());
}

TEST(Mutate, ReplaceBranch) {
  ScriptedRandom rng({ScriptedRandom::u(0.7), ScriptedRandom::idx(1),
                      ScriptedRandom::idx(catalog_index_of("dropout2d"))});
  EXPECT_EQ(mutate_genotype(parse_genotype("3x3conv2d:8,1x1conv2d:16"), rng).key(),
            "3x3conv2d:8,dropout2d");
  EXPECT_TRUE(rng.exhausted());
}

TEST(Mutate, FullGenotypeNeverGrows) {
  SeededRandom rng(1);
  std::vector<LayerSpec> ten(10, LayerSpec::conv(LayerKind::kConv3x3, 8));
  const Genotype g(ten);
  for (int i = 0; i < 500; ++i) ASSERT_EQ(mutate_genotype(g, rng).size(), 10u);
}

TEST(Mutate, FullGenotypeSkipsToReplaceEvenForSmallZ) {
  std::vector<LayerSpec> ten(10, LayerSpec::conv(LayerKind::kConv3x3, 8));
  ScriptedRandom rng({ScriptedRandom::u(0.1), ScriptedRandom::idx(9),
                      ScriptedRandom::idx(catalog_index_of("dropout2d"))});
  const Genotype m = mutate_genotype(Genotype(ten), rng);
  EXPECT_EQ(m[9], LayerSpec::dropout());
  EXPECT_TRUE(rng.exhausted());
}

TEST(Crossover, SliceSemantics) {
  const Genotype g1 = parse_genotype("1x1conv2d:8,3x3conv2d:16,5x5conv2d:32");  // A,B,C
  const Genotype g2 = parse_genotype("7x7conv2d:64,dropout2d");                  // D,E
  ScriptedRandom rng({ScriptedRandom::idx(1), ScriptedRandom::idx(1)});  // i1 = 2, i2 = 1
  EXPECT_EQ(crossover(g1, g2, rng).key(), "1x1conv2d:8,3x3conv2d:16,dropout2d");
}

TEST(Crossover, TruncatesToTheLimit) {
  const Genotype g1(std::vector<LayerSpec>(10, LayerSpec::conv(LayerKind::kConv1x1, 8)));
  const Genotype g2(std::vector<LayerSpec>(10, LayerSpec::dropout()));
  ScriptedRandom rng({ScriptedRandom::idx(9), ScriptedRandom::idx(0)});  // i1 = 10, i2 = 0
  EXPECT_EQ(crossover(g1, g2, rng), g1);
}

TEST(Crossover, ChildIsNeverEmptyAndKeepsAPrefix) {
  SeededRandom rng(2);
  for (int i = 0; i < 2000; ++i) {
    const Genotype a = random_genotype(rng, {});
    const Genotype b = random_genotype(rng, {});
    const Genotype c = crossover(a, b, rng);
    ASSERT_GE(c.size(), 1u);
    ASSERT_LE(c.size(), 10u);
    ASSERT_EQ(c[0], a[0]);
  }
}

TEST(InitialPopulation, SingleLayerUnevaluated) {
  SeededRandom rng(3);
  const Population P = initial_population(10, rng);
  ASSERT_EQ(P.members.size(), 10u);
  for (const auto& m : P.members) {
    EXPECT_EQ(m.genotype.size(), 1u);
    EXPECT_FALSE(m.evaluated());
  }
}

TEST(MutatePopulation, NoMutationsDoublesThePopulation) {
  Population P;
  P.members = {evaluated("3x3conv2d:8", 1.0), evaluated("dropout2d", 2.0)};
  using S = ScriptedRandom;
  ScriptedRandom rng({S::idx(0), S::u(0.5), S::u(0.9), S::idx(0), S::idx(0),
                      S::idx(0), S::u(0.7), S::u(0.6), S::idx(0), S::idx(0)});
  const Population out = mutate_population(P, rng);
  EXPECT_TRUE(rng.exhausted());
  ASSERT_EQ(out.members.size(), 4u);
  EXPECT_EQ(out.members[2].genotype.key(), "3x3conv2d:8,dropout2d");
  EXPECT_EQ(out.members[3].genotype.key(), "dropout2d,3x3conv2d:8");
  EXPECT_FALSE(out.members[2].evaluated());
}

TEST(MutatePopulation, AllMutationsAddThreePerMember) {
  Population P;
  P.members = {evaluated("3x3conv2d:8", 1.0), evaluated("dropout2d", 2.0)};
  using S = ScriptedRandom;
  const std::size_t k = catalog_index_of("5x5conv2d:64");
  std::vector<ScriptedRandom::Draw> script;
  for (int i = 0; i < 2; ++i) {
    script.insert(script.end(), {S::idx(0), S::u(0.1), S::u(0.1), S::u(0.2), S::idx(k),
                                 S::u(0.2), S::idx(k), S::idx(0), S::idx(0)});
  }
  ScriptedRandom rng(script);
  const Population out = mutate_population(P, rng);
  EXPECT_TRUE(rng.exhausted());
  // Both parents, then p', o' and a child for each of them.
  EXPECT_EQ(out.members.size(), 8u);
}

TEST(MutatePopulation, SizeBoundsAndParentsKept) {
  SeededRandom rng(4);
  Population P = initial_population(10, rng);
  for (auto& m : P.members) m.fitness = 1.0;
  for (int i = 0; i < 200; ++i) {
    const Population out = mutate_population(P, rng);
    ASSERT_GE(out.members.size(), 20u);
    ASSERT_LE(out.members.size(), 40u);
    for (std::size_t j = 0; j < 10; ++j) {
      ASSERT_EQ(out.members[j].genotype, P.members[j].genotype);
      ASSERT_TRUE(out.members[j].evaluated());
    }
    for (std::size_t j = 10; j < out.members.size(); ++j) ASSERT_FALSE(out.members[j].evaluated());
  }
}

TEST(MutatePopulation, InputIsUntouched) {
  SeededRandom rng(5);
  Population P = initial_population(6, rng);
  const Population copy = P;
  mutate_population(P, rng);
  ASSERT_EQ(P.members.size(), copy.members.size());
  for (std::size_t i = 0; i < P.members.size(); ++i) {
    EXPECT_EQ(P.members[i].genotype, copy.members[i].genotype);
  }
}

TEST(Select, KeepsTheLargest) {
  Population P;
  for (int i = 0; i < 15; ++i) {
    std::string g = "dropout2d";
    for (int j = 0; j < i % 5; ++j) g += ",dropout2d";
    P.members.push_back(evaluated(g, static_cast<double>((i * 7) % 15)));
  }
  const Population out = select(P, 10);
  ASSERT_EQ(out.members.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(*out.members[i].fitness, 14.0 - i);
}

TEST(Select, ShorterWinsTies) {
  Population P;
  P.members = {evaluated("dropout2d,dropout2d,dropout2d,dropout2d,dropout2d", 2.0),
               evaluated("dropout2d,dropout2d,dropout2d", 2.0)};
  const Population out = select(P, 1);
  EXPECT_EQ(out.members[0].genotype.size(), 3u);
}

TEST(Select, KeyBreaksRemainingTies) {
  Population P;
  P.members = {evaluated("dropout2d", 1.0), evaluated("1x1conv2d:8", 1.0)};
  EXPECT_EQ(select(P, 1).members[0].genotype.key(), "1x1conv2d:8");
}

TEST(Select, MuEqualsSizeKeepsEveryone) {
  Population P;
  P.members = {evaluated("dropout2d", 1.0), evaluated("1x1conv2d:8", 3.0),
               evaluated("3x3conv2d:8", 2.0)};
  const Population out = select(P, 3);
  ASSERT_EQ(out.members.size(), 3u);
  std::vector<std::string> keys;
  for (const auto& m : out.members) keys.push_back(m.genotype.key());
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"1x1conv2d:8", "3x3conv2d:8", "dropout2d"}));
}

TEST(Select, Errors) {
  Population P;
  P.members = {evaluated("dropout2d", 1.0), fresh("1x1conv2d:8")};
  EXPECT_THROW(select(P, 1), UnevaluatedIndividual);
  EXPECT_THROW(select(P, 3), std::invalid_argument);
}

TEST(Plan, ParentsAreSkipped) {
  SeededRandom rng(6);
  Population P;
  for (int i = 0; i < 10; ++i) P.members.push_back(evaluated("dropout2d", 1.0));
  std::set<std::string> seen;
  while (seen.size() < 20) {
    const Genotype g = random_genotype(rng, {});
    if (seen.insert(g.key()).second) P.members.push_back(Individual{g, std::nullopt});
  }
  FitnessCache cache;
  const EvaluationPlan plan = plan_evaluations(P, cache);
  EXPECT_EQ(plan.tasks.size(), 20u);
  EXPECT_EQ(plan.skipped_evaluated, 10u);
  EXPECT_EQ(plan.cache_hits, 0u);
  EXPECT_NEAR(static_cast<double>(plan.skipped_evaluated) / P.members.size(), 1.0 / 3.0, 1e-12);
}

TEST(Plan, FullCacheHit) {
  Population P;
  P.members = {fresh("dropout2d"), fresh("1x1conv2d:8")};
  FitnessCache cache("d");
  cache.insert(parse_genotype("dropout2d"), 2.0);
  cache.insert(parse_genotype("1x1conv2d:8"), 3.0);
  const EvaluationPlan plan = plan_evaluations(P, cache);
  EXPECT_TRUE(plan.tasks.empty());
  EXPECT_EQ(plan.cache_hits, 2u);
  EXPECT_EQ(*P.members[0].fitness, 2.0);
  EXPECT_EQ(*P.members[1].fitness, 3.0);
  EXPECT_EQ(cache.hits(), 2u);
}

TEST(Plan, InBatchDuplicatesShareOneTask) {
  Population P;
  P.members = {fresh("3x3conv2d:8"), fresh("dropout2d"), fresh("3x3conv2d:8")};
  FitnessCache cache;
  const EvaluationPlan plan = plan_evaluations(P, cache);
  ASSERT_EQ(plan.tasks.size(), 2u);
  EXPECT_EQ(plan.tasks[0].members, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(plan.cache_hits, 1u);
  EXPECT_EQ(plan.skipped_evaluated + plan.cache_hits + plan.tasks.size(), P.members.size());

  const std::vector<EvaluationOutcome> outcomes = {{4.0, 0.25, false}, {2.0, 0.5, false}};
  resolve_evaluations(P, plan, outcomes, cache);
  EXPECT_EQ(*P.members[0].fitness, 4.0);
  EXPECT_EQ(*P.members[2].fitness, 4.0);
  EXPECT_EQ(*P.members[1].fitness, 2.0);
  EXPECT_TRUE(cache.contains(parse_genotype("3x3conv2d:8")));
}

TEST(Plan, AccountingAddsUpOnSeededRuns) {
  SeededRandom rng(7);
  FitnessCache cache;
  Population P = initial_population(10, rng);
  for (int gen = 0; gen < 30; ++gen) {
    EvaluationPlan plan = plan_evaluations(P, cache);
    ASSERT_EQ(plan.skipped_evaluated + plan.cache_hits + plan.tasks.size(), P.members.size());
    std::vector<EvaluationOutcome> out;
    for (const auto& t : plan.tasks) out.push_back({1.0 + t.genotype.size(), 0.0, false});
    resolve_evaluations(P, plan, out, cache);
    P = select(P, 10);
    P = mutate_population(P, rng);
  }
}

TEST(Resolve, ErrorsScoreZeroAndAreNotCached) {
  Population P;
  P.members = {fresh("dropout2d")};
  FitnessCache cache;
  const EvaluationPlan plan = plan_evaluations(P, cache);
  const std::vector<EvaluationOutcome> outcomes = {{9.0, 0.0, true}};
  resolve_evaluations(P, plan, outcomes, cache);
  EXPECT_EQ(*P.members[0].fitness, 0.0);
  EXPECT_TRUE(P.members[0].errored);
  EXPECT_FALSE(cache.contains(parse_genotype("dropout2d")));
}

TEST(Resolve, OutcomeCountMustMatch) {
  Population P;
  P.members = {fresh("dropout2d")};
  FitnessCache cache;
  const EvaluationPlan plan = plan_evaluations(P, cache);
  EXPECT_THROW(resolve_evaluations(P, plan, {}, cache), std::invalid_argument);
}

TEST(Cache, FirstValueWinsAndCountsAreKept) {
  FitnessCache cache("abc");
  const Genotype g = parse_genotype("dropout2d");
  EXPECT_FALSE(cache.lookup(g));
  EXPECT_TRUE(cache.insert(g, 1.0));
  EXPECT_FALSE(cache.insert(g, 2.0));
  EXPECT_EQ(cache.lookup(g), 1.0);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.digest(), "abc");
}

TEST(Config, Checks) {
  EvolutionConfig c;
  EXPECT_NO_THROW(check_config(c));
  c.mu = 1;
  EXPECT_THROW(check_config(c), std::invalid_argument);
  c = {};
  c.num_generations = 0;
  EXPECT_THROW(check_config(c), std::invalid_argument);
}

}  // namespace
}  // namespace evonas
