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

#include <chrono>
#include <set>

#include <gtest/gtest.h>

#include "evonas/fitness.h"
#include "evonas/random.h"
#include "oracles.h"

namespace evonas {
namespace {

double d(std::string_view a, std::string_view b) {
  return module_distance(parse_genotype(a), parse_genotype(b));
}

TEST(ModuleDistance, Examples) {
  EXPECT_EQ(d("5x5conv2d:64", "5x5conv2d:64"), 0.0);
  EXPECT_EQ(d("5x5conv2d:64", "5x5conv2d:32"), 0.5);
  EXPECT_EQ(d("3x3conv2d:8", "5x5conv2d:64,3x3conv2d:8"), 1.0);
  EXPECT_EQ(d("dropout2d", "1x1conv2d:8"), 1.0);
}

TEST(ModuleDistance, MatchesExhaustiveAlignmentOnShortPairs) {
  SeededRandom rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_genotype(rng, SearchSpaceConfig{5}).key();
    const auto b = random_genotype(rng, SearchSpaceConfig{5}).key();
    ASSERT_EQ(d(a, b), oracle::alignment_distance_exhaustive(a, b)) << a << " | " << b;
  }
}

TEST(ModuleDistance, MatchesRecursiveOracleOnRandomPairs) {
  SeededRandom rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_genotype(rng, {}).key();
    const auto b = random_genotype(rng, {}).key();
    ASSERT_EQ(d(a, b), oracle::alignment_distance(a, b)) << a << " | " << b;
  }
}

TEST(ModuleDistance, MetricProperties) {
  SeededRandom rng(5);
  for (int i = 0; i < 2000; ++i) {
    const Genotype a = random_genotype(rng, {});
    const Genotype b = random_genotype(rng, {});
    const Genotype c = random_genotype(rng, {});
    const double ab = module_distance(a, b);
    ASSERT_GE(ab, 0.0);
    ASSERT_EQ(ab, module_distance(b, a));
    ASSERT_EQ(ab == 0.0, a == b);
    ASSERT_LE(module_distance(a, c), ab + module_distance(b, c) + 1e-12);
  }
}

TEST(Surrogate, Examples) {
  EvalConfig cfg;
  EXPECT_DOUBLE_EQ(surrogate_fitness(parse_genotype("5x5conv2d:64"), cfg).fitness, 10.0);
  EXPECT_NEAR(surrogate_fitness(parse_genotype("5x5conv2d:32"), cfg).fitness, 1.0 / 0.6, 1e-12);
  EXPECT_NEAR(surrogate_fitness(parse_genotype("5x5conv2d:32"), cfg).loss, 0.6, 1e-12);
}

TEST(Surrogate, OnlyTheTargetAttainsTheMaximum) {
  EvalConfig cfg;
  int at_max = 0;
  for (const auto& m : oracle::all_modules(2)) {
    const double f = surrogate_fitness(parse_genotype(m), cfg).fitness;
    ASSERT_LE(f, 10.0);
    if (f == 10.0) {
      ++at_max;
      EXPECT_EQ(m, cfg.target_key);
    }
  }
  EXPECT_EQ(at_max, 1);
}

TEST(Surrogate, Deterministic) {
  SeededRandom rng(6);
  EvalConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const Genotype g = random_genotype(rng, {});
    ASSERT_EQ(surrogate_fitness(g, cfg).fitness, surrogate_fitness(g, cfg).fitness);
  }
}

TEST(Surrogate, MalformedTarget) {
  EvalConfig cfg;
  cfg.target_key = "nonsense";
  EXPECT_THROW(surrogate_fitness(parse_genotype("dropout2d"), cfg), EvaluationError);
}

TEST(Delay, ZeroDelayEqualsSurrogate) {
  EvalConfig cfg;
  cfg.kind = EvaluatorKind::kDelay;
  const Genotype g = parse_genotype("3x3conv2d:32,dropout2d");
  EXPECT_EQ(delay_evaluate(g, cfg).fitness, surrogate_fitness(g, cfg).fitness);
}

TEST(Delay, SleepsAtLeastTheDelay) {
  EvalConfig cfg;
  cfg.kind = EvaluatorKind::kDelay;
  cfg.delay_ms = 200;
  const Genotype g = parse_genotype("3x3conv2d:32");
  const auto start = std::chrono::steady_clock::now();
  const FitnessResult r = evaluate(g, cfg);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_GE(r.eval_ms, 200.0);
  EXPECT_GE(ms, 200.0);
  EXPECT_LT(ms, 400.0);
  cfg.delay_ms = 0;
  EXPECT_EQ(r.fitness, surrogate_fitness(g, cfg).fitness);
}

TEST(Evaluate, ExternalNeedsATrainer) {
  EvalConfig cfg;
  cfg.kind = EvaluatorKind::kExternal;
  EXPECT_THROW(evaluate(parse_genotype("dropout2d"), cfg), EvaluationError);
}

TEST(FitnessFromLoss, Reciprocal) {
  EXPECT_DOUBLE_EQ(fitness_from_loss(0.5), 2.0);
  EXPECT_DOUBLE_EQ(fitness_from_loss(0.0), 1.0 / kMinLoss);
}

TEST(EvalConfig, DigestCoversEveryField) {
  const EvalConfig base;
  std::set<std::string> digests{base.digest()};
  EvalConfig c = base;
  c.kind = EvaluatorKind::kDelay;
  digests.insert(c.digest());
  c = base;
  c.target_key = "dropout2d";
  digests.insert(c.digest());
  c = base;
  c.epochs = 3;
  digests.insert(c.digest());
  c = base;
  c.delay_ms = 1;
  digests.insert(c.digest());
  c = base;
  c.noise_sigma2 = 0.5;
  digests.insert(c.digest());
  EXPECT_EQ(digests.size(), 6u);
  EXPECT_EQ(base.digest(), EvalConfig{}.digest());
  EXPECT_EQ(base.digest().size(), 16u);
}

TEST(EvaluatorName, RoundTrips) {
  for (auto k : {EvaluatorKind::kSurrogate, EvaluatorKind::kDelay, EvaluatorKind::kExternal}) {
    EXPECT_EQ(evaluator_from_name(evaluator_name(k)), k);
  }
  EXPECT_THROW(evaluator_from_name("magic"), std::invalid_argument);
}

}  // namespace
}  // namespace evonas
