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

#include "evonas/fitness.h"

#include <algorithm>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include "json.hpp"

namespace evonas {
namespace {

double substitution_cost(const LayerSpec& a, const LayerSpec& b) {
  if (a == b) return 0.0;
  if (a.kind() == b.kind()) return 0.5;
  return 1.0;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Targets are configuration, not search output; allow more than a search
// would ever produce.
constexpr std::size_t kTargetMaxLayers = 64;

}  // namespace

const char* evaluator_name(EvaluatorKind kind) {
  switch (kind) {
    case EvaluatorKind::kSurrogate: return "surrogate";
    case EvaluatorKind::kDelay: return "delay";
    case EvaluatorKind::kExternal: return "external";
  }
  return "?";
}

EvaluatorKind evaluator_from_name(std::string_view name) {
  if (name == "surrogate") return EvaluatorKind::kSurrogate;
  if (name == "delay") return EvaluatorKind::kDelay;
  if (name == "external") return EvaluatorKind::kExternal;
  throw std::invalid_argument(fmt::format("unknown evaluator '{}'", name));
}

std::string EvalConfig::digest() const {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  const nlohmann::json fields = {
      {"kind", evaluator_name(kind)}, {"target", target_key},
      {"epochs", epochs},             {"delay_ms", delay_ms},
      {"noise_sigma2", noise_sigma2},
  };
  return fmt::format("{:016x}", fnv1a64(fields.dump()));
}

double fitness_from_loss(double loss) { return 1.0 / std::max(loss, kMinLoss); }

double module_distance(const Genotype& a, const Genotype& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Rolling rows of the standard edit-distance table.
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<double>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = std::min({prev[j] + 1.0, cur[j - 1] + 1.0,
                         prev[j - 1] + substitution_cost(a[i - 1], b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

FitnessResult surrogate_fitness(const Genotype& g, const EvalConfig& cfg) {
  if (cfg.kind == EvaluatorKind::kExternal) {
    throw EvaluationError("surrogate evaluation requested with an external config");
  }
  Genotype target = [&] {
    try {
      return parse_genotype(cfg.target_key, SearchSpaceConfig{kTargetMaxLayers});
    } catch (const GenotypeError& e) {
      throw EvaluationError(fmt::format("malformed target '{}': {}", cfg.target_key, e.what()));
    }
  }();
  FitnessResult r;
  r.loss = kLossFloor + module_distance(g, target);
  r.fitness = fitness_from_loss(r.loss);
  return r;
}

FitnessResult delay_evaluate(const Genotype& g, const EvalConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  if (cfg.delay_ms > 0) {
    const auto deadline = start + std::chrono::milliseconds(cfg.delay_ms);
    // sleep_until can wake early on some platforms; loop to the deadline.
    while (Clock::now() < deadline) std::this_thread::sleep_until(deadline);
  }
  FitnessResult r = surrogate_fitness(g, cfg);
  r.eval_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return r;
}

FitnessResult evaluate(const Genotype& g, const EvalConfig& cfg) {
  switch (cfg.kind) {
    case EvaluatorKind::kSurrogate: return surrogate_fitness(g, cfg);
    case EvaluatorKind::kDelay: return delay_evaluate(g, cfg);
    case EvaluatorKind::kExternal:
      throw EvaluationError("external evaluator requires a training worker");
  }
  throw EvaluationError("unknown evaluator kind");
}

}  // namespace evonas
