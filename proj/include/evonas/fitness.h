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

// Evaluator contract and the in-tree evaluators.
//
// Fitness is the reciprocal of the validation loss. Real evaluators train
// the autoencoder described by the genotype and report the validation MSE,
//
//   L(X, Y) = (1/n) * sum_i ||x_i - y_i||^2,
//
// computed against clean targets; for denoising the inputs are corrupted
// with Gaussian noise of variance noise_sigma2 before encoding. Training is
// done by external workers ("external" evaluator). The evaluators here are a
// deterministic surrogate landscape and a fixed-delay wrapper around it.

#ifndef EVONAS_FITNESS_H_
#define EVONAS_FITNESS_H_

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "evonas/genotype.h"

namespace evonas {

enum class EvaluatorKind { kSurrogate, kDelay, kExternal };

const char* evaluator_name(EvaluatorKind kind);
// Throws std::invalid_argument.
EvaluatorKind evaluator_from_name(std::string_view name);

inline constexpr const char* kDefaultTarget = "5x5conv2d:64";
inline constexpr double kLossFloor = 0.1;
inline constexpr double kMinLoss = 1e-9;

struct EvalConfig {
  EvaluatorKind kind = EvaluatorKind::kSurrogate;
  std::string target_key = kDefaultTarget;
  int epochs = 2;
  int delay_ms = 0;
  double noise_sigma2 = 1.0 / 3.0;

  // Stable 64-bit hash (16 hex digits) of all fields above.
  std::string digest() const;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct FitnessResult {
  std::string task_id;
  double fitness = 0.0;
  double loss = 0.0;
  double eval_ms = 0.0;
  std::string worker_id;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 1 / max(loss, 1e-9).
double fitness_from_loss(double loss);

// Weighted edit distance between two layer sequences. Substitution costs 0
// for identical layers, 0.5 for the same kind with a different filter count,
// 1 otherwise; insertion and deletion cost 1.
double module_distance(const Genotype& a, const Genotype& b);

// loss = 0.1 + module_distance(g, target). Throws EvaluationError when the
// target does not parse or the config is not a surrogate config.
FitnessResult surrogate_fitness(const Genotype& g, const EvalConfig& cfg);

// Sleeps cfg.delay_ms, then evaluates the surrogate.
FitnessResult delay_evaluate(const Genotype& g, const EvalConfig& cfg);

// Dispatch on cfg.kind. External configs throw EvaluationError: those need a
// training worker.
FitnessResult evaluate(const Genotype& g, const EvalConfig& cfg);

}  // namespace evonas

#endif  // EVONAS_FITNESS_H_
