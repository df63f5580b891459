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

// Symbolic expansion of a layer module into a full autoencoder.
//
// Encoder: the layer module (repeated module_repeats times, ReLU after every
// convolution), then R reduction modules of
//   1x1 conv (doubles channels) -> ReLU -> 2x2 max pool, stride 2.
// Decoder: R dilation modules of
//   2x2 conv transpose, stride 2 -> 1x1 conv (halves channels) -> ReLU,
// then the module layers in reverse, each mapping back to the channel count
// its encoder counterpart consumed, and a final Tanh. The mirrored copy of
// the first encoder layer therefore projects onto the input channels.
//
// All module convolutions are zero padded, so only the reduction and
// dilation modules change spatial size.

#ifndef EVONAS_NETWORK_PLAN_H_
#define EVONAS_NETWORK_PLAN_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/genotype.h"

namespace evonas {

struct TensorShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::int64_t elements() const {
    return static_cast<std::int64_t>(height) * width * channels;
  }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

std::ostream& operator<<(std::ostream& os, const TensorShape& s);
std::string to_string(const TensorShape& s);

struct BuildConfig {
  TensorShape input_shape{96, 96, 3};
  int num_reductions = 2;
  int module_repeats = 1;
};

enum class PlanOp {
  kConv,
  kDropout2D,
  kReLU,
  kReduce1x1Conv,
  kMaxPool2x2s2,
  kDilate1x1Conv,
  kConvTranspose2x2s2,
  kTanh,
};

const char* op_name(PlanOp op);

struct PlanNode {
  PlanOp op;
  int kernel = 0;          // spatial kernel side for convolutions
  double dropout_p = 0.0;  // kDropout2D only
  TensorShape in_shape;
  TensorShape out_shape;
  std::int64_t param_count = 0;
};

struct NetworkPlan {
  std::vector<PlanNode> encoder;
  std::vector<PlanNode> decoder;
  TensorShape bottleneck_shape;
  std::int64_t total_params = 0;
  // elements(bottleneck) / elements(tensor entering the first reduction);
  // (1/2)^R because each reduction halves both spatial dims and doubles depth.
  double compression_ratio = 1.0;
};

class BuildError : public std::runtime_error {
 public:
  enum class Code { kSpatialUnderflow, kIndivisibleInput, kInvalidConfig };

  BuildError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Throws BuildError.
NetworkPlan build_plan(const Genotype& g, const BuildConfig& cfg);

std::int64_t param_count(const NetworkPlan& plan);
std::int64_t param_count(std::span<const PlanNode> nodes);

// Shapes at every op boundary, activations excluded: the input of the first
// node followed by the output of each non-activation node.
std::vector<TensorShape> shape_trace(std::span<const PlanNode> nodes);

struct ValidityReport {
  bool ok = true;
  std::optional<BuildError::Code> error;
  std::string message;
};

ValidityReport validate(const Genotype& g, const BuildConfig& cfg);

// One node per line: "<section> <op> <in> -> <out> params=<n>", followed by
// summary lines. Consumed by `evonas describe` and by external trainers.
void write_plan_report(std::ostream& os, const Genotype& g, const NetworkPlan& plan);

}  // namespace evonas

#endif  // EVONAS_NETWORK_PLAN_H_
