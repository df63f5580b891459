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

#include "evonas/network_plan.h"

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace evonas {
namespace {

std::int64_t conv_params(int k, int c_in, int c_out) {
  return static_cast<std::int64_t>(k) * k * c_in * c_out + c_out;
}

PlanNode conv_node(PlanOp op, int k, TensorShape in, int c_out) {
  TensorShape out{in.height, in.width, c_out};
  return PlanNode{op, k, 0.0, in, out, conv_params(k, in.channels, c_out)};
}

PlanNode passthrough(PlanOp op, TensorShape shape) {
  return PlanNode{op, 0, 0.0, shape, shape, 0};
}

void check_config(const BuildConfig& cfg) {
  const auto& s = cfg.input_shape;
  if (s.height <= 0 || s.width <= 0 || s.channels <= 0) {
    throw BuildError(BuildError::Code::kInvalidConfig,
                     fmt::format("input shape {} must be strictly positive", to_string(s)));
  }
  if (cfg.num_reductions < 1 || cfg.num_reductions > 30) {
    throw BuildError(BuildError::Code::kInvalidConfig,
                     fmt::format("num_reductions {} outside [1, 30]", cfg.num_reductions));
  }
  if (cfg.module_repeats < 1) {
    throw BuildError(BuildError::Code::kInvalidConfig,
                     fmt::format("module_repeats {} must be >= 1", cfg.module_repeats));
  }
  const int scale = 1 << cfg.num_reductions;
  if (s.height / scale == 0 || s.width / scale == 0) {
    throw BuildError(BuildError::Code::kSpatialUnderflow,
                     fmt::format("{} reductions underflow input {}", cfg.num_reductions,
                                 to_string(s)));
  }
  if (s.height % scale != 0 || s.width % scale != 0) {
    throw BuildError(BuildError::Code::kIndivisibleInput,
                     fmt::format("input {} not divisible by 2^{} = {}", to_string(s),
                                 cfg.num_reductions, scale));
  }
}

}  // namespace

std::ostream& operator<<(std::ostream& os, const TensorShape& s) {
  return os << to_string(s);
}

std::string to_string(const TensorShape& s) {
  return fmt::format("({},{},{})", s.height, s.width, s.channels);
}

const char* op_name(PlanOp op) {
  switch (op) {
    case PlanOp::kConv: return "conv";
    case PlanOp::kDropout2D: return "dropout2d";
    case PlanOp::kReLU: return "relu";
    case PlanOp::kReduce1x1Conv: return "reduce_conv1x1";
    case PlanOp::kMaxPool2x2s2: return "maxpool2x2s2";
    case PlanOp::kDilate1x1Conv: return "dilate_conv1x1";
    case PlanOp::kConvTranspose2x2s2: return "convtranspose2x2s2";
    case PlanOp::kTanh: return "tanh";
  }
  return "?";
}

NetworkPlan build_plan(const Genotype& g, const BuildConfig& cfg) {
  check_config(cfg);
  NetworkPlan plan;

  // Encoder body. Remember the channel count each module layer consumed so
  // the decoder can map back onto it.
  struct Mirror {
    LayerSpec layer;
    int in_channels;
  };
  std::vector<Mirror> mirrors;
  TensorShape shape = cfg.input_shape;
  for (int rep = 0; rep < cfg.module_repeats; ++rep) {
    for (const LayerSpec& layer : g.layers()) {
      mirrors.push_back({layer, shape.channels});
      if (layer.is_conv()) {
        plan.encoder.push_back(
            conv_node(PlanOp::kConv, kernel_size(layer.kind()), shape, layer.filters()));
        shape = plan.encoder.back().out_shape;
        plan.encoder.push_back(passthrough(PlanOp::kReLU, shape));
      } else {
        PlanNode drop = passthrough(PlanOp::kDropout2D, shape);
        drop.dropout_p = kDropoutProbability;
        plan.encoder.push_back(drop);
      }
    }
  }

  const TensorShape reduction_input = shape;
  for (int r = 0; r < cfg.num_reductions; ++r) {
    plan.encoder.push_back(conv_node(PlanOp::kReduce1x1Conv, 1, shape, 2 * shape.channels));
    shape = plan.encoder.back().out_shape;
    plan.encoder.push_back(passthrough(PlanOp::kReLU, shape));
    const TensorShape pooled{shape.height / 2, shape.width / 2, shape.channels};
    plan.encoder.push_back(PlanNode{PlanOp::kMaxPool2x2s2, 2, 0.0, shape, pooled, 0});
    shape = pooled;
  }
  plan.bottleneck_shape = shape;

  for (int r = 0; r < cfg.num_reductions; ++r) {
    const TensorShape grown{shape.height * 2, shape.width * 2, shape.channels};
    plan.decoder.push_back(PlanNode{PlanOp::kConvTranspose2x2s2, 2, 0.0, shape, grown,
                                    conv_params(2, shape.channels, shape.channels)});
    shape = grown;
    plan.decoder.push_back(conv_node(PlanOp::kDilate1x1Conv, 1, shape, shape.channels / 2));
    shape = plan.decoder.back().out_shape;
    plan.decoder.push_back(passthrough(PlanOp::kReLU, shape));
  }

  for (auto it = mirrors.rbegin(); it != mirrors.rend(); ++it) {
    const bool last = std::next(it) == mirrors.rend();
    if (it->layer.is_conv()) {
      plan.decoder.push_back(
          conv_node(PlanOp::kConv, kernel_size(it->layer.kind()), shape, it->in_channels));
      shape = plan.decoder.back().out_shape;
      if (!last) plan.decoder.push_back(passthrough(PlanOp::kReLU, shape));
    } else {
      PlanNode drop = passthrough(PlanOp::kDropout2D, shape);
      drop.dropout_p = kDropoutProbability;
      plan.decoder.push_back(drop);
    }
  }
  plan.decoder.push_back(passthrough(PlanOp::kTanh, shape));

  plan.total_params = param_count(plan);
  plan.compression_ratio = static_cast<double>(plan.bottleneck_shape.elements()) /
                           static_cast<double>(reduction_input.elements());
  return plan;
}

std::int64_t param_count(std::span<const PlanNode> nodes) {
  std::int64_t total = 0;
  for (const auto& n : nodes) total += n.param_count;
  return total;
}

std::int64_t param_count(const NetworkPlan& plan) {
  return param_count(plan.encoder) + param_count(plan.decoder);
}

std::vector<TensorShape> shape_trace(std::span<const PlanNode> nodes) {
  std::vector<TensorShape> trace;
  if (nodes.empty()) return trace;
  trace.push_back(nodes.front().in_shape);
  for (const auto& n : nodes) {
    if (n.op == PlanOp::kReLU || n.op == PlanOp::kTanh) continue;
    trace.push_back(n.out_shape);
  }
  return trace;
}

ValidityReport validate(const Genotype& g, const BuildConfig& cfg) {
  try {
    const NetworkPlan plan = build_plan(g, cfg);
    if (plan.decoder.back().out_shape != cfg.input_shape) {
      return {false, std::nullopt, "decoder output does not match input shape"};
    }
    return {};
  } catch (const BuildError& e) {
    return {false, e.code(), e.what()};
  }
}

void write_plan_report(std::ostream& os, const Genotype& g, const NetworkPlan& plan) {
  os << "genotype " << g.key() << '\n';
  auto section = [&os](const char* name, const std::vector<PlanNode>& nodes) {
    for (const auto& n : nodes) {
      std::string op = op_name(n.op);
      if (n.op == PlanOp::kConv) op = fmt::format("conv{}x{}", n.kernel, n.kernel);
      if (n.op == PlanOp::kDropout2D) op = fmt::format("dropout2d(p={})", n.dropout_p);
      fmt::print(os, "{} {:<22} {:>16} -> {:<16} params={}\n", name, op,
                 to_string(n.in_shape), to_string(n.out_shape), n.param_count);
    }
  };
  section("encoder", plan.encoder);
  section("decoder", plan.decoder);
  fmt::print(os, "bottleneck {}\n", to_string(plan.bottleneck_shape));
  fmt::print(os, "total_params {}\n", plan.total_params);
  fmt::print(os, "compression_ratio {}\n", plan.compression_ratio);
}

}  // namespace evonas
