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

#include "evonas/genotype.h"

#include <algorithm>
#include <charconv>
#include <limits>
#include <utility>

#include <fmt/format.h>

namespace evonas {
namespace {

constexpr std::string_view kDropoutToken = "dropout2d";
constexpr std::string_view kConvSuffix = "conv2d";
// "7x7conv2d:64" plus a separator.
constexpr std::size_t kMaxTokenBytes = 13;

using Code = GenotypeError::Code;

std::optional<LayerKind> conv_kind_from_prefix(std::string_view prefix) {
  if (prefix == "1x1conv2d") return LayerKind::kConv1x1;
  if (prefix == "3x3conv2d") return LayerKind::kConv3x3;
  if (prefix == "5x5conv2d") return LayerKind::kConv5x5;
  if (prefix == "7x7conv2d") return LayerKind::kConv7x7;
  return std::nullopt;
}

bool legal_filter_count(int filters) {
  return std::find(kFilterCounts.begin(), kFilterCounts.end(), filters) !=
         kFilterCounts.end();
}

int parse_filter_count(std::string_view digits, std::string_view token) {
  int value = 0;
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc() ||
      ptr != digits.data() + digits.size()) {
    throw GenotypeError(Code::kMalformedToken, std::string(token),
                        fmt::format("malformed filter count in '{}'", token));
  }
  // Canonical form has no leading zeros ("064" would not round-trip).
  if (digits.size() > 1 && digits.front() == '0') {
    throw GenotypeError(Code::kMalformedToken, std::string(token),
                        fmt::format("non-canonical filter count in '{}'", token));
  }
  if (!legal_filter_count(value)) {
    throw GenotypeError(
        Code::kIllegalFilterCount, std::string(token),
        fmt::format("illegal filter count {} in '{}' (allowed 8, 16, 32, 64)",
                    value, token));
  }
  return value;
}

LayerSpec parse_token(std::string_view token) {
  if (token.empty()) {
    throw GenotypeError(Code::kMalformedToken, "", "empty layer token");
  }
  const auto colon = token.find(':');
  if (colon == std::string_view::npos) {
    if (token == kDropoutToken) return LayerSpec::dropout();
    if (conv_kind_from_prefix(token)) {
      throw GenotypeError(
          Code::kMalformedToken, std::string(token),
          fmt::format("convolution token '{}' is missing ':<filters>'", token));
    }
    throw GenotypeError(Code::kUnknownLayerToken, std::string(token),
                        fmt::format("unknown layer token '{}'", token));
  }
  if (token.find(':', colon + 1) != std::string_view::npos) {
    throw GenotypeError(Code::kMalformedToken, std::string(token),
                        fmt::format("extra ':' in token '{}'", token));
  }
  const auto prefix = token.substr(0, colon);
  if (prefix == kDropoutToken) {
    throw GenotypeError(Code::kMalformedToken, std::string(token),
                        fmt::format("'{}' takes no filter count", prefix));
  }
  const auto kind = conv_kind_from_prefix(prefix);
  if (!kind) {
    throw GenotypeError(Code::kUnknownLayerToken, std::string(token),
                        fmt::format("unknown layer token '{}'", token));
  }
  return LayerSpec::conv(*kind, parse_filter_count(token.substr(colon + 1), token));
}

std::vector<std::string_view> split(std::string_view text, std::string_view sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string make_key(std::span<const LayerSpec> layers) {
  std::string key;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i != 0) key.push_back(',');
    key += layers[i].token();
  }
  return key;
}

}  // namespace

bool is_conv(LayerKind kind) { return kind != LayerKind::kDropout2D; }

int kernel_size(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv1x1: return 1;
    case LayerKind::kConv3x3: return 3;
    case LayerKind::kConv5x5: return 5;
    case LayerKind::kConv7x7: return 7;
    case LayerKind::kDropout2D: return 0;
  }
  return 0;
}

LayerSpec LayerSpec::conv(LayerKind kind, int filters) {
  if (!evonas::is_conv(kind)) {
    throw std::invalid_argument("LayerSpec::conv requires a convolution kind");
  }
  if (!legal_filter_count(filters)) {
    throw GenotypeError(Code::kIllegalFilterCount, std::to_string(filters),
                        fmt::format("illegal filter count {}", filters));
  }
  return LayerSpec(kind, filters);
}

LayerSpec LayerSpec::dropout() { return LayerSpec(LayerKind::kDropout2D, 0); }

std::string LayerSpec::token() const {
  if (!is_conv()) return std::string(kDropoutToken);
  const int k = kernel_size(kind_);
  return fmt::format("{}x{}{}:{}", k, k, kConvSuffix, filters_);
}

std::size_t LayerSpec::catalog_index() const {
  if (!is_conv()) return kCatalogSize - 1;
  const auto f = std::find(kFilterCounts.begin(), kFilterCounts.end(), filters_);
  return static_cast<std::size_t>(kind_) * kFilterCounts.size() +
         static_cast<std::size_t>(f - kFilterCounts.begin());
}

namespace {

LayerSpec catalog_entry(std::size_t i) {
  if (i == kCatalogSize - 1) return LayerSpec::dropout();
  return LayerSpec::conv(static_cast<LayerKind>(i / kFilterCounts.size()),
                         kFilterCounts[i % kFilterCounts.size()]);
}

template <std::size_t... I>
std::array<LayerSpec, kCatalogSize> build_catalog(std::index_sequence<I...>) {
  return {catalog_entry(I)...};
}

}  // namespace

const std::array<LayerSpec, kCatalogSize>& catalog() {
  static const auto options = build_catalog(std::make_index_sequence<kCatalogSize>{});
  return options;
}

Genotype::Genotype(std::vector<LayerSpec> layers, std::size_t max_num_layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw GenotypeError(Code::kEmptyModule, "", "a layer module needs at least one layer");
  }
  if (layers_.size() > max_num_layers) {
    throw GenotypeError(Code::kTooManyLayers, "",
                        fmt::format("{} layers exceeds the limit of {}",
                                    layers_.size(), max_num_layers));
  }
  key_ = make_key(layers_);
}

Genotype parse_genotype(std::string_view text, const SearchSpaceConfig& cfg) {
  if (text.empty()) {
    throw GenotypeError(Code::kEmptyModule, "", "empty module string");
  }
  const auto tokens = split(text, ",");
  if (tokens.size() > cfg.max_num_layers) {
    throw GenotypeError(Code::kTooManyLayers, "",
                        fmt::format("{} layers exceeds the limit of {}",
                                    tokens.size(), cfg.max_num_layers));
  }
  if (text.size() > cfg.max_num_layers * kMaxTokenBytes) {
    throw GenotypeError(Code::kMalformedToken, "",
                        fmt::format("encoded module is {} bytes, limit {}",
                                    text.size(), cfg.max_num_layers * kMaxTokenBytes));
  }
  std::vector<LayerSpec> layers;
  layers.reserve(tokens.size());
  for (auto token : tokens) layers.push_back(parse_token(token));
  return Genotype(std::move(layers), cfg.max_num_layers);
}

Genotype parse_genotype_lenient(std::string_view text,
                                const SearchSpaceConfig& cfg) {
  text = trim(text);
  // Table notation always starts with a digit ("64-5x5conv2d") and uses '-'
  // between filters and kind; the canonical form never contains '-'.
  if (text.find('-') == std::string_view::npos) return parse_genotype(text, cfg);

  std::vector<LayerSpec> layers;
  for (auto raw : split(text, " - ")) {
    const auto token = trim(raw);
    if (token == kDropoutToken) {
      layers.push_back(LayerSpec::dropout());
      continue;
    }
    const auto dash = token.find('-');
    if (dash == std::string_view::npos) {
      throw GenotypeError(Code::kMalformedToken, std::string(token),
                          fmt::format("expected '<filters>-<kind>' in '{}'", token));
    }
    const auto kind = conv_kind_from_prefix(token.substr(dash + 1));
    if (!kind) {
      throw GenotypeError(Code::kUnknownLayerToken, std::string(token),
                          fmt::format("unknown layer token '{}'", token));
    }
    layers.push_back(
        LayerSpec::conv(*kind, parse_filter_count(token.substr(0, dash), token)));
  }
  if (layers.size() > cfg.max_num_layers) {
    throw GenotypeError(Code::kTooManyLayers, "",
                        fmt::format("{} layers exceeds the limit of {}",
                                    layers.size(), cfg.max_num_layers));
  }
  return Genotype(std::move(layers), cfg.max_num_layers);
}

std::string serialize(const Genotype& g) { return g.key(); }

LayerSpec random_layer(RandomSource& rng) {
  return catalog()[rng.uniform_index(kCatalogSize)];
}

Genotype random_genotype(RandomSource& rng, const SearchSpaceConfig& cfg) {
  const std::size_t length = 1 + rng.uniform_index(cfg.max_num_layers);
  std::vector<LayerSpec> layers;
  layers.reserve(length);
  for (std::size_t i = 0; i < length; ++i) layers.push_back(random_layer(rng));
  return Genotype(std::move(layers), cfg.max_num_layers);
}

std::uint64_t search_space_size(const SearchSpaceConfig& cfg) {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 0;
  std::uint64_t power = 1;
  for (std::size_t k = 1; k <= cfg.max_num_layers; ++k) {
    if (power > kMax / kCatalogSize) {
      throw std::overflow_error("search space size exceeds 64 bits");
    }
    power *= kCatalogSize;
    if (total > kMax - power) {
      throw std::overflow_error("search space size exceeds 64 bits");
    }
    total += power;
  }
  return total;
}

}  // namespace evonas
