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

// Layer catalog and the text encoding of a layer module.
//
// A layer module is an ordered list of layers. Its canonical encoding is a
// comma-separated list of tokens: "<k>x<k>conv2d:<filters>" for
// convolutions and the bare token "dropout2d" for 2D dropout, e.g.
//
//   5x5conv2d:16,3x3conv2d:32,dropout2d
//
// The canonical string is the identity of a genotype everywhere: cache keys,
// wire payloads and reports.

#ifndef EVONAS_GENOTYPE_H_
#define EVONAS_GENOTYPE_H_

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/random.h"

namespace evonas {

enum class LayerKind : std::uint8_t {
  kConv1x1,
  kConv3x3,
  kConv5x5,
  kConv7x7,
  kDropout2D,
};

inline constexpr std::array<int, 4> kFilterCounts = {8, 16, 32, 64};
inline constexpr double kDropoutProbability = 0.5;
inline constexpr std::size_t kDefaultMaxNumLayers = 10;

bool is_conv(LayerKind kind);
// Square kernel side; 0 for dropout.
int kernel_size(LayerKind kind);

class LayerSpec {
 public:
  static LayerSpec conv(LayerKind kind, int filters);
  static LayerSpec dropout();

  LayerKind kind() const { return kind_; }
  // 0 for dropout.
  int filters() const { return filters_; }
  bool is_conv() const { return evonas::is_conv(kind_); }

  std::string token() const;

  // Index into catalog(), in [0, 17).
  std::size_t catalog_index() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;

 private:
  LayerSpec(LayerKind kind, int filters) : kind_(kind), filters_(filters) {}

  LayerKind kind_;
  int filters_;
};

inline constexpr std::size_t kCatalogSize = 4 * kFilterCounts.size() + 1;

// All 17 layer options: the four conv kinds crossed with the four filter
// counts, then dropout.
const std::array<LayerSpec, kCatalogSize>& catalog();

struct SearchSpaceConfig {
  std::size_t max_num_layers = kDefaultMaxNumLayers;
};

class GenotypeError : public std::runtime_error {
 public:
  enum class Code {
    kUnknownLayerToken,
    kIllegalFilterCount,
    kEmptyModule,
    kTooManyLayers,
    kMalformedToken,
  };

  GenotypeError(Code code, std::string token, const std::string& what)
      : std::runtime_error(what), code_(code), token_(std::move(token)) {}

  Code code() const { return code_; }
  // The offending token, if the error is about one.
  const std::string& token() const { return token_; }

 private:
  Code code_;
  std::string token_;
};

// Immutable. Every operation that "changes" a genotype returns a new one.
class Genotype {
 public:
  // Throws GenotypeError(kEmptyModule / kTooManyLayers).
  explicit Genotype(std::vector<LayerSpec> layers,
                    std::size_t max_num_layers = kDefaultMaxNumLayers);

  std::span<const LayerSpec> layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  const LayerSpec& operator[](std::size_t i) const { return layers_[i]; }

  const std::string& key() const { return key_; }

  friend bool operator==(const Genotype& a, const Genotype& b) {
    return a.key_ == b.key_;
  }

 private:
  std::vector<LayerSpec> layers_;
  std::string key_;
};

Genotype parse_genotype(std::string_view text,
                        const SearchSpaceConfig& cfg = {});

// Also accepts the table notation "<filters>-<k>x<k>conv2d", layers joined
// with " - " (e.g. "64-7x7conv2d - 64-3x3conv2d"). Input only; output is
// always canonical.
Genotype parse_genotype_lenient(std::string_view text,
                                const SearchSpaceConfig& cfg = {});

std::string serialize(const Genotype& g);

LayerSpec random_layer(RandomSource& rng);
Genotype random_genotype(RandomSource& rng, const SearchSpaceConfig& cfg);

// Number of distinct modules of length 1..max_num_layers, i.e. the sum of
// 17^k. Throws std::overflow_error when the count does not fit in 64 bits.
std::uint64_t search_space_size(const SearchSpaceConfig& cfg);

}  // namespace evonas

#endif  // EVONAS_GENOTYPE_H_
