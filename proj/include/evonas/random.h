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

#ifndef EVONAS_RANDOM_H_
#define EVONAS_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace evonas {

// Source of the two kinds of draws the search needs. Implementations must be
// deterministic for a given construction so runs can be replayed.
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  // Uniform on [0, 1).
  virtual double uniform01() = 0;

  // Uniform on {0, ..., n - 1}. Requires n >= 1.
  virtual std::size_t uniform_index(std::size_t n) = 0;
};

// mt19937_64 with distribution code written out here instead of the
// <random> distributions, whose output is implementation-defined. The draw
// sequence is therefore identical on every standard library.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}

  double uniform01() override;
  std::size_t uniform_index(std::size_t n) override;

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; a good bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

// Seed for an independent stream identified by (master, stream). Used to
// give each generation its own stream so evolution randomness never depends
// on the order in which results come back.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Fresh 64-bit seed from the OS entropy source.
std::uint64_t entropy_seed();

// Random RFC 4122 version-4 UUID string (identifiers only, not search state).
std::string make_uuid();

}  // namespace evonas

#endif  // EVONAS_RANDOM_H_
