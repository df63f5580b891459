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

#include "evonas/random.h"

#include <array>
#include <limits>
#include <mutex>

#include <fmt/format.h>

namespace evonas {

double SeededRandom::uniform01() {
  // Top 53 bits -> exactly representable multiples of 2^-53.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SeededRandom::uniform_index(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = n;
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string make_uuid() {
  static std::mutex mu;
  static std::mt19937_64 engine{entropy_seed()};
  std::array<std::uint64_t, 2> words;
  {
    std::lock_guard<std::mutex> lock(mu);
    words = {engine(), engine()};
  }
  words[0] = (words[0] & ~0xf000ULL) | 0x4000ULL;                // version 4
  words[1] = (words[1] & ~(0x3ULL << 62)) | (0x2ULL << 62);      // variant 10
  return fmt::format("{:08x}-{:04x}-{:04x}-{:04x}-{:012x}", words[0] >> 32,
                     (words[0] >> 16) & 0xffff, words[0] & 0xffff,
                     words[1] >> 48, words[1] & 0xffffffffffffULL);
}

}  // namespace evonas
