// Copyright 2026 The fedmp Authors
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

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

namespace fedmp {

// Mixes a user seed with a stream tag so independent consumers (splits,
// partitioners, initializers) never share a random stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// k distinct values from [0, n), in draw order.
template <typename Int = std::uint32_t>
std::vector<Int> sample_distinct(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<Int> out;
  out.reserve(k);
  std::unordered_set<Int> seen;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (out.size() < k) {
    const auto v = static_cast<Int>(pick(rng));
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace fedmp
