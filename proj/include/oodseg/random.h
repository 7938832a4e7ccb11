/* Copyright 2026 The OodSeg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OODSEG_RANDOM_H_
#define OODSEG_RANDOM_H_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oodseg {

/// SplitMix64 output function.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key of the independent stream number `index` under `seed`.
constexpr std::uint64_t StreamKey(std::uint64_t seed, std::uint64_t index) {
  return Mix64(Mix64(seed) ^ Mix64(index + 0x632be59bd9b4e019ULL));
}

// Counter-based generator: draw k of a stream is Mix64(key + k * golden).
// Streams derived from (seed, index) never share state, so work split across
// threads draws the same numbers as a serial run. Distributions are written
// out here rather than taken from <random>, whose algorithms vary by vendor.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(key) {}
  RandomStream(std::uint64_t seed, std::uint64_t index)
      : key_(StreamKey(seed, index)) {}

  std::uint64_t key() const { return key_; }

  std::uint64_t NextU64() {
    return Mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [0, n), unbiased (rejection on the top range).
  std::uint64_t UniformIndex(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw;
    do {
      draw = NextU64();
    } while (draw >= limit);
    return draw % n;
  }

  /// Standard normal via Box-Muller.
  double Normal() {
    const double u1 = 1.0 - Uniform();  // (0, 1]
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace oodseg

#endif  // OODSEG_RANDOM_H_
