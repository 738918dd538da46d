// Copyright 2026 The dpalm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPALM_RNG_H_
#define DPALM_RNG_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string_view>

namespace dpalm {

// SplitMix64 finalizer. Used to derive independent seeds; never as a
// generator on its own.
constexpr uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes of a tag. Lets call sites name their sub-streams
// ("pretrain", "shadow", ...) instead of inventing magic numbers.
constexpr uint64_t TagHash(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Folds a sequence of 64-bit words into a seed. Order matters.
inline uint64_t DeriveSeed(uint64_t master, std::initializer_list<uint64_t> parts) {
  uint64_t h = Mix64(master);
  for (uint64_t p : parts) h = Mix64(h ^ Mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline uint64_t DeriveSeed(uint64_t master, std::string_view tag) { return DeriveSeed(master, {TagHash(tag)}); }

// A reproducible random stream identified by (seed, stream_index). Two
// streams with the same pair produce the same draws on every platform: the
// engine is std::mt19937_64 (fully specified by the standard) and the
// conversion to floating point is done here rather than through the
// implementation-defined std distributions.
struct RngStream {
  uint64_t seed = 0;
  uint64_t stream_index = 0;

  friend bool operator==(const RngStream&, const RngStream&) = default;

  // Stream k of this stream's seed.
  RngStream Child(uint64_t k) const { return {seed, stream_index * 0x9e3779b9ULL + k + 1}; }

  uint64_t EngineSeed() const { return DeriveSeed(seed, {stream_index}); }
};

// Stateful draw source over one RngStream. Not thread-safe; give each
// concurrent consumer its own stream.
class UniformSource {
 public:
  explicit UniformSource(const RngStream& stream) : engine_(stream.EngineSeed()) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform on the open interval (0, 1): the 53-bit grid shifted by half a
  // step, so neither endpoint is reachable.
  double NextOpen01() {
    constexpr double kStep = 1.0 / 9007199254740992.0;  // 2^-53
    return (static_cast<double>(NextU64() >> 11) + 0.5) * kStep;
  }

  // Uniform on [lo, hi).
  double NextUniform(double lo, double hi) { return lo + (hi - lo) * NextOpen01(); }

  // Uniform integer in [0, n) by rejection, free of modulo bias.
  uint64_t NextIndex(uint64_t n) {
    if (n == 0) throw std::invalid_argument("NextIndex: empty range");
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x;
    do {
      x = NextU64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller on open uniforms; the second variate of
  // each pair is cached.
  double NextStandardNormal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = NextOpen01();
    const double u2 = NextOpen01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dpalm

#endif  // DPALM_RNG_H_
