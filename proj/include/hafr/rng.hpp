/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace hafr {

namespace detail {

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::array<std::uint32_t, 4> philox4x32_10(
    std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

}  // namespace detail

// Counter-based generator (Philox4x32-10). The output at position n is a
// pure function of (key, n), so a stream can be handed to any worker and
// reproduces the same draws regardless of scheduling.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() = default;
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

  result_type operator()() {
    if (buffered_ == 0) {
      refill();
    }
    return block_[--buffered_];
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1], safe as a log() argument.
  double uniform_open_zero() {
    return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Unbiased integer in [0, bound) (Lemire's multiply-shift rejection).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) {
      return 0;
    }
    unsigned __int128 m =
        static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; one variate per call for simplicity of
  // reproducing sequences.
  double normal() {
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates; independent of the standard library's shuffle algorithm.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t n = items.size(); n > 1; --n) {
      const auto j = static_cast<std::size_t>(below(n));
      using std::swap;
      swap(items[n - 1], items[j]);
    }
  }

 private:
  void refill() {
    const auto out = detail::philox4x32_10(
        {static_cast<std::uint32_t>(counter_),
         static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
        {static_cast<std::uint32_t>(key_),
         static_cast<std::uint32_t>(key_ >> 32)});
    block_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    block_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    buffered_ = 2;
    ++counter_;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int buffered_ = 0;
};

// Streams with distinct labels are independent; (seed, label) pins the
// sequence.
inline RngStream derive_stream(std::uint64_t master_seed,
                               std::string_view label) {
  return RngStream(detail::splitmix64(detail::splitmix64(master_seed) ^
                                      detail::fnv1a64(label)));
}

inline RngStream derive_stream(std::uint64_t master_seed,
                               std::string_view label, std::uint64_t index) {
  const std::uint64_t base = detail::splitmix64(
      detail::splitmix64(master_seed) ^ detail::fnv1a64(label));
  return RngStream(detail::splitmix64(
      base ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL)));
}

}  // namespace hafr
