// Copyright 2026 The ppml-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPML_AUDIT_RANDOM_HPP_
#define PPML_AUDIT_RANDOM_HPP_

#include <cmath>
#include <cstring>
#include <type_traits>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace ppml_audit {

// 64-bit FNV-1a. Stable across platforms, used for seed derivation and
// config hashing.
class Fnv1a {
 public:
  Fnv1a& Update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& Update(std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (value >> (8 * i)) & 0xffU;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& Update(double value) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(value));
    std::memcpy(&bits, &value, sizeof(bits));
    return Update(bits);
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Random stream with platform-independent output. mt19937_64 is fully
// specified by the standard; the distributions below are implemented here
// because the std:: ones are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Substream keyed by a label and parameters, so that the order in which
  // independent consumers draw does not entangle their randomness.
  template <typename... Params>
  static Rng Derive(std::uint64_t seed, std::string_view label,
                    const Params&... params) {
    Fnv1a h;
    h.Update(static_cast<std::uint64_t>(seed)).Update(label);
    (h.Update(ToHashable(params)), ...);
    return Rng(h.digest());
  }

  std::uint64_t NextU64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t UniformInt(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = UniformInt(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t ToHashable(std::uint64_t v) { return v; }
  static std::uint64_t ToHashable(std::int64_t v) { return static_cast<std::uint64_t>(v); }
  static std::uint64_t ToHashable(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }
  static std::uint64_t ToHashable(unsigned v) { return v; }
  static std::uint64_t ToHashable(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
  }
  static std::uint64_t ToHashable(std::string_view s) { return Fnv1a().Update(s).digest(); }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ppml_audit

#endif  // PPML_AUDIT_RANDOM_HPP_
