// Copyright 2026 The crpslam Authors
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

#pragma once

#include <array>
#include <cstdint>

namespace crpslam {

/// SplitMix64 finalizer; used for seeding and for deriving stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags occupy the high 32 bits so that XOR with a member index
/// (low bits) never aliases two purposes.
enum class StreamPurpose : std::uint64_t {
  kNoise = 0x4e4f4953ULL << 32,           // "NOIS"
  kTrajectory = 0x5452414aULL << 32,      // "TRAJ"
  kOrography = 0x4f524f47ULL << 32,       // "OROG"
  kSplitTrain = 0x54524e00ULL << 32,      // "TRN"
  kSplitVal = 0x56414c00ULL << 32,        // "VAL"
  kSplitTest = 0x54535400ULL << 32,       // "TST"
  kInit = 0x494e4954ULL << 32,            // "INIT"
  kBatch = 0x42415443ULL << 32,           // "BATC"
  kTrainNoise = 0x544e4f49ULL << 32,      // "TNOI"
  kValidation = 0x56414c49ULL << 32,      // "VALI"
  kClimatology = 0x434c494dULL << 32,     // "CLIM"
  kPhase = 0x50484153ULL << 32,           // "PHAS"
  kTest = 0x54455354ULL << 32,            // "TEST"
};

/// seed = splitmix64(base ^ purpose ^ index). One independent stream per
/// (purpose, index) pair, identical on every platform.
constexpr std::uint64_t derive_seed(std::uint64_t base, StreamPurpose purpose,
                                    std::uint64_t index) noexcept {
  return splitmix64(base ^ static_cast<std::uint64_t>(purpose) ^ index);
}

/// Chains a further index into an already-derived seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index));
}

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator, but the
/// library draws uniforms and normals through its own member functions so
/// that values do not depend on the standard library's distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  std::array<std::uint64_t, 4> state() const noexcept { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace crpslam
