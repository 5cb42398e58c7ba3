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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crpslam/domain.hpp"
#include "crpslam/rng.hpp"
#include "crpslam/tensor.hpp"

namespace crpslam::net {

/// U-net forecaster shape. `channels[l]` is the width at level l; the
/// number of levels is the number of stride-2 downsamplings.
struct ForecasterConfig {
  std::size_t noise_dim = 32;         // d_z
  std::size_t embed_dim = 128;        // shared conditioning width
  std::vector<std::size_t> channels{32, 64};
  std::size_t bottleneck_hidden = 128;
  bool residual = true;

  std::size_t depth() const { return channels.size(); }
  /// Throws ConfigError when the frame is not divisible by 2^depth or a
  /// width is zero.
  void validate(const DomainSpec& domain) const;

  bool operator==(const ForecasterConfig&) const = default;
};

/// Named parameters plus the shapes they were built for.
template <typename T>
struct ForecasterParams {
  ForecasterConfig config;
  DomainSpec domain;
  std::map<std::string, BasicTensor<T>> tensors;

  const BasicTensor<T>& at(const std::string& name) const;
  std::size_t parameter_count() const;

  /// FNV-1a of names, shapes and raw value bytes.
  std::string checksum() const;

  /// Fresh leaves with copied values.
  ForecasterParams detached(bool requires_grad) const;

  template <typename U>
  ForecasterParams<U> cast(bool requires_grad = false) const {
    ForecasterParams<U> out;
    out.config = config;
    out.domain = domain;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>(requires_grad));
    return out;
  }

  void zero_grad();
  /// Throws NumericError naming the first non-finite tensor.
  void require_finite_values() const;
};

/// Expected parameter names and shapes for a configuration.
std::map<std::string, Shape> parameter_shapes(const ForecasterConfig& config,
                                              const DomainSpec& domain);

/// He-normal convolutions, a small output layer, zero biases.
template <typename T = float>
ForecasterParams<T> init_params(const ForecasterConfig& config, const DomainSpec& domain,
                                std::uint64_t seed);

template <typename T = float>
ForecasterParams<T> zero_params(const ForecasterConfig& config, const DomainSpec& domain);

/// Whether z is redrawn at every autoregressive step or held per member.
enum class NoiseMode { kPerStep, kPerMember };

struct NoiseVector {
  std::vector<float> z;
  std::size_t member = 0;
  std::size_t step = 0;
};

/// d_z standard normals from the stream derived from (seed, member, step).
NoiseVector sample_noise(std::uint64_t seed, std::size_t dim, std::size_t member,
                         std::size_t step);

/// As sample_noise, but per-member mode reuses the step-0 stream while
/// still recording `step`.
NoiseVector sample_noise(std::uint64_t seed, std::size_t dim, std::size_t member,
                         std::size_t step, NoiseMode mode);

/// Shared conditioning vector [embed_dim] = W z + b.
template <typename T>
BasicTensor<T> encode_noise(const NoiseVector& noise, const ForecasterParams<T>& params);

/// Counts member forward passes; process wide.
class EvaluationCounter {
 public:
  static std::uint64_t count() noexcept { return value().load(); }
  static void reset() noexcept { value().store(0); }
  static void increment() noexcept { value().fetch_add(1); }

 private:
  static std::atomic<std::uint64_t>& value() noexcept {
    static std::atomic<std::uint64_t> v{0};
    return v;
  }
};

/// One sample of X_I^{t+1}, [d_x, H_I, W_I].
template <typename T>
BasicTensor<T> forward(const BasicWindow<T>& window, const NoiseVector& noise,
                       const ForecasterParams<T>& params);

/// One prediction per noise vector. The input projection is shared across
/// members; results equal independent forward() calls bit for bit.
template <typename T>
std::vector<BasicTensor<T>> forward_ensemble(const BasicWindow<T>& window,
                                             const std::vector<NoiseVector>& noise,
                                             const ForecasterParams<T>& params);

}  // namespace crpslam::net
