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

#include "crpslam/network.hpp"

#include <cmath>

#include "crpslam/hash.hpp"
#include "crpslam/ops.hpp"

namespace crpslam::net {

namespace {

std::string level_name(const char* prefix, std::size_t level) {
  return prefix + std::to_string(level);
}

// Coarser-level width seen by level l on the way down and back up.
std::size_t next_width(const ForecasterConfig& c, std::size_t level) {
  return c.channels[std::min(level + 1, c.depth() - 1)];
}

template <typename Fn>
auto guarded(const std::string& layer, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError("layer " + layer + ": " + e.what());
  }
}

template <typename T>
struct Context {
  const ForecasterParams<T>& p;
  BasicTensor<T> embedding;

  const BasicTensor<T>& w(const std::string& name) const { return p.at(name); }

  BasicTensor<T> conv(const std::string& name, const BasicTensor<T>& x,
                      std::size_t stride = 1) const {
    return guarded(name, [&] {
      return conv2d(x, w(name + ".w"), w(name + ".b"), Padding::kSame, stride);
    });
  }

  BasicTensor<T> norm(const std::string& site, const BasicTensor<T>& x) const {
    return guarded(site, [&] {
      const std::size_t c = x.dim(0);
      const auto film = linear(embedding, w(site + ".head.w"), w(site + ".head.b"));
      return cond_layer_norm(x, slice(film, 0, c), slice(film, c, c));
    });
  }

  // conv -> conditional norm -> SiLU
  BasicTensor<T> block(const std::string& name, const BasicTensor<T>& x) const {
    const auto h = norm(name, conv(name, x));
    return guarded(name, [&] { return silu(h); });
  }
};

template <typename T>
BasicTensor<T> input_projection(const BasicWindow<T>& window, const ForecasterParams<T>& params) {
  const auto x = window.stacked();
  if (x.dim(0) != params.domain.input_channels() || x.dim(1) != params.domain.height ||
      x.dim(2) != params.domain.width) {
    throw DimensionError("forward: window stacks to " + shape_string(x.shape()) +
                         ", parameters expect " +
                         std::to_string(params.domain.input_channels()) + " channels on " +
                         std::to_string(params.domain.height) + "x" +
                         std::to_string(params.domain.width));
  }
  return guarded("in", [&] {
    return conv2d(x, params.at("in.w"), params.at("in.b"), Padding::kSame, 1);
  });
}

template <typename T>
BasicTensor<T> forward_from_projection(const BasicTensor<T>& projected,
                                       const BasicWindow<T>& window, const NoiseVector& noise,
                                       const ForecasterParams<T>& params) {
  const auto& cfg = params.config;
  const auto& dom = params.domain;
  EvaluationCounter::increment();
  Context<T> ctx{params, encode_noise(noise, params)};

  std::vector<BasicTensor<T>> skips;
  auto x = projected;
  for (std::size_t l = 0; l < cfg.depth(); ++l) {
    const auto name = level_name("down", l);
    x = ctx.block(name + ".b0", x);
    x = ctx.block(name + ".b1", x);
    skips.push_back(x);
    x = ctx.conv(name + ".pool", x, 2);
  }

  {
    auto h = guarded("mid.fc1", [&] {
      return silu(conv2d(x, ctx.w("mid.fc1.w"), ctx.w("mid.fc1.b")));
    });
    h = guarded("mid.fc2", [&] { return conv2d(h, ctx.w("mid.fc2.w"), ctx.w("mid.fc2.b")); });
    h = ctx.norm("mid", h);
    x = add(x, h);
  }

  for (std::size_t l = cfg.depth(); l-- > 0;) {
    const auto name = level_name("up", l);
    x = ctx.conv(name + ".conv", nearest_upsample2x(x));
    x = concat_channels<T>({x, skips[l]});
    x = ctx.block(name + ".b0", x);
    x = ctx.block(name + ".b1", x);
  }

  const auto full = ctx.conv("out", x);
  auto interior = crop2d(full, dom.boundary, dom.boundary, dom.interior_height(),
                         dom.interior_width());
  if (cfg.residual) {
    interior = guarded("residual", [&] { return add(window.current_interior, interior); });
  }
  return interior;
}

}  // namespace

void ForecasterConfig::validate(const DomainSpec& domain) const {
  if (noise_dim < 1) throw ConfigError("forecaster: noise_dim must be >= 1");
  if (embed_dim < 1 || bottleneck_hidden < 1) {
    throw ConfigError("forecaster: embed_dim and bottleneck_hidden must be >= 1");
  }
  if (channels.empty()) throw ConfigError("forecaster: need at least one level");
  for (auto c : channels) {
    if (c == 0) throw ConfigError("forecaster: zero channel width");
  }
  const std::size_t factor = std::size_t{1} << depth();
  if (domain.height % factor != 0 || domain.width % factor != 0) {
    throw ConfigError("forecaster: frame " + std::to_string(domain.height) + "x" +
                      std::to_string(domain.width) + " not divisible by 2^" +
                      std::to_string(depth()));
  }
}

std::map<std::string, Shape> parameter_shapes(const ForecasterConfig& c,
                                              const DomainSpec& domain) {
  c.validate(domain);
  std::map<std::string, Shape> s;
  const auto conv = [&](const std::string& name, std::size_t out, std::size_t in,
                        std::size_t k) {
    s[name + ".w"] = {out, in, k, k};
    s[name + ".b"] = {out};
  };
  const auto head = [&](const std::string& site, std::size_t ch) {
    s[site + ".head.w"] = {2 * ch, c.embed_dim};
    s[site + ".head.b"] = {2 * ch};
  };
  s["noise.w"] = {c.embed_dim, c.noise_dim};
  s["noise.b"] = {c.embed_dim};
  conv("in", c.channels[0], domain.input_channels(), 3);
  for (std::size_t l = 0; l < c.depth(); ++l) {
    const auto ch = c.channels[l];
    for (const char* b : {".b0", ".b1"}) {
      conv(level_name("down", l) + b, ch, ch, 3);
      head(level_name("down", l) + b, ch);
    }
    conv(level_name("down", l) + ".pool", next_width(c, l), ch, 3);
    conv(level_name("up", l) + ".conv", ch, next_width(c, l), 3);
    conv(level_name("up", l) + ".b0", ch, 2 * ch, 3);
    head(level_name("up", l) + ".b0", ch);
    conv(level_name("up", l) + ".b1", ch, ch, 3);
    head(level_name("up", l) + ".b1", ch);
  }
  const auto cb = c.channels.back();
  conv("mid.fc1", c.bottleneck_hidden, cb, 1);
  conv("mid.fc2", cb, c.bottleneck_hidden, 1);
  head("mid", cb);
  conv("out", domain.state_vars, c.channels[0], 3);
  return s;
}

template <typename T>
const BasicTensor<T>& ForecasterParams<T>::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("forecaster: missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
std::size_t ForecasterParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.numel();
  return n;
}

template <typename T>
std::string ForecasterParams<T>::checksum() const {
  Fnv1a h;
  for (const auto& [name, t] : tensors) {
    h.update(name.data(), name.size());
    for (auto d : t.shape()) h.update(static_cast<std::uint64_t>(d));
    h.update(t.values());
  }
  return h.hex();
}

template <typename T>
ForecasterParams<T> ForecasterParams<T>::detached(bool requires_grad) const {
  ForecasterParams out;
  out.config = config;
  out.domain = domain;
  for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.detach(requires_grad));
  return out;
}

template <typename T>
void ForecasterParams<T>::zero_grad() {
  for (auto& [_, t] : tensors) t.zero_grad();
}

template <typename T>
void ForecasterParams<T>::require_finite_values() const {
  for (const auto& [name, t] : tensors) require_finite<T>(t.values(), "parameter " + name);
}

template <typename T>
ForecasterParams<T> init_params(const ForecasterConfig& config, const DomainSpec& domain,
                                std::uint64_t seed) {
  ForecasterParams<T> p;
  p.config = config;
  p.domain = domain;
  Rng rng(derive_seed(seed, StreamPurpose::kInit, 0));
  for (const auto& [name, shape] : parameter_shapes(config, domain)) {
    std::vector<T> v(shape_numel(shape), T{0});
    const bool bias = name.ends_with(".b");
    if (!bias) {
      double stddev = 0.0;
      if (name.ends_with("head.w")) {
        stddev = 0.1 / std::sqrt(static_cast<double>(config.embed_dim));
      } else if (name == "noise.w") {
        stddev = 1.0 / std::sqrt(static_cast<double>(config.noise_dim));
      } else {
        const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        stddev = std::sqrt(2.0 / fan_in);
        if (name == "out.w") stddev *= 0.1;
      }
      for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
    }
    p.tensors.emplace(name, BasicTensor<T>(shape, std::move(v)));
  }
  return p;
}

template <typename T>
ForecasterParams<T> zero_params(const ForecasterConfig& config, const DomainSpec& domain) {
  ForecasterParams<T> p;
  p.config = config;
  p.domain = domain;
  for (const auto& [name, shape] : parameter_shapes(config, domain)) {
    p.tensors.emplace(name, BasicTensor<T>::zeros(shape));
  }
  return p;
}

NoiseVector sample_noise(std::uint64_t seed, std::size_t dim, std::size_t member,
                         std::size_t step) {
  Rng rng(derive_seed(derive_seed(seed, StreamPurpose::kNoise, member), step));
  NoiseVector n;
  n.member = member;
  n.step = step;
  n.z.resize(dim);
  for (auto& v : n.z) v = static_cast<float>(rng.normal());
  return n;
}

NoiseVector sample_noise(std::uint64_t seed, std::size_t dim, std::size_t member,
                         std::size_t step, NoiseMode mode) {
  auto n = sample_noise(seed, dim, member, mode == NoiseMode::kPerStep ? step : 0);
  n.step = step;
  return n;
}

template <typename T>
BasicTensor<T> encode_noise(const NoiseVector& noise, const ForecasterParams<T>& params) {
  if (noise.z.size() != params.config.noise_dim) {
    throw DimensionError("encode_noise: z has " + std::to_string(noise.z.size()) +
                         " entries, expected " + std::to_string(params.config.noise_dim));
  }
  BasicTensor<T> z({noise.z.size()}, std::vector<T>(noise.z.begin(), noise.z.end()));
  return guarded("noise", [&] { return linear(z, params.at("noise.w"), params.at("noise.b")); });
}

template <typename T>
BasicTensor<T> forward(const BasicWindow<T>& window, const NoiseVector& noise,
                       const ForecasterParams<T>& params) {
  return forward_from_projection(input_projection(window, params), window, noise, params);
}

template <typename T>
std::vector<BasicTensor<T>> forward_ensemble(const BasicWindow<T>& window,
                                             const std::vector<NoiseVector>& noise,
                                             const ForecasterParams<T>& params) {
  if (noise.empty()) throw ContractError("forward_ensemble: need at least one noise vector");
  const auto projected = input_projection(window, params);
  std::vector<BasicTensor<T>> out;
  out.reserve(noise.size());
  for (const auto& z : noise) out.push_back(forward_from_projection(projected, window, z, params));
  return out;
}

#define CRPSLAM_INSTANTIATE_NET(T)                                                          \
  template struct ForecasterParams<T>;                                                      \
  template ForecasterParams<T> init_params<T>(const ForecasterConfig&, const DomainSpec&,   \
                                              std::uint64_t);                               \
  template ForecasterParams<T> zero_params<T>(const ForecasterConfig&, const DomainSpec&);  \
  template BasicTensor<T> encode_noise<T>(const NoiseVector&, const ForecasterParams<T>&);  \
  template BasicTensor<T> forward<T>(const BasicWindow<T>&, const NoiseVector&,             \
                                     const ForecasterParams<T>&);                           \
  template std::vector<BasicTensor<T>> forward_ensemble<T>(                                 \
      const BasicWindow<T>&, const std::vector<NoiseVector>&, const ForecasterParams<T>&);

CRPSLAM_INSTANTIATE_NET(float)
CRPSLAM_INSTANTIATE_NET(double)

}  // namespace crpslam::net
