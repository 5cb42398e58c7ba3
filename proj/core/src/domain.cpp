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

#include "crpslam/domain.hpp"

#include <cmath>
#include <string>

#include "crpslam/ops.hpp"

namespace crpslam {

void DomainSpec::validate() const {
  if (boundary < 1) throw ConfigError("domain: boundary width must be >= 1");
  if (height < 2 * boundary + 8 || width < 2 * boundary + 8) {
    throw ConfigError("domain: interior must be at least 8x8 (frame " +
                      std::to_string(height) + "x" + std::to_string(width) +
                      ", boundary " + std::to_string(boundary) + ")");
  }
  if (state_vars < 1) throw ConfigError("domain: need at least one state variable");
}

namespace {

template <typename T>
BasicTensor<T> mask_tensor(const DomainSpec& domain, bool interior) {
  std::vector<T> values(domain.height * domain.width);
  for (std::size_t i = 0; i < domain.height; ++i) {
    for (std::size_t j = 0; j < domain.width; ++j) {
      values[i * domain.width + j] = (domain.is_interior(i, j) == interior) ? T{1} : T{0};
    }
  }
  return BasicTensor<T>({1, domain.height, domain.width}, std::move(values));
}

template <typename T>
BasicTensor<T> broadcast_mask(const BasicTensor<T>& mask, std::size_t channels) {
  std::vector<BasicTensor<T>> parts(channels, mask);
  return concat_channels(parts);
}

template <typename T>
BasicTensor<T> as_type(const FieldTensor& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

}  // namespace

template <typename T>
BasicTensor<T> interior_mask(const DomainSpec& domain) {
  return mask_tensor<T>(domain, true);
}

template <typename T>
BasicTensor<T> boundary_mask(const DomainSpec& domain) {
  return mask_tensor<T>(domain, false);
}

template <typename T>
BasicTensor<T> BasicWindow<T>::stacked() const {
  return concat_channels<T>({interior_states, boundary_states, forcings, statics});
}

template <typename T>
BasicWindow<T> assemble_window(const DomainSpec& domain,
                               const BasicTensor<T>& previous,
                               const BasicTensor<T>& current,
                               const BasicTensor<T>& next_truth,
                               const BasicTensor<T>& forcing_prev,
                               const BasicTensor<T>& forcing_cur,
                               const BasicTensor<T>& forcing_next,
                               const BasicTensor<T>& statics, std::size_t t) {
  const Shape state_shape{domain.state_vars, domain.height, domain.width};
  for (const auto* s : {&previous, &current, &next_truth}) {
    if (s->shape() != state_shape) {
      throw DimensionError("assemble_window: state shape " + shape_string(s->shape()) +
                           ", expected " + shape_string(state_shape));
    }
  }
  const auto in_mask = interior_mask<T>(domain);
  const auto bd_mask = boundary_mask<T>(domain);
  const auto in_d = broadcast_mask(in_mask, domain.state_vars);
  const auto bd_d = broadcast_mask(bd_mask, domain.state_vars);

  BasicWindow<T> w;
  w.t = t;
  w.interior_states = concat_channels<T>({multiply(previous, in_d), multiply(current, in_d)});
  w.boundary_states = concat_channels<T>(
      {multiply(previous, bd_d), multiply(current, bd_d), multiply(next_truth, bd_d)});
  w.forcings = concat_channels<T>({forcing_prev, forcing_cur, forcing_next});
  w.statics = concat_channels<T>({statics, in_mask});
  w.current_interior = crop_interior(domain, current);
  w.target = next_truth;
  return w;
}

template <typename T>
BasicWindow<T> build_window(const DomainSpec& domain, const Trajectory& trajectory,
                            std::size_t t) {
  const std::size_t steps = trajectory.steps();
  if (t < 1 || t + 1 > steps) {
    throw ContractError("build_window: t=" + std::to_string(t) +
                        " outside [1, " + std::to_string(steps == 0 ? 0 : steps - 1) +
                        "]");
  }
  return assemble_window<T>(
      domain, as_type<T>(trajectory.states[t - 1]), as_type<T>(trajectory.states[t]),
      as_type<T>(trajectory.states[t + 1]), as_type<T>(trajectory.forcings[t - 1]),
      as_type<T>(trajectory.forcings[t]), as_type<T>(trajectory.forcings[t + 1]),
      as_type<T>(trajectory.statics), t);
}

template <typename T>
BasicTensor<T> crop_interior(const DomainSpec& domain, const BasicTensor<T>& full) {
  return crop2d(full, domain.boundary, domain.boundary, domain.interior_height(),
                domain.interior_width());
}

template <typename T>
BasicTensor<T> reassemble_full_state(const DomainSpec& domain,
                                     const BasicTensor<T>& predicted_interior,
                                     const BasicTensor<T>& true_full) {
  const Shape interior_shape{domain.state_vars, domain.interior_height(),
                             domain.interior_width()};
  if (predicted_interior.shape() != interior_shape ||
      true_full.shape() != Shape{domain.state_vars, domain.height, domain.width}) {
    throw DimensionError("reassemble_full_state: got interior " +
                         shape_string(predicted_interior.shape()) + " and frame " +
                         shape_string(true_full.shape()));
  }
  const auto placed = pad2d(predicted_interior, domain.boundary, domain.boundary,
                            domain.height, domain.width);
  const auto bd = broadcast_mask(boundary_mask<T>(domain), domain.state_vars);
  return add(placed, multiply(true_full, bd));
}

NormStats compute_stats(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty() || trajectories.front().states.empty()) {
    throw DataError("compute_stats: no training states");
  }
  const std::size_t vars = trajectories.front().states.front().dim(0);
  std::vector<double> sum(vars, 0.0), sum_sq(vars, 0.0);
  std::size_t count = 0;
  for (const auto& traj : trajectories) {
    for (const auto& state : traj.states) {
      const std::size_t plane = state.numel() / vars;
      const auto v = state.values();
      for (std::size_t d = 0; d < vars; ++d) {
        for (std::size_t p = 0; p < plane; ++p) sum[d] += v[d * plane + p];
      }
      count += plane;
    }
  }
  NormStats stats;
  for (std::size_t d = 0; d < vars; ++d) {
    const double m = sum[d] / static_cast<double>(count);
    stats.mean.push_back(static_cast<float>(m));
  }
  for (const auto& traj : trajectories) {
    for (const auto& state : traj.states) {
      const std::size_t plane = state.numel() / vars;
      const auto v = state.values();
      for (std::size_t d = 0; d < vars; ++d) {
        const double m = stats.mean[d];
        for (std::size_t p = 0; p < plane; ++p) {
          const double e = v[d * plane + p] - m;
          sum_sq[d] += e * e;
        }
      }
    }
  }
  for (std::size_t d = 0; d < vars; ++d) {
    const double sd = std::sqrt(sum_sq[d] / static_cast<double>(count));
    if (!(sd > 0.0)) {
      throw DataError("compute_stats: variable " + std::to_string(d) +
                      " is constant over the training split");
    }
    stats.stddev.push_back(static_cast<float>(sd));
  }
  return stats;
}

namespace {

FieldTensor affine_per_variable(const FieldTensor& state, const NormStats& stats,
                                bool forward) {
  const std::size_t vars = state.dim(0);
  if (stats.mean.size() != vars || stats.stddev.size() != vars) {
    throw DimensionError("normalize: stats cover " + std::to_string(stats.mean.size()) +
                         " variables, state has " + std::to_string(vars));
  }
  const std::size_t plane = state.numel() / vars;
  std::vector<float> out(state.values().begin(), state.values().end());
  for (std::size_t d = 0; d < vars; ++d) {
    const float m = stats.mean[d], s = stats.stddev[d];
    for (std::size_t p = 0; p < plane; ++p) {
      float& v = out[d * plane + p];
      v = forward ? (v - m) / s : v * s + m;
    }
  }
  return FieldTensor(state.shape(), std::move(out));
}

}  // namespace

FieldTensor normalize(const FieldTensor& state, const NormStats& stats) {
  return affine_per_variable(state, stats, true);
}

FieldTensor denormalize(const FieldTensor& state, const NormStats& stats) {
  return affine_per_variable(state, stats, false);
}

Trajectory normalize(const Trajectory& trajectory, const NormStats& stats) {
  Trajectory out = trajectory;
  for (auto& s : out.states) s = normalize(s, stats);
  return out;
}

#define CRPSLAM_INSTANTIATE_DOMAIN(T)                                               \
  template BasicTensor<T> interior_mask<T>(const DomainSpec&);                      \
  template BasicTensor<T> boundary_mask<T>(const DomainSpec&);                      \
  template struct BasicWindow<T>;                                                   \
  template BasicWindow<T> assemble_window<T>(                                       \
      const DomainSpec&, const BasicTensor<T>&, const BasicTensor<T>&,              \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,          \
      const BasicTensor<T>&, const BasicTensor<T>&, std::size_t);                   \
  template BasicWindow<T> build_window<T>(const DomainSpec&, const Trajectory&,     \
                                          std::size_t);                             \
  template BasicTensor<T> crop_interior<T>(const DomainSpec&, const BasicTensor<T>&); \
  template BasicTensor<T> reassemble_full_state<T>(const DomainSpec&,               \
                                                   const BasicTensor<T>&,           \
                                                   const BasicTensor<T>&);

CRPSLAM_INSTANTIATE_DOMAIN(float)
CRPSLAM_INSTANTIATE_DOMAIN(double)

#undef CRPSLAM_INSTANTIATE_DOMAIN

}  // namespace crpslam
