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

#include "crpslam/toy_atmos.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Core>

#include "crpslam/hash.hpp"

namespace crpslam::toy {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

// Separable periodic convolution of a size x size field.
void periodic_smooth(std::vector<double>& field, std::size_t size,
                     const std::vector<double>& kernel) {
  const std::size_t r = kernel.size() / 2;
  const std::size_t n = size;
  std::vector<double> line(n + 2 * r);
  const auto convolve_line = [&](double* out, std::size_t stride) {
    for (std::size_t j = 0; j < n + 2 * r; ++j) line[j] = out[((j + n - r % n) % n) * stride];
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * line[j + k];
      out[j * stride] = acc;
    }
  };
  for (std::size_t i = 0; i < n; ++i) convolve_line(field.data() + i * n, 1);
  for (std::size_t j = 0; j < n; ++j) convolve_line(field.data() + j, n);
}

}  // namespace

double ToyDynamicsConfig::advective_courant() const {
  const double umax = std::abs(velocity_x) + std::abs(velocity_amplitude);
  const double vmax = std::abs(velocity_y) + std::abs(velocity_amplitude);
  return std::sqrt(umax * umax + vmax * vmax) * dt / dx;
}

double ToyDynamicsConfig::diffusive_number() const { return diffusion * dt / (dx * dx); }

void ToyDynamicsConfig::validate() const {
  if (advective_courant() > 0.5) {
    throw ConfigError("toy dynamics: advective CFL number " +
                      std::to_string(advective_courant()) + " exceeds 0.5");
  }
  if (diffusive_number() > 0.25) {
    throw ConfigError("toy dynamics: diffusive number " +
                      std::to_string(diffusive_number()) + " exceeds 0.25");
  }
  if (diffusion < 0.0 || damping < 0.0 || noise_amplitude < 0.0) {
    throw ConfigError("toy dynamics: diffusion, damping and noise must be >= 0");
  }
  if (parent_size < 2 * lam_size) {
    throw ConfigError("toy dynamics: parent grid must be at least twice the LAM size");
  }
  if (variables < 1 || substeps < 1 || steps < 2) {
    throw ConfigError("toy dynamics: need variables >= 1, substeps >= 1, steps >= 2");
  }
  if (noise_correlation <= 0.0) throw ConfigError("toy dynamics: noise_correlation must be > 0");
  domain().validate();
}

DomainSpec ToyDynamicsConfig::domain() const {
  DomainSpec d;
  d.height = lam_size;
  d.width = lam_size;
  d.boundary = boundary;
  d.state_vars = variables;
  d.forcing_vars = 2;
  d.static_vars = 1;
  d.step_hours = step_hours;
  return d;
}

std::vector<double> make_orography(const ToyDynamicsConfig& config, std::uint64_t seed) {
  const std::size_t n = config.parent_size;
  Rng rng(seed);
  std::vector<double> field(n * n);
  for (auto& v : field) v = rng.normal();
  periodic_smooth(field, n, gaussian_kernel(4.0));
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(field.size());
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(field.size()));
  for (auto& v : field) v = (v - mean) / sd;
  return field;
}

ToyAtmosphere::ToyAtmosphere(ToyDynamicsConfig config, std::vector<double> orography)
    : config_(std::move(config)), orography_(std::move(orography)) {
  config_.validate();
  const std::size_t n = config_.parent_size;
  if (orography_.size() != n * n) throw DimensionError("ToyAtmosphere: orography size");
  u_.resize(n * n);
  v_.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double y = static_cast<double>(i), x = static_cast<double>(j);
      u_[i * n + j] = config_.velocity_x +
                      config_.velocity_amplitude * std::sin(kTwoPi * y / static_cast<double>(n));
      v_[i * n + j] = config_.velocity_y +
                      config_.velocity_amplitude * std::sin(kTwoPi * x / static_cast<double>(n));
    }
  }
  // The noise is W filtered by the periodic Gaussian A along both axes,
  // A W A^T. With A = U diag(h) U^T in a real Fourier basis, U^T W U is again
  // white, so only modes with non-negligible response need to be drawn.
  const double sigma = config_.noise_correlation;
  const auto response = [&](std::size_t m) {
    const double k = kTwoPi * static_cast<double>(m) / static_cast<double>(n);
    return std::exp(-0.5 * k * k * sigma * sigma);
  };
  std::vector<std::pair<std::size_t, double>> modes;  // (frequency, response)
  const double h0 = response(0);
  double power = 0.0;  // (1/n) sum over all kept frequencies of h^2
  for (std::size_t m = 0; m <= n / 2; ++m) {
    const double h = response(m);
    if (std::abs(h) < 1e-10 * std::abs(h0)) continue;
    modes.emplace_back(m, h);
    const bool paired = m != 0 && 2 * m != n;
    power += (paired ? 2.0 : 1.0) * h * h / static_cast<double>(n);
  }
  // Point variance of A W A^T is power^2; scale each side by 1/sqrt(power).
  const double side = 1.0 / std::sqrt(power);
  std::size_t cols = 0;
  for (const auto& [m, h] : modes) cols += (m != 0 && 2 * m != n) ? 2 : 1;
  noise_modes_ = cols;
  noise_basis_.assign(n * cols, 0.0);
  std::size_t c = 0;
  const double dn = static_cast<double>(n);
  for (const auto& [m, h] : modes) {
    const double w = h * side;
    for (std::size_t i = 0; i < n; ++i) {
      const double angle = kTwoPi * static_cast<double>(m * i) / dn;
      if (m == 0) {
        noise_basis_[i * cols + c] = w / std::sqrt(dn);
      } else if (2 * m == n) {
        noise_basis_[i * cols + c] = w * ((i % 2 == 0) ? 1.0 : -1.0) / std::sqrt(dn);
      } else {
        noise_basis_[i * cols + c] = w * std::sqrt(2.0 / dn) * std::cos(angle);
        noise_basis_[i * cols + c + 1] = w * std::sqrt(2.0 / dn) * std::sin(angle);
      }
    }
    c += (m != 0 && 2 * m != n) ? 2 : 1;
  }
}

ParentState ToyAtmosphere::zero_state() const {
  return ParentState(config_.variables * config_.parent_size * config_.parent_size, 0.0);
}

void ToyAtmosphere::smoothed_noise(std::vector<double>& field, Rng& rng) const {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(config_.parent_size);
  const auto m = static_cast<Eigen::Index>(noise_modes_);
  Matrix g(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) g(i, j) = rng.normal();
  }
  const Eigen::Map<const Matrix> basis(noise_basis_.data(), n, m);
  Eigen::Map<Matrix> out(field.data(), n, n);
  out.noalias() = basis * (g * basis.transpose());
}

void ToyAtmosphere::substep(ParentState& state, double hours, Rng& rng) const {
  const std::size_t n = config_.parent_size;
  const std::size_t plane = n * n;
  const std::size_t vars = config_.variables;
  const double dt = config_.dt, dx = config_.dx;
  const double phase = kTwoPi * hours / 24.0;

  std::vector<double> var_mean(plane, 0.0);
  if (vars > 1) {
    for (std::size_t k = 0; k < vars; ++k) {
      for (std::size_t p = 0; p < plane; ++p) var_mean[p] += state[k * plane + p];
    }
  }
  ParentState next(state.size());
  std::vector<double> noise(plane, 0.0);
  for (std::size_t k = 0; k < vars; ++k) {
    const double* q = state.data() + k * plane;
    double* out = next.data() + k * plane;
    const double source_amp =
        config_.diurnal_amplitude *
        std::sin(phase + static_cast<double>(k) * std::numbers::pi / 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t up = (i + n - 1) % n, down = (i + 1) % n;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t left = (j + n - 1) % n, right = (j + 1) % n;
        const std::size_t c = i * n + j;
        const double qc = q[c];
        const double u = u_[c], v = v_[c];
        const double dqdx = u > 0.0 ? (qc - q[i * n + left]) / dx : (q[i * n + right] - qc) / dx;
        const double dqdy = v > 0.0 ? (qc - q[up * n + j]) / dx : (q[down * n + j] - qc) / dx;
        const double lap =
            (q[up * n + j] + q[down * n + j] + q[i * n + left] + q[i * n + right] - 4.0 * qc) /
            (dx * dx);
        double tendency = -(u * dqdx + v * dqdy) + config_.diffusion * lap -
                          config_.damping * qc + source_amp * orography_[c];
        if (vars > 1) {
          const double others = (var_mean[c] - qc) / static_cast<double>(vars - 1);
          tendency += config_.coupling * (others - qc);
        }
        out[c] = qc + dt * tendency;
      }
    }
    if (config_.noise_amplitude > 0.0) {
      smoothed_noise(noise, rng);
      const double amp = config_.noise_amplitude * std::sqrt(dt);
      for (std::size_t p = 0; p < plane; ++p) out[p] += amp * noise[p];
    }
  }
  state.swap(next);
}

void ToyAtmosphere::output_step(ParentState& state, double hours, Rng& rng) const {
  const double sub_hours = config_.step_hours / static_cast<double>(config_.substeps);
  for (std::size_t s = 0; s < config_.substeps; ++s) {
    substep(state, hours + static_cast<double>(s) * sub_hours, rng);
  }
}

FieldTensor ToyAtmosphere::crop(const ParentState& state) const {
  const std::size_t n = config_.parent_size, l = config_.lam_size, off = lam_offset();
  std::vector<float> out(config_.variables * l * l);
  for (std::size_t k = 0; k < config_.variables; ++k) {
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < l; ++j) {
        out[(k * l + i) * l + j] =
            static_cast<float>(state[k * n * n + (i + off) * n + (j + off)]);
      }
    }
  }
  return FieldTensor({config_.variables, l, l}, std::move(out));
}

FieldTensor ToyAtmosphere::forcing(double hours) const {
  const std::size_t l = config_.lam_size;
  const double phase = kTwoPi * hours / 24.0;
  std::vector<float> out(2 * l * l);
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(l * l),
            static_cast<float>(std::sin(phase)));
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(l * l), out.end(),
            static_cast<float>(std::cos(phase)));
  return FieldTensor({2, l, l}, std::move(out));
}

FieldTensor ToyAtmosphere::lam_statics() const {
  const std::size_t n = config_.parent_size, l = config_.lam_size, off = lam_offset();
  std::vector<float> out(l * l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      out[i * l + j] = static_cast<float>(orography_[(i + off) * n + (j + off)]);
    }
  }
  return FieldTensor({1, l, l}, std::move(out));
}

SimulatedEpisode simulate_from(const ToyAtmosphere& atmosphere, const ParentState& initial,
                               double start_hour, std::uint64_t noise_seed,
                               std::size_t steps) {
  const auto& cfg = atmosphere.config();
  Rng rng(noise_seed);
  SimulatedEpisode ep;
  ep.trajectory.start_hour = start_hour;
  ep.trajectory.seed = noise_seed;
  ep.trajectory.statics = atmosphere.lam_statics();
  ParentState state = initial;
  for (std::size_t t = 0; t <= steps; ++t) {
    const double hours = start_hour + static_cast<double>(t) * cfg.step_hours;
    if (t > 0) atmosphere.output_step(state, hours - cfg.step_hours, rng);
    ep.parent_states.push_back(state);
    ep.trajectory.states.push_back(atmosphere.crop(state));
    ep.trajectory.forcings.push_back(atmosphere.forcing(hours));
  }
  return ep;
}

SimulatedEpisode simulate_trajectory(const ToyAtmosphere& atmosphere, std::uint64_t seed) {
  const auto& cfg = atmosphere.config();
  Rng rng(derive_seed(seed, StreamPurpose::kPhase, 0));
  const auto slots = static_cast<std::uint64_t>(std::max(1.0, std::round(24.0 / cfg.step_hours)));
  const double start_hour = static_cast<double>(rng.below(slots)) * cfg.step_hours;

  ParentState state = atmosphere.zero_state();
  Rng spin(derive_seed(seed, StreamPurpose::kTrajectory, 0));
  const double spin_start = start_hour - static_cast<double>(cfg.burn_in) * cfg.step_hours;
  for (std::size_t t = 0; t < cfg.burn_in; ++t) {
    atmosphere.output_step(state, spin_start + static_cast<double>(t) * cfg.step_hours, spin);
  }
  return simulate_from(atmosphere, state, start_hour,
                       derive_seed(seed, StreamPurpose::kTrajectory, 1), cfg.steps);
}

Trajectory simulate_trajectory(const ToyDynamicsConfig& config, std::uint64_t seed) {
  ToyAtmosphere atmosphere(config, make_orography(config, derive_seed(seed, StreamPurpose::kOrography, 0)));
  return simulate_trajectory(atmosphere, seed).trajectory;
}

std::string EpisodeDataset::id() const {
  Fnv1a h;
  h.update(seed);
  for (const auto* split : {&train, &val, &test}) {
    h.update(static_cast<std::uint64_t>(split->size()));
    for (const auto& traj : *split) {
      for (const auto& s : traj.states) h.update(s.values());
    }
  }
  return h.hex();
}

EpisodeDataset make_dataset(const ToyDynamicsConfig& config, std::size_t n_train,
                            std::size_t n_val, std::size_t n_test, std::uint64_t seed) {
  config.validate();
  if (n_train == 0) throw ConfigError("make_dataset: need at least one training trajectory");
  ToyAtmosphere atmosphere(config,
                           make_orography(config, derive_seed(seed, StreamPurpose::kOrography, 0)));
  EpisodeDataset ds;
  ds.domain = config.domain();
  ds.dynamics = config;
  ds.seed = seed;
  ds.statics = atmosphere.lam_statics();
  const auto fill = [&](std::vector<Trajectory>& split, std::size_t count, StreamPurpose purpose) {
    split.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      split.push_back(simulate_trajectory(atmosphere, derive_seed(seed, purpose, i)).trajectory);
    }
  };
  fill(ds.train, n_train, StreamPurpose::kSplitTrain);
  fill(ds.val, n_val, StreamPurpose::kSplitVal);
  fill(ds.test, n_test, StreamPurpose::kSplitTest);
  ds.stats = compute_stats(ds.train);
  return ds;
}

EpisodeDataset normalized(const EpisodeDataset& dataset) {
  if (dataset.is_normalized) throw ContractError("normalized(): dataset is already normalized");
  EpisodeDataset out = dataset;
  out.is_normalized = true;
  for (auto* split : {&out.train, &out.val, &out.test}) {
    for (auto& traj : *split) traj = normalize(traj, dataset.stats);
  }
  return out;
}

double hour_of_day(const Trajectory& trajectory, std::size_t t, double step_hours) {
  const double h = std::fmod(trajectory.start_hour + static_cast<double>(t) * step_hours, 24.0);
  return h < 0.0 ? h + 24.0 : h;
}

std::vector<FieldTensor> climatology_ensemble(const EpisodeDataset& dataset, double hour,
                                              std::size_t members, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  const double step = dataset.domain.step_hours;
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    for (std::size_t t = 0; t < dataset.train[i].states.size(); ++t) {
      if (std::abs(hour_of_day(dataset.train[i], t, step) - std::fmod(hour, 24.0)) < 1e-9) {
        pool.emplace_back(i, t);
      }
    }
  }
  if (pool.empty()) {
    throw DataError("climatology_ensemble: no training state at hour " + std::to_string(hour));
  }
  std::vector<FieldTensor> out;
  out.reserve(members);
  for (std::size_t n = 0; n < members; ++n) {
    const auto [i, t] = pool[rng.below(pool.size())];
    out.push_back(crop_interior(dataset.domain, dataset.train[i].states[t]));
  }
  return out;
}

}  // namespace crpslam::toy
