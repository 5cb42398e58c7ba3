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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crpslam/domain.hpp"
#include "crpslam/rng.hpp"

namespace crpslam::toy {

/// Stochastic advection-diffusion on a periodic parent grid, cropped to a
/// centred limited-area frame.
///
/// Per substep, for each variable q_k:
///   dq_k = [-u . grad q_k + nu lap q_k - damping q_k
///           + coupling (mean_{j != k} q_j - q_k)
///           + diurnal_amplitude sin(phase + k pi/2) orography] dt
///          + noise_amplitude sqrt(dt) xi_k
/// with upwind advection, a 5-point Laplacian and xi_k a Gaussian-smoothed
/// white-noise field rescaled to unit point variance. The velocity field
/// u = (U_x + A sin(2 pi y / P), U_y + A sin(2 pi x / P)) is divergence free.
struct ToyDynamicsConfig {
  std::size_t parent_size = 48;
  std::size_t lam_size = 24;
  std::size_t boundary = 4;
  std::size_t variables = 2;
  double velocity_x = 0.25;
  double velocity_y = 0.1;
  double velocity_amplitude = 0.15;
  double diffusion = 0.01;
  double damping = 0.002;
  double coupling = 0.005;
  double diurnal_amplitude = 0.05;
  double noise_amplitude = 0.1;
  double noise_correlation = 8.0;  // cells; Gaussian kernel sigma
  double dt = 1.0;                 // per substep
  double dx = 1.0;
  std::size_t substeps = 6;        // per output step
  std::size_t steps = 24;          // output steps per trajectory (T)
  std::size_t burn_in = 150;       // output steps discarded before X^0
  double step_hours = 3.0;

  /// Upper bound on |u| dt / dx over the grid.
  double advective_courant() const;
  /// nu dt / dx^2
  double diffusive_number() const;

  /// Throws ConfigError on a CFL violation or inconsistent sizes.
  void validate() const;

  DomainSpec domain() const;
};

/// Full parent-grid state, [variables][P*P] flattened row-major.
using ParentState = std::vector<double>;

/// Smooth random field on the parent grid, standardized to zero mean and
/// unit variance.
std::vector<double> make_orography(const ToyDynamicsConfig& config, std::uint64_t seed);

class ToyAtmosphere {
 public:
  ToyAtmosphere(ToyDynamicsConfig config, std::vector<double> orography);

  const ToyDynamicsConfig& config() const { return config_; }
  const std::vector<double>& orography() const { return orography_; }

  ParentState zero_state() const;

  /// Advances one substep in place. `hours` is the model time at the start of
  /// the substep, used for the diurnal phase.
  void substep(ParentState& state, double hours, Rng& rng) const;

  /// Advances one output step (`substeps` substeps).
  void output_step(ParentState& state, double hours, Rng& rng) const;

  /// LAM crop of a parent state: [variables, L, L].
  FieldTensor crop(const ParentState& state) const;

  /// Diurnal forcing at `hours`: [2, L, L] with sin/cos of the phase.
  FieldTensor forcing(double hours) const;

  /// Orography restricted to the LAM frame: [1, L, L].
  FieldTensor lam_statics() const;

  std::size_t lam_offset() const { return (config_.parent_size - config_.lam_size) / 2; }

 private:
  void smoothed_noise(std::vector<double>& field, Rng& rng) const;

  ToyDynamicsConfig config_;
  std::vector<double> orography_;
  std::vector<double> u_, v_;
  std::vector<double> noise_basis_;  // n x modes, row-major
  std::size_t noise_modes_ = 0;
};

/// Simulated episode with the parent states of X^0..X^T retained.
struct SimulatedEpisode {
  Trajectory trajectory;
  std::vector<ParentState> parent_states;
};

/// Runs `steps` output steps from `initial`, recording the initial state and
/// every output step. Deterministic given `noise_seed`.
SimulatedEpisode simulate_from(const ToyAtmosphere& atmosphere, const ParentState& initial,
                               double start_hour, std::uint64_t noise_seed,
                               std::size_t steps);

/// Spins up from rest for `burn_in` steps, then records X^0..X^T. The start
/// hour of X^0 is a multiple of step_hours drawn from the seed.
SimulatedEpisode simulate_trajectory(const ToyAtmosphere& atmosphere, std::uint64_t seed);
Trajectory simulate_trajectory(const ToyDynamicsConfig& config, std::uint64_t seed);

/// Raw-unit dataset with train/val/test splits and training-split stats.
struct EpisodeDataset {
  DomainSpec domain;
  ToyDynamicsConfig dynamics;
  std::uint64_t seed = 0;
  FieldTensor statics;  // [d_s, H, W]
  NormStats stats;
  std::vector<Trajectory> train, val, test;
  bool is_normalized = false;

  /// Stable identifier derived from the seed and the stored values.
  std::string id() const;
};

EpisodeDataset make_dataset(const ToyDynamicsConfig& config, std::size_t n_train,
                            std::size_t n_val, std::size_t n_test, std::uint64_t seed);

/// Copy with every trajectory normalized by the dataset stats.
EpisodeDataset normalized(const EpisodeDataset& dataset);

/// Hour of day of state t of a trajectory.
double hour_of_day(const Trajectory& trajectory, std::size_t t, double step_hours);

/// N interior states drawn with replacement from training states whose hour
/// of day matches `hour`. The skill floor for any trained model.
std::vector<FieldTensor> climatology_ensemble(const EpisodeDataset& dataset, double hour,
                                              std::size_t members, Rng& rng);

}  // namespace crpslam::toy
