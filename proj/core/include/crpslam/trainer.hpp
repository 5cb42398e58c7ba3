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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crpslam/network.hpp"
#include "crpslam/toy_atmos.hpp"

namespace crpslam::train {

enum class Estimator { kFair, kBiased };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& s);

struct TrainStage {
  std::size_t epochs = 1;
  double learning_rate = 1e-3;
  std::size_t ar_steps = 1;
  bool operator==(const TrainStage&) const = default;
};

struct TrainConfig {
  std::vector<TrainStage> stages = desk_schedule();
  std::size_t members = 4;            // N_train
  std::size_t batch_size = 8;
  std::size_t steps_per_epoch = 10;   // optimizer updates per epoch
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::kFair;
  std::size_t warmup_epochs = 0;      // biased-estimator epochs, 0 disables
  std::size_t warmup_members = 16;
  double collapse_spread_floor = 0.01;
  std::size_t collapse_patience = 5;
  double clip_norm = 1.0;             // <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t val_members = 8;
  std::size_t val_windows = 16;
  net::NoiseMode ar_noise = net::NoiseMode::kPerStep;
  bool freeze_noise_encoder = false;

  /// Three stages with epochs scaled by 1/10.
  static std::vector<TrainStage> desk_schedule();
  /// (600, 1e-3, 1), (400, 1e-4, 1), (200, 1e-5, 2).
  static std::vector<TrainStage> full_schedule();

  std::size_t total_epochs() const;
  /// Stage index of a global epoch.
  std::size_t stage_of(std::size_t epoch) const;
  /// Throws ConfigError on an empty schedule, AR steps outside {1,2}, or
  /// fewer than two members with the fair estimator.
  void validate() const;
};

/// Produces one interior prediction per noise vector for a window. The
/// network is one implementation; tests plug in stubs.
template <typename T>
using MemberPredictor = std::function<std::vector<BasicTensor<T>>(
    const BasicWindow<T>&, const std::vector<net::NoiseVector>&)>;

template <typename T>
MemberPredictor<T> network_predictor(const net::ForecasterParams<T>& params);

/// Per-cell ensemble CRPS averaged over interior cells and summed over
/// variables. Members and target are [d_x, H_I, W_I]. Throws ConfigError
/// for the fair estimator with fewer than two members.
template <typename T>
BasicTensor<T> ensemble_crps_loss(const std::vector<BasicTensor<T>>& members,
                                  const BasicTensor<T>& target_interior, Estimator estimator);

/// Noise for one training sample: member m at rollout step s draws from
/// sample_noise(sample_seed, ...).
std::vector<net::NoiseVector> training_noise(std::uint64_t sample_seed, std::size_t dim,
                                             std::size_t members, std::size_t step,
                                             net::NoiseMode mode);

/// Batch mean of the single-step loss over `windows`. Sample b uses noise
/// seed derive_seed(noise_seed, b).
template <typename T>
BasicTensor<T> loss_step(const MemberPredictor<T>& predictor,
                         const std::vector<BasicWindow<T>>& windows, std::size_t noise_dim,
                         std::size_t members, Estimator estimator, std::uint64_t noise_seed);

/// Loss of a `steps`-step rollout from step t of a normalized trajectory.
/// Each member feeds its own prediction, reassembled with the true boundary,
/// into the next step; the result is the mean of the per-step losses.
template <typename T>
BasicTensor<T> rollout_loss(const MemberPredictor<T>& predictor, const DomainSpec& domain,
                            const Trajectory& trajectory, std::size_t t, std::size_t steps,
                            std::size_t noise_dim, std::size_t members, Estimator estimator,
                            std::uint64_t sample_seed, net::NoiseMode mode);

/// Batch mean of rollout_loss over (trajectory, t) samples.
template <typename T>
BasicTensor<T> ar_loss(const MemberPredictor<T>& predictor, const DomainSpec& domain,
                       const std::vector<std::pair<const Trajectory*, std::size_t>>& samples,
                       std::size_t steps, std::size_t noise_dim, std::size_t members,
                       Estimator estimator, std::uint64_t noise_seed, net::NoiseMode mode);

struct AdamState {
  std::map<std::string, std::vector<float>> m, v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient (missing gradient = zero). Names in `frozen` are
/// skipped. Throws NumericError naming the first non-finite gradient before
/// touching anything.
void adam_step(net::ForecasterParams<float>& params, AdamState& state, double learning_rate,
               const AdamOptions& options = {}, const std::vector<std::string>& frozen = {});

double global_grad_norm(const net::ForecasterParams<float>& params);
/// Rescales gradients so the global norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_gradients(net::ForecasterParams<float>& params, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t stage = 0;
  double learning_rate = 0.0;
  std::size_t ar_steps = 1;
  Estimator estimator = Estimator::kFair;
  std::size_t members = 0;
  double train_loss = 0.0;
  double val_crps = 0.0;
  double val_spread = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over the epoch's updates
  bool collapse_warning = false;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;

  /// Deterministic columns only.
  std::string to_csv() const;
  /// epoch,wall_seconds
  std::string timing_csv() const;
  static TrainLog from_csv(const std::string& text);
};

struct ValidationResult {
  double crps = 0.0;
  double spread = 0.0;
};

/// Fair CRPS and mean ensemble spread (root mean unbiased member variance)
/// at lead 1 over fixed windows of the validation split.
ValidationResult validate(const net::ForecasterParams<float>& params,
                          const toy::EpisodeDataset& dataset, const TrainConfig& config);

/// Everything needed to continue a run exactly.
struct TrainState {
  net::ForecasterParams<float> params;
  AdamState adam;
  std::size_t next_epoch = 0;
  net::ForecasterParams<float> best_params;
  double best_val_crps = 0.0;
  std::size_t best_epoch = 0;
  std::size_t low_spread_streak = 0;
  std::size_t warmup_remaining = 0;
  TrainLog log;
};

struct TrainCallbacks {
  std::function<void(const TrainState&)> on_epoch_end;
  /// Called with the stage index after its last epoch.
  std::function<void(std::size_t, const TrainState&)> on_stage_end;
  std::function<void(const EpochRecord&)> on_log;
};

/// Fresh state: initialized parameters, empty optimizer, warmup armed.
TrainState initial_state(const net::ForecasterConfig& model, const DomainSpec& domain,
                         const TrainConfig& config);

/// Runs the schedule from `state.next_epoch` to the end. The dataset must
/// be normalized. A NumericError propagates after the last completed epoch
/// has been reported through on_epoch_end.
TrainState train(const toy::EpisodeDataset& dataset, const TrainConfig& config,
                 TrainState state, const TrainCallbacks& callbacks = {});

}  // namespace crpslam::train
