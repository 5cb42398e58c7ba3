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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crpslam/network.hpp"
#include "crpslam/spectra.hpp"
#include "crpslam/toy_atmos.hpp"

namespace crpslam::forecast {

/// Members x lead steps of interior states for one initial time.
struct EnsembleForecast {
  DomainSpec domain;
  std::size_t trajectory = 0;  // index into the source split
  std::size_t start_t = 1;     // initial state X^t; lead s predicts X^{t+s}
  std::vector<std::vector<FieldTensor>> states;  // [member][lead-1], [d_x,H_I,W_I]
  std::vector<std::vector<net::NoiseVector>> noise;  // [member][lead-1]; empty for baselines
  /// Optional full frames in model units, [member][lead-1].
  std::vector<std::vector<FieldTensor>> full_states;
  bool denormalized = false;

  std::size_t members() const { return states.size(); }
  std::size_t lead_steps() const { return states.empty() ? 0 : states.front().size(); }
  /// Throws DimensionError when member, lead or noise counts disagree.
  void validate() const;
};

struct RolloutOptions {
  std::size_t members = 25;
  std::size_t lead_steps = 19;
  net::NoiseMode noise_mode = net::NoiseMode::kPerStep;
  std::uint64_t seed = 0;
  /// Applied to the outputs when set.
  std::optional<NormStats> denormalize_with;
  bool keep_full_states = false;
};

/// Autoregressive ensemble from ground truth at `start_t` of a normalized
/// trajectory, with the true boundary at every step. One network
/// evaluation per member per step.
EnsembleForecast rollout(const net::ForecasterParams<float>& params,
                         const Trajectory& trajectory, std::size_t start_t,
                         const RolloutOptions& options);

/// Recomputes a forecast from its recorded noise.
EnsembleForecast replay(const net::ForecasterParams<float>& params,
                        const Trajectory& trajectory, const EnsembleForecast& recorded,
                        const std::optional<NormStats>& denormalize_with);

/// Training-split states at the forcing phase of every lead.
EnsembleForecast climatology_forecast(const toy::EpisodeDataset& dataset,
                                      const Trajectory& trajectory, std::size_t start_t,
                                      std::size_t lead_steps, std::size_t members,
                                      std::uint64_t seed);

/// Single member repeating the interior of X^{start_t}.
EnsembleForecast persistence_forecast(const DomainSpec& domain, const Trajectory& trajectory,
                                      std::size_t start_t, std::size_t lead_steps);

struct MetricRow {
  std::size_t variable = 0;
  std::size_t lead = 0;
  double value = 0.0;
};

struct SpectrumPanel {
  std::size_t lead = 0;
  std::size_t variable = 0;
  spectra::EnergySpectrum forecast;  // mean over cases and members
  spectra::EnergySpectrum truth;     // mean over cases
};

struct MetricTable {
  std::vector<MetricRow> rmse, crps, ssr;
  std::vector<MetricRow> mae;  // ensemble-mean absolute error
  std::vector<SpectrumPanel> spectra;
  std::vector<std::string> warnings;

  /// Value for (variable, lead) or nullopt.
  static std::optional<double> lookup(const std::vector<MetricRow>& rows, std::size_t variable,
                                      std::size_t lead);
};

/// Leads {1, mid, max} used for spectra.
std::vector<std::size_t> spectrum_leads(std::size_t lead_steps);

/// Scores forecasts against the matching truth trajectories (same units as
/// the forecasts). Per (variable, lead): ensemble-mean RMSE and MAE, fair
/// CRPS and SSR pooled over cases and interior cells. With fewer than two members
/// CRPS and SSR are skipped with a warning.
MetricTable evaluate(const std::vector<EnsembleForecast>& forecasts,
                     const std::vector<const Trajectory*>& truths,
                     bool with_spectra = true);

/// variable,lead,value with SSR infinities written as +inf.
std::string metric_csv(const std::vector<MetricRow>& rows);
/// wavenumber,energy,count
std::string spectrum_csv(const spectra::EnergySpectrum& spectrum);

}  // namespace crpslam::forecast
