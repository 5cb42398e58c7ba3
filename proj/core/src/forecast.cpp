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

#include "crpslam/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "crpslam/ops.hpp"
#include "crpslam/scoring.hpp"

namespace crpslam::forecast {

namespace {

using NoiseSource = std::function<net::NoiseVector(std::size_t member, std::size_t step)>;

EnsembleForecast run(const net::ForecasterParams<float>& params, const Trajectory& trajectory,
                     std::size_t start_t, std::size_t lead_steps, std::size_t members,
                     const NoiseSource& noise, const std::optional<NormStats>& denorm,
                     bool keep_full) {
  if (members < 1) throw ConfigError("rollout: need at least one member");
  if (lead_steps < 1) throw ConfigError("rollout: need at least one lead step");
  if (start_t < 1 || start_t + lead_steps > trajectory.steps()) {
    throw DataError("rollout: lead of " + std::to_string(lead_steps) + " steps from t=" +
                    std::to_string(start_t) + " exceeds the trajectory (" +
                    std::to_string(trajectory.steps()) + " steps)");
  }
  const auto p = params.detached(false);
  const auto& dom = p.domain;

  EnsembleForecast f;
  f.domain = dom;
  f.start_t = start_t;
  f.denormalized = denorm.has_value();
  f.states.assign(members, {});
  f.noise.assign(members, {});
  if (keep_full) f.full_states.assign(members, {});

  const auto record = [&](std::size_t m, const FieldTensor& pred, const FieldTensor& full,
                          const net::NoiseVector& z) {
    f.states[m].push_back(denorm ? denormalize(pred, *denorm) : pred);
    f.noise[m].push_back(z);
    if (keep_full) f.full_states[m].push_back(full);
  };

  std::vector<net::NoiseVector> z0;
  for (std::size_t m = 0; m < members; ++m) z0.push_back(noise(m, 0));
  const auto first = build_window<float>(dom, trajectory, start_t);
  const auto preds = net::forward_ensemble(first, z0, p);
  std::vector<FieldTensor> previous(members, trajectory.states[start_t]);
  std::vector<FieldTensor> current;
  for (std::size_t m = 0; m < members; ++m) {
    current.push_back(reassemble_full_state(dom, preds[m], trajectory.states[start_t + 1]));
    record(m, preds[m], current[m], z0[m]);
  }

  for (std::size_t s = 1; s < lead_steps; ++s) {
    const std::size_t t = start_t + s;
    const auto& truth_next = trajectory.states[t + 1];
    for (std::size_t m = 0; m < members; ++m) {
      const auto w = assemble_window<float>(dom, previous[m], current[m], truth_next,
                                            trajectory.forcings[t - 1], trajectory.forcings[t],
                                            trajectory.forcings[t + 1], trajectory.statics, t);
      const auto z = noise(m, s);
      const auto pred = net::forward(w, z, p);
      previous[m] = current[m];
      current[m] = reassemble_full_state(dom, pred, truth_next);
      record(m, pred, current[m], z);
    }
  }
  return f;
}

std::span<const float> plane(const FieldTensor& x, std::size_t variable) {
  const std::size_t n = x.numel() / x.dim(0);
  return x.values().subspan(variable * n, n);
}

std::string fmt_value(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void EnsembleForecast::validate() const {
  if (states.empty()) throw DimensionError("forecast: no members");
  const std::size_t lead = states.front().size();
  for (const auto& m : states) {
    if (m.size() != lead) throw DimensionError("forecast: members disagree on lead count");
  }
  if (!noise.empty()) {
    if (noise.size() != states.size()) throw DimensionError("forecast: noise/member mismatch");
    for (const auto& m : noise) {
      if (m.size() != lead) throw DimensionError("forecast: noise/lead mismatch");
    }
  }
}

EnsembleForecast rollout(const net::ForecasterParams<float>& params,
                         const Trajectory& trajectory, std::size_t start_t,
                         const RolloutOptions& o) {
  const std::size_t dz = params.config.noise_dim;
  return run(
      params, trajectory, start_t, o.lead_steps, o.members,
      [&](std::size_t m, std::size_t s) { return net::sample_noise(o.seed, dz, m, s, o.noise_mode); },
      o.denormalize_with, o.keep_full_states);
}

EnsembleForecast replay(const net::ForecasterParams<float>& params,
                        const Trajectory& trajectory, const EnsembleForecast& recorded,
                        const std::optional<NormStats>& denormalize_with) {
  recorded.validate();
  if (recorded.noise.empty()) throw DataError("replay: forecast carries no noise record");
  auto f = run(
      params, trajectory, recorded.start_t, recorded.lead_steps(), recorded.members(),
      [&](std::size_t m, std::size_t s) { return recorded.noise[m][s]; }, denormalize_with,
      false);
  f.trajectory = recorded.trajectory;
  return f;
}

EnsembleForecast climatology_forecast(const toy::EpisodeDataset& dataset,
                                      const Trajectory& trajectory, std::size_t start_t,
                                      std::size_t lead_steps, std::size_t members,
                                      std::uint64_t seed) {
  if (start_t + lead_steps > trajectory.steps()) {
    throw DataError("climatology_forecast: lead exceeds the trajectory");
  }
  Rng rng(derive_seed(seed, StreamPurpose::kClimatology, 0));
  EnsembleForecast f;
  f.domain = dataset.domain;
  f.start_t = start_t;
  f.denormalized = !dataset.is_normalized;
  f.states.assign(members, {});
  for (std::size_t s = 1; s <= lead_steps; ++s) {
    const double hour = toy::hour_of_day(trajectory, start_t + s, dataset.domain.step_hours);
    auto ens = toy::climatology_ensemble(dataset, hour, members, rng);
    for (std::size_t m = 0; m < members; ++m) f.states[m].push_back(std::move(ens[m]));
  }
  return f;
}

EnsembleForecast persistence_forecast(const DomainSpec& domain, const Trajectory& trajectory,
                                      std::size_t start_t, std::size_t lead_steps) {
  if (start_t + lead_steps > trajectory.steps()) {
    throw DataError("persistence_forecast: lead exceeds the trajectory");
  }
  EnsembleForecast f;
  f.domain = domain;
  f.start_t = start_t;
  f.states.assign(1, std::vector<FieldTensor>(
                         lead_steps, crop_interior(domain, trajectory.states[start_t])));
  return f;
}

std::optional<double> MetricTable::lookup(const std::vector<MetricRow>& rows,
                                          std::size_t variable, std::size_t lead) {
  for (const auto& r : rows) {
    if (r.variable == variable && r.lead == lead) return r.value;
  }
  return std::nullopt;
}

std::vector<std::size_t> spectrum_leads(std::size_t lead_steps) {
  if (lead_steps == 0) return {};
  std::vector<std::size_t> leads{1};
  const std::size_t mid = (lead_steps + 1) / 2;
  if (mid > 1 && mid < lead_steps) leads.push_back(mid);
  if (lead_steps > 1) leads.push_back(lead_steps);
  return leads;
}

MetricTable evaluate(const std::vector<EnsembleForecast>& forecasts,
                     const std::vector<const Trajectory*>& truths, bool with_spectra) {
  if (forecasts.empty()) throw ContractError("evaluate: no forecasts");
  if (forecasts.size() != truths.size()) {
    throw DimensionError("evaluate: forecast and truth counts differ");
  }
  const auto& dom = forecasts.front().domain;
  const std::size_t members = forecasts.front().members();
  const std::size_t lead = forecasts.front().lead_steps();
  for (std::size_t c = 0; c < forecasts.size(); ++c) {
    forecasts[c].validate();
    if (!(forecasts[c].domain == dom) || forecasts[c].members() != members ||
        forecasts[c].lead_steps() != lead) {
      throw DimensionError("evaluate: forecasts differ in domain, members or lead");
    }
    if (forecasts[c].start_t + lead > truths[c]->steps()) {
      throw DataError("evaluate: truth trajectory shorter than the forecast");
    }
  }
  MetricTable table;
  const bool ensemble = members >= 2;
  if (!ensemble) {
    table.warnings.push_back("evaluate: " + std::to_string(members) +
                             " member(s); CRPS and SSR omitted");
  }
  const auto spec_leads = with_spectra ? spectrum_leads(lead) : std::vector<std::size_t>{};
  const std::size_t hi = dom.interior_height(), wi = dom.interior_width();

  for (std::size_t v = 0; v < dom.state_vars; ++v) {
    for (std::size_t s = 1; s <= lead; ++s) {
      double sq_sum = 0.0, abs_sum = 0.0, crps_sum = 0.0;
      std::size_t points = 0;
      scoring::SpreadSkillAccumulator ssr;
      const bool spec = std::find(spec_leads.begin(), spec_leads.end(), s) != spec_leads.end();
      std::vector<spectra::EnergySpectrum> fc_spectra, truth_spectra;
      std::vector<float> flat(members * hi * wi);
      for (std::size_t c = 0; c < forecasts.size(); ++c) {
        const auto& f = forecasts[c];
        const auto truth_full = truths[c]->states[f.start_t + s];
        const auto truth = crop_interior(dom, truth_full);
        const auto tv = plane(truth, v);
        for (std::size_t m = 0; m < members; ++m) {
          const auto mv = plane(f.states[m][s - 1], v);
          std::copy(mv.begin(), mv.end(), flat.begin() + static_cast<std::ptrdiff_t>(m * tv.size()));
          if (spec) fc_spectra.push_back(spectra::radial_spectrum(mv, hi, wi));
        }
        if (spec) truth_spectra.push_back(spectra::radial_spectrum(tv, hi, wi));
        const scoring::EnsembleView<float> view(flat, members);
        for (double e : scoring::ensemble_mean_squared_error(view, tv)) {
          sq_sum += e;
          abs_sum += std::sqrt(e);
        }
        if (ensemble) {
          crps_sum += scoring::mean_crps(view, tv, true) * static_cast<double>(tv.size());
          ssr.add(view, tv);
        }
        points += tv.size();
      }
      table.rmse.push_back({v, s, std::sqrt(sq_sum / static_cast<double>(points))});
      table.mae.push_back({v, s, abs_sum / static_cast<double>(points)});
      if (ensemble) {
        table.crps.push_back({v, s, crps_sum / static_cast<double>(points)});
        const auto r = ssr.result();
        table.ssr.push_back({v, s, r.ratio});
        if (r.warning) table.warnings.push_back(*r.warning);
      }
      if (spec) {
        table.spectra.push_back({s, v, spectra::average_spectra(fc_spectra),
                                 spectra::average_spectra(truth_spectra)});
      }
    }
  }
  return table;
}

std::string metric_csv(const std::vector<MetricRow>& rows) {
  std::string out = "variable,lead,value\n";
  for (const auto& r : rows) {
    out += std::to_string(r.variable) + "," + std::to_string(r.lead) + "," + fmt_value(r.value) +
           "\n";
  }
  return out;
}

std::string spectrum_csv(const spectra::EnergySpectrum& spectrum) {
  std::string out = "wavenumber,energy,count\n";
  for (std::size_t i = 0; i < spectrum.energy.size(); ++i) {
    out += fmt_value(spectrum.wavenumber[i]) + "," + fmt_value(spectrum.energy[i]) + "," +
           std::to_string(spectrum.count[i]) + "\n";
  }
  return out;
}

}  // namespace crpslam::forecast
