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

#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "crpslam/forecast.hpp"
#include "crpslam/io.hpp"
#include "crpslam/svg.hpp"
#include "crpslam/trainer.hpp"

namespace crpslam::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::vector<Trajectory>& split_of(const toy::EpisodeDataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw ConfigError("unknown split '" + split + "'");
}

std::map<std::size_t, double> read_timing(const fs::path& path) {
  std::map<std::size_t, double> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(io::read_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    out[std::stoull(line.substr(0, comma))] = std::strtod(line.c_str() + comma + 1, nullptr);
  }
  return out;
}

std::vector<svg::Series> metric_series(const std::vector<forecast::MetricRow>& rows,
                                       std::size_t vars, const std::string& label) {
  std::vector<svg::Series> out;
  for (std::size_t v = 0; v < vars; ++v) {
    svg::Series s;
    s.label = label + " var" + std::to_string(v);
    for (const auto& r : rows) {
      if (r.variable != v) continue;
      s.x.push_back(static_cast<double>(r.lead));
      s.y.push_back(r.value);
    }
    if (!s.x.empty()) out.push_back(std::move(s));
  }
  return out;
}

// Parseval re-check: energy totals read back from the CSV against member
// variances recomputed from the archive.
double parseval_error(const std::string& csv,
                      const std::vector<forecast::EnsembleForecast>& forecasts, std::size_t lead,
                      std::size_t variable) {
  double total = 0.0;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string w, e, c;
    std::getline(ls, w, ',');
    std::getline(ls, e, ',');
    std::getline(ls, c, ',');
    total += io::parse_double(e, "spectrum energy") * static_cast<double>(std::stoull(c));
  }
  double var_sum = 0.0;
  std::size_t fields = 0;
  for (const auto& f : forecasts) {
    for (const auto& member : f.states) {
      const auto& x = member[lead - 1];
      const std::size_t plane = x.numel() / x.dim(0);
      const auto v = x.values().subspan(variable * plane, plane);
      double mean = 0.0;
      for (float a : v) mean += a;
      mean /= static_cast<double>(plane);
      double var = 0.0;
      for (float a : v) var += (a - mean) * (a - mean);
      var_sum += var / static_cast<double>(plane);
      ++fields;
    }
  }
  const double expected = var_sum / static_cast<double>(fields);
  return std::abs(total - expected) / std::max(expected, 1e-30);
}

}  // namespace

std::uint64_t effective_seed(std::uint64_t cli_seed) {
  if (const char* env = std::getenv("CRPSLAM_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("CRPSLAM_SEED is not an integer: ") + env);
    return v;
  }
  return cli_seed;
}

int gen_data(const GenDataArgs& args) {
  const auto rc = io::load_run_config(args.config);
  const auto t0 = Clock::now();
  const auto ds = toy::make_dataset(rc.dynamics, rc.n_train, rc.n_val, rc.n_test, args.seed);
  io::save_dataset(args.out, ds, args.force);
  std::printf("dataset %s: %zu train / %zu val / %zu test trajectories of %zu steps, seed %llu\n",
              ds.id().c_str(), ds.train.size(), ds.val.size(), ds.test.size(),
              rc.dynamics.steps, static_cast<unsigned long long>(args.seed));
  std::printf("CFL advective %.3f, diffusive %.3f; wrote %s in %.1f s\n",
              rc.dynamics.advective_courant(), rc.dynamics.diffusive_number(), args.out.c_str(),
              seconds_since(t0));
  return kOk;
}

int train(const TrainArgs& args) {
  auto rc = io::load_run_config(args.config);
  if (args.full_schedule) rc.training.stages = train::TrainConfig::full_schedule();
  if (args.seed) rc.training.seed = *args.seed;
  rc.training.seed = effective_seed(rc.training.seed);

  const auto raw = io::load_dataset(args.data);
  const auto ds = toy::normalized(raw);
  try {
    rc.model.validate(ds.domain);
  } catch (const ConfigError& e) {
    throw DataError(std::string("incompatible dataset/model shapes: ") + e.what());
  }
  const fs::path out(args.out);
  const fs::path ckpt = out / "checkpoint";

  train::TrainConfig config = rc.training;
  train::TrainState state;
  if (args.resume) {
    auto c = io::load_checkpoint(ckpt);
    if (c.dataset_id != raw.id()) {
      throw DataError("checkpoint was trained on dataset " + c.dataset_id + ", not " + raw.id());
    }
    config = c.config;
    state = std::move(c.state);
    const auto timing = read_timing(out / "train_timing.csv");
    for (auto& r : state.log.epochs) {
      if (const auto it = timing.find(r.epoch); it != timing.end()) r.wall_seconds = it->second;
    }
    std::printf("resuming at epoch %zu of %zu\n", state.next_epoch, config.total_epochs());
  } else {
    if (fs::exists(ckpt)) {
      throw ConfigError(ckpt.string() + " exists; pass --resume or choose another --out");
    }
    state = train::initial_state(rc.model, ds.domain, config);
  }
  config.validate();
  fs::create_directories(out);
  std::printf("training %zu parameters for %zu epochs (%zu stages), seed %llu\n",
              state.params.parameter_count(), config.total_epochs(), config.stages.size(),
              static_cast<unsigned long long>(config.seed));

  train::TrainCallbacks cb;
  cb.on_log = [&](const train::EpochRecord& r) {
    if (args.quiet) return;
    std::printf("epoch %4zu stage %zu lr %.0e ar %zu %s N=%zu  loss %.5f  val_crps %.5f  "
                "spread %.4f  |g| %.3f%s  (%.1f s)\n",
                r.epoch, r.stage, r.learning_rate, r.ar_steps, train::to_string(r.estimator).c_str(),
                r.members, r.train_loss, r.val_crps, r.val_spread, r.grad_norm,
                r.collapse_warning ? "  COLLAPSE WARNING" : "", r.wall_seconds);
    std::fflush(stdout);
  };
  cb.on_epoch_end = [&](const train::TrainState& s) {
    io::save_checkpoint(ckpt, s, config, raw.id());
    io::write_file_atomic(out / "train_log.csv", s.log.to_csv());
    io::write_file_atomic(out / "train_timing.csv", s.log.timing_csv());
  };
  cb.on_stage_end = [&](std::size_t stage, const train::TrainState& s) {
    io::save_checkpoint(out / ("stage_" + std::to_string(stage)), s, config, raw.id());
  };
  const auto t0 = Clock::now();
  const auto final_state = train::train(ds, config, std::move(state), cb);
  for (const auto& w : final_state.log.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("done in %.1f s; best val CRPS %.5f at epoch %zu; checkpoint %s\n",
              seconds_since(t0), final_state.best_val_crps, final_state.best_epoch,
              ckpt.c_str());
  return kOk;
}

int forecast(const ForecastArgs& args) {
  const auto params = io::load_forecast_params(args.ckpt, !args.latest);
  const auto raw = io::load_dataset(args.data);
  const auto ds = toy::normalized(raw);
  if (!(params.domain == ds.domain)) {
    throw DataError("checkpoint domain does not match the dataset");
  }
  const auto& trajs = split_of(ds, args.split);
  const std::size_t cases = args.cases == 0 ? trajs.size() : std::min(args.cases, trajs.size());
  if (cases == 0) throw DataError("split '" + args.split + "' is empty");

  io::ForecastArchive archive;
  archive.checkpoint_id = params.checksum();
  archive.dataset_id = raw.id();
  archive.seed = args.seed;
  archive.noise_mode = io::parse_noise_mode(args.noise_mode);
  archive.split = args.split;

  forecast::RolloutOptions opt;
  opt.members = args.members;
  opt.lead_steps = args.lead_steps;
  opt.noise_mode = archive.noise_mode;
  opt.denormalize_with = ds.stats;

  net::EvaluationCounter::reset();
  const auto t0 = Clock::now();
  for (std::size_t c = 0; c < cases; ++c) {
    opt.seed = derive_seed(args.seed, c);
    auto f = forecast::rollout(params, trajs[c], args.start, opt);
    f.trajectory = c;
    archive.forecasts.push_back(std::move(f));
  }
  const double elapsed = seconds_since(t0);
  const auto evals = net::EvaluationCounter::count();
  io::save_forecast(args.out, archive);

  std::printf("forecast: %zu cases x %zu members x %zu steps, %llu network evaluations\n", cases,
              args.members, args.lead_steps, static_cast<unsigned long long>(evals));
  std::printf("wall time per member trajectory: %.2f ms (%.3f ms per member step)\n",
              1e3 * elapsed / static_cast<double>(cases * args.members),
              1e3 * elapsed / static_cast<double>(evals));

  // Informational: one shared-input batched call against independent calls.
  const auto window = build_window<float>(ds.domain, trajs[0], args.start);
  std::vector<net::NoiseVector> z;
  for (std::size_t m = 0; m < args.members; ++m) {
    z.push_back(net::sample_noise(args.seed, params.config.noise_dim, m, 0));
  }
  const auto frozen = params.detached(false);
  auto tb = Clock::now();
  (void)net::forward_ensemble(window, z, frozen);
  const double batched = seconds_since(tb);
  tb = Clock::now();
  for (const auto& zi : z) (void)net::forward(window, zi, frozen);
  const double sequential = seconds_since(tb);
  std::printf("throughput: batched %.1f members/s, sequential %.1f members/s\n",
              static_cast<double>(args.members) / batched,
              static_cast<double>(args.members) / sequential);
  std::printf("wrote %s\n", args.out.c_str());
  return kOk;
}

int evaluate(const EvaluateArgs& args) {
  const auto archive = io::load_forecast(args.forecast);
  const auto raw = io::load_dataset(args.data);
  if (archive.dataset_id != raw.id()) {
    throw DataError("forecast was made on dataset " + archive.dataset_id + ", not " + raw.id());
  }
  const auto& trajs = split_of(raw, archive.split);
  std::vector<const Trajectory*> truths;
  for (const auto& f : archive.forecasts) {
    if (!f.denormalized) throw DataError("forecast archive is not in physical units");
    if (f.trajectory >= trajs.size()) throw DataError("forecast references a missing trajectory");
    truths.push_back(&trajs[f.trajectory]);
  }
  const auto table = forecast::evaluate(archive.forecasts, truths, true);
  for (const auto& w : table.warnings) std::printf("warning: %s\n", w.c_str());

  const fs::path out(args.out);
  fs::create_directories(out);
  io::write_file_atomic(out / "rmse.csv", forecast::metric_csv(table.rmse));
  io::write_file_atomic(out / "mae.csv", forecast::metric_csv(table.mae));
  if (!table.crps.empty()) {
    io::write_file_atomic(out / "crps.csv", forecast::metric_csv(table.crps));
    io::write_file_atomic(out / "ssr.csv", forecast::metric_csv(table.ssr));
  }

  const std::size_t vars = raw.domain.state_vars;
  const std::size_t lead = archive.forecasts.front().lead_steps();
  const std::size_t members = archive.forecasts.front().members();
  forecast::MetricTable clim, pers;
  if (args.baselines) {
    std::vector<forecast::EnsembleForecast> cf, pf;
    for (std::size_t c = 0; c < archive.forecasts.size(); ++c) {
      const auto& f = archive.forecasts[c];
      cf.push_back(forecast::climatology_forecast(raw, *truths[c], f.start_t, lead,
                                                  std::max<std::size_t>(members, 2),
                                                  derive_seed(archive.seed, c)));
      pf.push_back(forecast::persistence_forecast(raw.domain, *truths[c], f.start_t, lead));
    }
    clim = forecast::evaluate(cf, truths, false);
    pers = forecast::evaluate(pf, truths, false);
    io::write_file_atomic(out / "baseline_climatology_crps.csv", forecast::metric_csv(clim.crps));
    io::write_file_atomic(out / "baseline_climatology_rmse.csv", forecast::metric_csv(clim.rmse));
    io::write_file_atomic(out / "baseline_persistence_mae.csv", forecast::metric_csv(pers.mae));
    io::write_file_atomic(out / "baseline_persistence_rmse.csv", forecast::metric_csv(pers.rmse));
  }

  const auto plot = [&](const std::string& name, const std::string& title,
                        std::vector<svg::Series> series) {
    svg::PlotOptions o;
    o.title = title;
    o.x_label = "lead (steps of " + io::format_double(raw.domain.step_hours) + " h)";
    o.y_label = title;
    io::write_file_atomic(out / name, svg::line_plot(series, o));
  };
  {
    auto s = metric_series(table.rmse, vars, "model");
    for (auto& b : metric_series(clim.rmse, vars, "climatology")) s.push_back(std::move(b));
    for (auto& b : metric_series(pers.rmse, vars, "persistence")) s.push_back(std::move(b));
    plot("rmse.svg", "ensemble-mean RMSE", std::move(s));
  }
  if (!table.crps.empty()) {
    auto s = metric_series(table.crps, vars, "model");
    for (auto& b : metric_series(clim.crps, vars, "climatology")) s.push_back(std::move(b));
    for (auto& b : metric_series(pers.mae, vars, "persistence MAE")) s.push_back(std::move(b));
    plot("crps.svg", "fair CRPS", std::move(s));
    plot("ssr.svg", "spread-skill ratio", metric_series(table.ssr, vars, "model"));
  }

  double worst = 0.0;
  for (const auto& panel : table.spectra) {
    char stem[64];
    std::snprintf(stem, sizeof stem, "lead%02zu_var%zu", panel.lead, panel.variable);
    const auto csv = forecast::spectrum_csv(panel.forecast);
    io::write_file_atomic(out / (std::string("spectra_") + stem + ".csv"), csv);
    io::write_file_atomic(out / (std::string("spectra_truth_") + stem + ".csv"),
                          forecast::spectrum_csv(panel.truth));
    const auto reread = io::read_file(out / (std::string("spectra_") + stem + ".csv"));
    worst = std::max(worst, parseval_error(reread, archive.forecasts, panel.lead,
                                           panel.variable));
    svg::PlotOptions o;
    o.title = "energy spectrum, lead " + std::to_string(panel.lead) + ", var " +
              std::to_string(panel.variable);
    o.x_label = "wavenumber";
    o.y_label = "energy";
    o.log_x = o.log_y = true;
    io::write_file_atomic(out / (std::string("spectra_") + stem + ".svg"),
                          svg::line_plot({{"ensemble", panel.forecast.wavenumber, panel.forecast.energy},
                                          {"truth", panel.truth.wavenumber, panel.truth.energy}},
                                         o));
  }
  if (!table.spectra.empty()) {
    std::printf("spectra Parseval re-check: max relative error %.2e\n", worst);
    if (worst > 0.01) throw NumericError("spectrum CSV fails the Parseval re-check");
  }

  for (std::size_t v = 0; v < vars; ++v) {
    const auto crps1 = forecast::MetricTable::lookup(table.crps, v, 1);
    const auto rmse1 = forecast::MetricTable::lookup(table.rmse, v, 1);
    const auto ssr1 = forecast::MetricTable::lookup(table.ssr, v, 1);
    std::printf("var %zu lead 1: RMSE %.4f  CRPS %s  SSR %s", v, rmse1.value_or(0.0),
                crps1 ? io::format_double(*crps1).substr(0, 8).c_str() : "n/a",
                ssr1 ? io::format_double(*ssr1).substr(0, 6).c_str() : "n/a");
    if (args.baselines) {
      std::printf("  | climatology CRPS %.4f  persistence MAE %.4f",
                  forecast::MetricTable::lookup(clim.crps, v, 1).value_or(0.0),
                  forecast::MetricTable::lookup(pers.mae, v, 1).value_or(0.0));
    }
    std::printf("\n");
  }
  std::printf("wrote metrics to %s\n", out.c_str());
  return kOk;
}

}  // namespace crpslam::cli
