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

#include "crpslam/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <type_traits>

#include "crpslam/ops.hpp"
#include "crpslam/scoring.hpp"

namespace crpslam::train {

namespace {

template <typename T>
BasicTensor<T> as_type(const FieldTensor& x) {
  if constexpr (std::is_same_v<T, float>) {
    return x;
  } else {
    return x.template cast<T>();
  }
}

template <typename T>
BasicTensor<T> target_interior(const BasicWindow<T>& w) {
  const std::size_t top = (w.target.dim(1) - w.current_interior.dim(1)) / 2;
  const std::size_t left = (w.target.dim(2) - w.current_interior.dim(2)) / 2;
  return crop2d(w.target, top, left, w.current_interior.dim(1), w.current_interior.dim(2));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Estimator e) { return e == Estimator::kFair ? "fair" : "biased"; }

Estimator parse_estimator(const std::string& s) {
  if (s == "fair") return Estimator::kFair;
  if (s == "biased") return Estimator::kBiased;
  throw ConfigError("unknown estimator '" + s + "' (expected fair or biased)");
}

std::vector<TrainStage> TrainConfig::desk_schedule() {
  return {{60, 1e-3, 1}, {40, 1e-4, 1}, {20, 1e-5, 2}};
}

std::vector<TrainStage> TrainConfig::full_schedule() {
  return {{600, 1e-3, 1}, {400, 1e-4, 1}, {200, 1e-5, 2}};
}

std::size_t TrainConfig::total_epochs() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.epochs;
  return n;
}

std::size_t TrainConfig::stage_of(std::size_t epoch) const {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (epoch < stages[i].epochs) return i;
    epoch -= stages[i].epochs;
  }
  throw ContractError("stage_of: epoch beyond the schedule");
}

void TrainConfig::validate() const {
  if (stages.empty()) throw ConfigError("train: empty stage list");
  for (const auto& s : stages) {
    if (s.epochs == 0) throw ConfigError("train: stage with zero epochs");
    if (s.ar_steps < 1 || s.ar_steps > 2) throw ConfigError("train: AR steps must be 1 or 2");
    if (!(s.learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  }
  if (members < 1) throw ConfigError("train: need at least one member");
  if (estimator == Estimator::kFair && members < 2) {
    throw ConfigError("train: the fair estimator needs N_train >= 2");
  }
  if (warmup_epochs > 0 && warmup_members < 1) throw ConfigError("train: warmup_members >= 1");
  if (batch_size < 1 || steps_per_epoch < 1) {
    throw ConfigError("train: batch_size and steps_per_epoch must be >= 1");
  }
  if (val_members < 2 || val_windows < 1) {
    throw ConfigError("train: validation needs >= 2 members and >= 1 window");
  }
  if (collapse_patience < 1) throw ConfigError("train: collapse_patience must be >= 1");
}

template <typename T>
MemberPredictor<T> network_predictor(const net::ForecasterParams<T>& params) {
  return [params](const BasicWindow<T>& w, const std::vector<net::NoiseVector>& z) {
    return net::forward_ensemble(w, z, params);
  };
}

template <typename T>
BasicTensor<T> ensemble_crps_loss(const std::vector<BasicTensor<T>>& members,
                                  const BasicTensor<T>& target_interior, Estimator estimator) {
  const std::size_t n = members.size();
  if (n == 0) throw ConfigError("ensemble_crps_loss: no members");
  if (estimator == Estimator::kFair && n < 2) {
    throw ConfigError("ensemble_crps_loss: fair estimator needs at least 2 members");
  }
  if (target_interior.rank() != 3) {
    throw DimensionError("ensemble_crps_loss: target must be [d_x, H_I, W_I]");
  }
  for (const auto& m : members) {
    if (m.shape() != target_interior.shape()) {
      throw DimensionError("ensemble_crps_loss: member shape " + shape_string(m.shape()) +
                           " vs target " + shape_string(target_interior.shape()));
    }
  }
  const double nd = static_cast<double>(n);
  BasicTensor<T> skill = sum(abs_subtract(members[0], target_interior));
  for (std::size_t i = 1; i < n; ++i) {
    skill = add(skill, sum(abs_subtract(members[i], target_interior)));
  }
  BasicTensor<T> loss = scale(skill, static_cast<T>(1.0 / nd));
  if (n >= 2) {
    BasicTensor<T> spread;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto s = sum(abs_subtract(members[i], members[j]));
        spread = spread.defined() ? add(spread, s) : s;
      }
    }
    // Each unordered pair stands for two ordered terms of the double sum.
    const double coef = estimator == Estimator::kFair ? 1.0 / (nd * (nd - 1.0)) : 1.0 / (nd * nd);
    loss = subtract(loss, scale(spread, static_cast<T>(coef)));
  }
  const double cells = static_cast<double>(target_interior.dim(1) * target_interior.dim(2));
  return scale(loss, static_cast<T>(1.0 / cells));
}

std::vector<net::NoiseVector> training_noise(std::uint64_t sample_seed, std::size_t dim,
                                             std::size_t members, std::size_t step,
                                             net::NoiseMode mode) {
  std::vector<net::NoiseVector> out;
  out.reserve(members);
  for (std::size_t m = 0; m < members; ++m) {
    out.push_back(net::sample_noise(sample_seed, dim, m, step, mode));
  }
  return out;
}

template <typename T>
BasicTensor<T> loss_step(const MemberPredictor<T>& predictor,
                         const std::vector<BasicWindow<T>>& windows, std::size_t noise_dim,
                         std::size_t members, Estimator estimator, std::uint64_t noise_seed) {
  if (windows.empty()) throw ContractError("loss_step: empty batch");
  BasicTensor<T> total;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto z = training_noise(derive_seed(noise_seed, b), noise_dim, members, 0,
                                  net::NoiseMode::kPerStep);
    const auto l = ensemble_crps_loss(predictor(windows[b], z), target_interior(windows[b]),
                                      estimator);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, static_cast<T>(1.0 / static_cast<double>(windows.size())));
}

template <typename T>
BasicTensor<T> rollout_loss(const MemberPredictor<T>& predictor, const DomainSpec& domain,
                            const Trajectory& trajectory, std::size_t t, std::size_t steps,
                            std::size_t noise_dim, std::size_t members, Estimator estimator,
                            std::uint64_t sample_seed, net::NoiseMode mode) {
  if (steps < 1) throw ContractError("rollout_loss: steps must be >= 1");
  if (t < 1 || t + steps > trajectory.steps()) {
    throw DataError("rollout_loss: trajectory of " + std::to_string(trajectory.steps()) +
                    " steps cannot supply " + std::to_string(steps) + " targets from t=" +
                    std::to_string(t));
  }
  const auto window = build_window<T>(domain, trajectory, t);
  auto preds = predictor(window, training_noise(sample_seed, noise_dim, members, 0, mode));
  BasicTensor<T> total = ensemble_crps_loss(preds, target_interior(window), estimator);

  const auto statics = as_type<T>(trajectory.statics);
  std::vector<BasicTensor<T>> previous(members, as_type<T>(trajectory.states[t]));
  std::vector<BasicTensor<T>> current;
  current.reserve(members);
  for (const auto& p : preds) {
    current.push_back(reassemble_full_state(domain, p, as_type<T>(trajectory.states[t + 1])));
  }
  for (std::size_t s = 1; s < steps; ++s) {
    const std::size_t tt = t + s;
    const auto next_truth = as_type<T>(trajectory.states[tt + 1]);
    const auto f0 = as_type<T>(trajectory.forcings[tt - 1]);
    const auto f1 = as_type<T>(trajectory.forcings[tt]);
    const auto f2 = as_type<T>(trajectory.forcings[tt + 1]);
    const auto z = training_noise(sample_seed, noise_dim, members, s, mode);
    std::vector<BasicTensor<T>> step_preds;
    step_preds.reserve(members);
    for (std::size_t m = 0; m < members; ++m) {
      const auto w = assemble_window<T>(domain, previous[m], current[m], next_truth, f0, f1, f2,
                                        statics, tt);
      step_preds.push_back(predictor(w, {z[m]}).at(0));
    }
    total = add(total, ensemble_crps_loss(step_preds, crop_interior(domain, next_truth),
                                          estimator));
    for (std::size_t m = 0; m < members; ++m) {
      previous[m] = current[m];
      current[m] = reassemble_full_state(domain, step_preds[m], next_truth);
    }
  }
  return scale(total, static_cast<T>(1.0 / static_cast<double>(steps)));
}

template <typename T>
BasicTensor<T> ar_loss(const MemberPredictor<T>& predictor, const DomainSpec& domain,
                       const std::vector<std::pair<const Trajectory*, std::size_t>>& samples,
                       std::size_t steps, std::size_t noise_dim, std::size_t members,
                       Estimator estimator, std::uint64_t noise_seed, net::NoiseMode mode) {
  if (samples.empty()) throw ContractError("ar_loss: empty batch");
  BasicTensor<T> total;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto l = rollout_loss(predictor, domain, *samples[b].first, samples[b].second, steps,
                                noise_dim, members, estimator, derive_seed(noise_seed, b), mode);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, static_cast<T>(1.0 / static_cast<double>(samples.size())));
}

void adam_step(net::ForecasterParams<float>& params, AdamState& state, double learning_rate,
               const AdamOptions& options, const std::vector<std::string>& frozen) {
  const auto is_frozen = [&](const std::string& name) {
    return std::find(frozen.begin(), frozen.end(), name) != frozen.end();
  };
  for (const auto& [name, t] : params.tensors) {
    if (is_frozen(name)) continue;
    for (float g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient for parameter " + name);
      }
    }
  }
  ++state.step;
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, t] : params.tensors) {
    if (is_frozen(name)) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(t.numel(), 0.0f);
      v.assign(t.numel(), 0.0f);
    }
    const auto grad = t.grad();
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = learning_rate * (mi / c1) / (std::sqrt(vi / c2) + options.epsilon);
      values[i] = static_cast<float>(values[i] - update);
    }
  }
}

double global_grad_norm(const net::ForecasterParams<float>& params) {
  double sq = 0.0;
  for (const auto& [_, t] : params.tensors) {
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(net::ForecasterParams<float>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& [_, t] : params.tensors) {
      for (auto& g : t.node()->grad) g *= factor;
    }
  }
  return norm;
}

std::string TrainLog::to_csv() const {
  std::string out =
      "epoch,stage,learning_rate,ar_steps,estimator,members,train_loss,val_crps,val_spread,"
      "grad_norm,collapse_warning\n";
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.stage) + "," +
           fmt_double(r.learning_rate) + "," + std::to_string(r.ar_steps) + "," +
           to_string(r.estimator) + "," + std::to_string(r.members) + "," +
           fmt_double(r.train_loss) + "," + fmt_double(r.val_crps) + "," +
           fmt_double(r.val_spread) + "," + fmt_double(r.grad_norm) + "," +
           (r.collapse_warning ? "1" : "0") + "\n";
  }
  return out;
}

std::string TrainLog::timing_csv() const {
  std::string out = "epoch,wall_seconds\n";
  for (const auto& r : epochs) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_seconds);
    out += std::to_string(r.epoch) + "," + buf + "\n";
  }
  return out;
}

TrainLog TrainLog::from_csv(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw DataError("train log: malformed row '" + line + "'");
    EpochRecord r;
    r.epoch = std::stoull(f[0]);
    r.stage = std::stoull(f[1]);
    r.learning_rate = std::strtod(f[2].c_str(), nullptr);
    r.ar_steps = std::stoull(f[3]);
    r.estimator = parse_estimator(f[4]);
    r.members = std::stoull(f[5]);
    r.train_loss = std::strtod(f[6].c_str(), nullptr);
    r.val_crps = std::strtod(f[7].c_str(), nullptr);
    r.val_spread = std::strtod(f[8].c_str(), nullptr);
    r.grad_norm = std::strtod(f[9].c_str(), nullptr);
    r.collapse_warning = f[10] == "1";
    log.epochs.push_back(r);
  }
  return log;
}

ValidationResult validate(const net::ForecasterParams<float>& params,
                          const toy::EpisodeDataset& dataset, const TrainConfig& config) {
  if (dataset.val.empty()) throw DataError("validate: dataset has no validation trajectories");
  const auto frozen = params.detached(false);
  const auto& dom = dataset.domain;
  Rng rng(derive_seed(config.seed, StreamPurpose::kValidation, 0));
  scoring::SpreadSkillAccumulator spread;
  double crps_sum = 0.0;
  const std::size_t n = config.val_members;
  for (std::size_t i = 0; i < config.val_windows; ++i) {
    const auto& traj = dataset.val[rng.below(dataset.val.size())];
    if (traj.steps() < 2) throw DataError("validate: trajectory too short");
    const std::size_t t = 1 + rng.below(traj.steps() - 1);
    const auto w = build_window<float>(dom, traj, t);
    const auto z = training_noise(derive_seed(config.seed, StreamPurpose::kValidation, i + 1),
                                  frozen.config.noise_dim, n, 0, net::NoiseMode::kPerStep);
    const auto preds = net::forward_ensemble(w, z, frozen);
    const auto truth = target_interior(w);
    std::vector<float> flat;
    flat.reserve(n * truth.numel());
    for (const auto& p : preds) flat.insert(flat.end(), p.values().begin(), p.values().end());
    const scoring::EnsembleView<float> view(flat, n);
    crps_sum += scoring::mean_crps(view, truth.values(), true) *
                static_cast<double>(dom.state_vars);
    spread.add(view, truth.values());
  }
  ValidationResult r;
  r.crps = crps_sum / static_cast<double>(config.val_windows);
  r.spread = std::sqrt(spread.result().mean_variance);
  return r;
}

TrainState initial_state(const net::ForecasterConfig& model, const DomainSpec& domain,
                         const TrainConfig& config) {
  TrainState s;
  s.params = net::init_params<float>(model, domain, config.seed).detached(true);
  if (config.freeze_noise_encoder) {
    for (const char* name : {"noise.w", "noise.b"}) {
      auto& t = s.params.tensors.at(name);
      std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0f);
    }
  }
  s.best_params = s.params.detached(false);
  s.best_val_crps = std::numeric_limits<double>::infinity();
  s.warmup_remaining = config.warmup_epochs;
  return s;
}

TrainState train(const toy::EpisodeDataset& dataset, const TrainConfig& config,
                 TrainState state, const TrainCallbacks& callbacks) {
  config.validate();
  if (!dataset.is_normalized) throw ContractError("train: dataset must be normalized");
  if (dataset.train.empty()) throw DataError("train: no training trajectories");
  if (!(state.params.domain == dataset.domain)) {
    throw ConfigError("train: model was built for a different domain than the dataset");
  }
  state.params.config.validate(dataset.domain);
  // Tensors share storage on copy; updates must not reach the caller's state.
  state.params = state.params.detached(true);
  for (const auto& s : config.stages) {
    for (const auto& traj : dataset.train) {
      if (traj.steps() < s.ar_steps + 1) {
        throw DataError("train: trajectories too short for " + std::to_string(s.ar_steps) +
                        "-step rollouts");
      }
    }
  }
  std::vector<std::string> frozen;
  if (config.freeze_noise_encoder) frozen = {"noise.w", "noise.b"};
  const AdamOptions adam{config.beta1, config.beta2, config.adam_epsilon};
  const auto& dom = dataset.domain;
  const std::size_t dz = state.params.config.noise_dim;
  const std::size_t total = config.total_epochs();

  for (std::size_t epoch = state.next_epoch; epoch < total; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t stage = config.stage_of(epoch);
    const auto& st = config.stages[stage];
    const bool warm = state.warmup_remaining > 0;
    const Estimator est = warm ? Estimator::kBiased : config.estimator;
    const std::size_t members = warm ? config.warmup_members : config.members;
    if (warm) --state.warmup_remaining;

    Rng rng(derive_seed(config.seed, StreamPurpose::kBatch, epoch));
    const std::uint64_t noise_base = derive_seed(config.seed, StreamPurpose::kTrainNoise, epoch);
    const auto predictor = network_predictor(state.params);
    const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
    double loss_sum = 0.0, norm_sum = 0.0;
    for (std::size_t step = 0; step < config.steps_per_epoch; ++step) {
      state.params.zero_grad();
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const auto& traj = dataset.train[rng.below(dataset.train.size())];
        const std::size_t t = 1 + rng.below(traj.steps() - st.ar_steps);
        const auto loss =
            rollout_loss<float>(predictor, dom, traj, t, st.ar_steps, dz, members, est,
                                derive_seed(noise_base, step * config.batch_size + b),
                                config.ar_noise);
        backward(scale(loss, inv_batch));
        loss_sum += loss.item();
      }
      norm_sum += clip_gradients(state.params, config.clip_norm);
      adam_step(state.params, state.adam, st.learning_rate, adam, frozen);
    }
    state.params.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = stage;
    rec.learning_rate = st.learning_rate;
    rec.ar_steps = st.ar_steps;
    rec.estimator = est;
    rec.members = members;
    rec.train_loss =
        loss_sum / static_cast<double>(config.steps_per_epoch * config.batch_size);
    rec.grad_norm = norm_sum / static_cast<double>(config.steps_per_epoch);
    const auto val = validate(state.params, dataset, config);
    rec.val_crps = val.crps;
    rec.val_spread = val.spread;

    state.low_spread_streak = val.spread < config.collapse_spread_floor ? state.low_spread_streak + 1 : 0;
    if (state.low_spread_streak >= config.collapse_patience) {
      rec.collapse_warning = true;
      state.log.warnings.push_back(
          "epoch " + std::to_string(epoch) + ": ensemble spread " + fmt_double(val.spread) +
          " below " + fmt_double(config.collapse_spread_floor) + " for " +
          std::to_string(config.collapse_patience) + " consecutive epochs" +
          (config.warmup_epochs > 0 ? "; re-entering biased warmup" : ""));
      state.low_spread_streak = 0;
      if (config.warmup_epochs > 0) state.warmup_remaining = config.warmup_epochs;
    }
    if (val.crps < state.best_val_crps) {
      state.best_val_crps = val.crps;
      state.best_epoch = epoch;
      state.best_params = state.params.detached(false);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state.log.epochs.push_back(rec);
    state.next_epoch = epoch + 1;

    if (callbacks.on_log) callbacks.on_log(rec);
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(state);
    const bool stage_done = epoch + 1 == total || config.stage_of(epoch + 1) != stage;
    if (stage_done && callbacks.on_stage_end) callbacks.on_stage_end(stage, state);
  }
  return state;
}

#define CRPSLAM_INSTANTIATE_TRAIN(T)                                                          \
  template MemberPredictor<T> network_predictor<T>(const net::ForecasterParams<T>&);          \
  template BasicTensor<T> ensemble_crps_loss<T>(const std::vector<BasicTensor<T>>&,           \
                                                const BasicTensor<T>&, Estimator);            \
  template BasicTensor<T> loss_step<T>(const MemberPredictor<T>&,                             \
                                       const std::vector<BasicWindow<T>>&, std::size_t,       \
                                       std::size_t, Estimator, std::uint64_t);                \
  template BasicTensor<T> rollout_loss<T>(const MemberPredictor<T>&, const DomainSpec&,       \
                                          const Trajectory&, std::size_t, std::size_t,        \
                                          std::size_t, std::size_t, Estimator, std::uint64_t, \
                                          net::NoiseMode);                                    \
  template BasicTensor<T> ar_loss<T>(                                                         \
      const MemberPredictor<T>&, const DomainSpec&,                                           \
      const std::vector<std::pair<const Trajectory*, std::size_t>>&, std::size_t,             \
      std::size_t, std::size_t, Estimator, std::uint64_t, net::NoiseMode);

CRPSLAM_INSTANTIATE_TRAIN(float)
CRPSLAM_INSTANTIATE_TRAIN(double)

}  // namespace crpslam::train
