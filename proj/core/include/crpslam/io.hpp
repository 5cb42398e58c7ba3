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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crpslam/forecast.hpp"
#include "crpslam/network.hpp"
#include "crpslam/toy_atmos.hpp"
#include "crpslam/trainer.hpp"

namespace crpslam::io {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

// ---- raw files ----

/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

// ---- tensor container ----
//
// "CLT1" | u8 dtype (1 = f32 LE) | u8 ndim | ndim x u64 LE dims | payload

std::string encode_tensor(const Shape& shape, std::span<const float> values);
FieldTensor decode_tensor(const std::string& bytes, const std::string& what = "tensor");
void save_tensor(const fs::path& path, const FieldTensor& tensor);
FieldTensor load_tensor(const fs::path& path);

// ---- manifest ----

/// key=value lines with '#' comments. Insertion order is kept on rewrite
/// and keys never seen by this code survive a load/save cycle.
class Manifest {
 public:
  static Manifest parse(const std::string& text);
  static Manifest load(const fs::path& path);
  void save(const fs::path& path) const;
  std::string to_string() const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set_int(const std::string& key, std::uint64_t value);
  std::optional<std::string> get(const std::string& key) const;
  /// Throws DataError naming the key when absent or malformed.
  std::string require(const std::string& key) const;
  double require_double(const std::string& key) const;
  std::uint64_t require_int(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }

  /// Checks format_version and kind; throws DataError otherwise.
  void check(const std::string& kind) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Exact text form of a double ("%.17g"; inf and nan spelled out).
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);

// ---- configuration echoes ----

void write_domain(Manifest& m, const DomainSpec& d, const std::string& prefix = "domain.");
DomainSpec read_domain(const Manifest& m, const std::string& prefix = "domain.");
void write_dynamics(Manifest& m, const toy::ToyDynamicsConfig& c);
toy::ToyDynamicsConfig read_dynamics(const Manifest& m);
void write_model(Manifest& m, const net::ForecasterConfig& c);
net::ForecasterConfig read_model(const Manifest& m);
void write_train_config(Manifest& m, const train::TrainConfig& c);
train::TrainConfig read_train_config(const Manifest& m);

/// Overlays `key=value` settings (dynamics.*, model.*, train.*, data.*) on
/// defaults. Unknown keys are a ConfigError.
struct RunConfig {
  toy::ToyDynamicsConfig dynamics;
  std::size_t n_train = 200, n_val = 20, n_test = 20;
  net::ForecasterConfig model;
  train::TrainConfig training;
};
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const fs::path& path);

// ---- dataset ----

/// Raw-unit dataset directory. Refuses a non-empty directory unless
/// `force`.
void save_dataset(const fs::path& dir, const toy::EpisodeDataset& dataset, bool force = false);
toy::EpisodeDataset load_dataset(const fs::path& dir);

// ---- checkpoint ----

void save_params(const fs::path& dir, const net::ForecasterParams<float>& params);
net::ForecasterParams<float> load_params(const fs::path& dir, const net::ForecasterConfig& config,
                                         const DomainSpec& domain);

/// Full training state: parameters, optimizer moments, best parameters,
/// counters and the log. `dataset_id` is echoed for compatibility checks.
void save_checkpoint(const fs::path& dir, const train::TrainState& state,
                     const train::TrainConfig& config, const std::string& dataset_id);
struct Checkpoint {
  train::TrainState state;
  train::TrainConfig config;
  std::string dataset_id;
  std::string id;
};
Checkpoint load_checkpoint(const fs::path& dir);
/// Best-validation parameters if stored, else the latest.
net::ForecasterParams<float> load_forecast_params(const fs::path& dir, bool prefer_best = true);

// ---- forecast archive ----

struct ForecastArchive {
  std::string checkpoint_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  net::NoiseMode noise_mode = net::NoiseMode::kPerStep;
  std::string split = "test";
  std::vector<forecast::EnsembleForecast> forecasts;
};

void save_forecast(const fs::path& dir, const ForecastArchive& archive);
ForecastArchive load_forecast(const fs::path& dir);

std::string to_string(net::NoiseMode mode);
net::NoiseMode parse_noise_mode(const std::string& s);

}  // namespace crpslam::io
