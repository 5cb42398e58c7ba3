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
#include <optional>
#include <string>

namespace crpslam::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct GenDataArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool force = false;
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool full_schedule = false;
  bool resume = false;
  bool quiet = false;
};

struct ForecastArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::size_t members = 25;
  std::size_t lead_steps = 19;
  std::uint64_t seed = 0;
  std::string split = "test";
  std::size_t cases = 0;  // 0 = every trajectory of the split
  std::size_t start = 1;
  std::string noise_mode = "per-step";
  bool latest = false;
};

struct EvaluateArgs {
  std::string forecast;
  std::string data;
  std::string out;
  bool baselines = true;
};

/// CRPSLAM_SEED, when set, wins over the command-line seed.
std::uint64_t effective_seed(std::uint64_t cli_seed);

int gen_data(const GenDataArgs& args);
int train(const TrainArgs& args);
int forecast(const ForecastArgs& args);
int evaluate(const EvaluateArgs& args);
int selftest(bool quick);

}  // namespace crpslam::cli
