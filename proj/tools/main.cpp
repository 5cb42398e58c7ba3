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

#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "commands.hpp"
#include "crpslam/errors.hpp"

int main(int argc, char** argv) {
  using namespace crpslam::cli;
  CLI::App app{"crpslam: CRPS-trained limited-area ensemble forecasting on a toy atmosphere"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Simulate the toy atmosphere and write a dataset");
  g->add_option("--config", gen.config, "Run configuration (key=value)")->required();
  g->add_option("--out", gen.out, "Dataset directory")->required();
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train the forecaster");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Run configuration (key=value)")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  auto* seed_opt = t->add_option("--seed", train_seed, "Training seed (overrides train.seed)");
  t->add_flag("--full-schedule", tr.full_schedule,
              "Use the full 600/400/200-epoch schedule");
  t->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint");
  t->add_flag("--quiet", tr.quiet, "Suppress per-epoch lines");

  ForecastArgs fc;
  auto* f = app.add_subcommand("forecast", "Roll out ensemble forecasts");
  f->add_option("--ckpt", fc.ckpt, "Checkpoint directory")->required();
  f->add_option("--data", fc.data, "Dataset directory")->required();
  f->add_option("--out", fc.out, "Forecast archive directory")->required();
  f->add_option("--members", fc.members, "Ensemble size")->check(CLI::PositiveNumber);
  f->add_option("--lead-steps", fc.lead_steps, "Lead steps")->check(CLI::PositiveNumber);
  f->add_option("--seed", fc.seed, "Noise seed");
  f->add_option("--split", fc.split, "Dataset split")->check(CLI::IsMember({"train", "val", "test"}));
  f->add_option("--cases", fc.cases, "Number of trajectories (0 = all)");
  f->add_option("--start", fc.start, "Initial step index (>= 1)");
  f->add_option("--noise-mode", fc.noise_mode, "per-step or per-member")
      ->check(CLI::IsMember({"per-step", "per-member"}));
  f->add_flag("--latest", fc.latest, "Use the latest parameters instead of the best");

  EvaluateArgs ev;
  bool no_baselines = false;
  auto* e = app.add_subcommand("evaluate", "Score a forecast archive");
  e->add_option("--forecast", ev.forecast, "Forecast archive directory")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_flag("--no-baselines", no_baselines, "Skip climatology and persistence baselines");

  bool quick = false;
  auto* s = app.add_subcommand("selftest", "Run the statistical oracle suite");
  s->add_flag("--quick", quick, "Smaller propriety scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*g) {
      gen.seed = effective_seed(gen.seed);
      return gen_data(gen);
    }
    if (*t) {
      if (*seed_opt) tr.seed = train_seed;
      return train(tr);
    }
    if (*f) {
      fc.seed = effective_seed(fc.seed);
      return forecast(fc);
    }
    if (*e) {
      ev.baselines = !no_baselines;
      return evaluate(ev);
    }
    if (*s) return selftest(quick);
  } catch (const crpslam::ConfigError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kUsage;
  } catch (const crpslam::ContractError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kUsage;
  } catch (const crpslam::NumericError& err) {
    std::fprintf(stderr, "numeric failure: %s\n", err.what());
    return kNumeric;
  } catch (const crpslam::Error& err) {
    std::fprintf(stderr, "data error: %s\n", err.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& err) {
    std::fprintf(stderr, "data error: %s\n", err.what());
    return kData;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return kUsage;
}
