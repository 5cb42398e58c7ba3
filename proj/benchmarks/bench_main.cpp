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

#include <benchmark/benchmark.h>

#include <vector>

#include "crpslam/network.hpp"
#include "crpslam/ops.hpp"
#include "crpslam/scoring.hpp"
#include "crpslam/spectra.hpp"
#include "crpslam/trainer.hpp"

using namespace crpslam;

namespace {

DomainSpec default_domain() { return DomainSpec{}; }

ModelInputWindow random_window(const DomainSpec& dom, Rng& rng) {
  Trajectory traj;
  for (int t = 0; t < 3; ++t) {
    traj.states.push_back(gaussian_sample<float>({dom.state_vars, dom.height, dom.width}, rng));
    traj.forcings.push_back(gaussian_sample<float>({dom.forcing_vars, dom.height, dom.width}, rng));
  }
  traj.statics = gaussian_sample<float>({dom.static_vars, dom.height, dom.width}, rng);
  return build_window<float>(dom, traj, 1);
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const auto x = gaussian_sample<float>({c, hw, hw}, rng);
  const auto w = gaussian_sample<float>({c, c, 3, 3}, rng);
  const auto b = FieldTensor::zeros({c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * hw * hw));
}
BENCHMARK(BM_Conv2d)->Args({32, 24})->Args({64, 12});

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  const auto x = gaussian_sample<float>({32, 24, 24}, rng).detach(true);
  const auto w = gaussian_sample<float>({32, 32, 3, 3}, rng).detach(true);
  const auto b = FieldTensor::zeros({32}, true);
  for (auto _ : state) {
    backward(sum(conv2d(x, w, b)));
    w.node()->grad.clear();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_ForecasterForward(benchmark::State& state) {
  const auto dom = default_domain();
  const auto params = net::init_params<float>({}, dom, 1);
  Rng rng(3);
  const auto window = random_window(dom, rng);
  std::vector<net::NoiseVector> z;
  for (std::int64_t m = 0; m < state.range(0); ++m) {
    z.push_back(net::sample_noise(1, 32, static_cast<std::size_t>(m), 0));
  }
  for (auto _ : state) benchmark::DoNotOptimize(net::forward_ensemble(window, z, params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForecasterForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainingSample(benchmark::State& state) {
  const auto dom = default_domain();
  auto params = net::init_params<float>({}, dom, 1).detached(true);
  Rng rng(4);
  const auto window = random_window(dom, rng);
  const auto predictor = train::network_predictor(params);
  for (auto _ : state) {
    const auto loss = train::loss_step<float>(predictor, {window}, 32, 4, train::Estimator::kFair, 9);
    backward(loss);
    params.zero_grad();
  }
}
BENCHMARK(BM_TrainingSample)->Unit(benchmark::kMillisecond);

void BM_CrpsFair(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(scoring::crps_fair<double>(x, 0.5));
}
BENCHMARK(BM_CrpsFair)->Arg(4)->Arg(25)->Arg(100);

void BM_RadialSpectrum(benchmark::State& state) {
  Rng rng(6);
  std::vector<double> f(16 * 16);
  for (auto& v : f) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(spectra::radial_spectrum(f, 16, 16));
}
BENCHMARK(BM_RadialSpectrum);

}  // namespace
BENCHMARK_MAIN();
