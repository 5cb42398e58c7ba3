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

// Statistical oracle suite behind `crpslam selftest`.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "commands.hpp"
#include "crpslam/network.hpp"
#include "crpslam/ops.hpp"
#include "crpslam/scoring.hpp"
#include "crpslam/spectra.hpp"
#include "crpslam/trainer.hpp"

namespace crpslam::cli {

namespace {

struct Report {
  int failures = 0;
  void line(bool ok, const std::string& name, const std::string& detail) {
    std::printf("[%s] %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!ok) ++failures;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void unbiasedness(Report& r, std::size_t draws) {
  const double target = scoring::crps_gaussian({0.0, 1.0}, 0.5);
  Rng rng(derive_seed(1, StreamPurpose::kTest, 1));
  for (std::size_t n : {2, 4, 8, 16}) {
    std::vector<double> x(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      for (auto& v : x) v = rng.normal();
      acc += scoring::crps_fair<double>(x, 0.5);
    }
    const double mean = acc / static_cast<double>(draws);
    const double rel = std::abs(mean - target) / target;
    r.line(rel < 0.01, "fair CRPS unbiased, N=" + std::to_string(n),
           fmt("MC %.5f vs %.6f, rel err %.4f (bound 0.01)", mean, target, rel));
  }
}

void biased_excess(Report& r, std::size_t draws) {
  Rng rng(derive_seed(1, StreamPurpose::kTest, 2));
  const double expected = 1.0 / std::sqrt(std::numbers::pi) / 2.0;
  double s = 0.0, s2 = 0.0;
  std::vector<double> x(2);
  for (std::size_t i = 0; i < draws; ++i) {
    for (auto& v : x) v = rng.normal();
    const double d = scoring::crps_biased<double>(x, 0.5) - scoring::crps_fair<double>(x, 0.5);
    s += d;
    s2 += d * d;
  }
  const double m = s / static_cast<double>(draws);
  const double sd = std::sqrt((s2 / static_cast<double>(draws) - m * m) / static_cast<double>(draws));
  r.line(std::abs(m - expected) <= 3.0 * sd, "biased minus fair, N=2",
         fmt("MC %.5f vs %.5f, 3 sigma %.5f", m, expected, 3.0 * sd));
}

void single_member_rejected(Report& r) {
  bool threw = false;
  try {
    const std::vector<double> one{0.1};
    (void)scoring::crps_fair<double>(one, 0.0);
  } catch (const EstimatorError&) {
    threw = true;
  }
  r.line(threw, "fair CRPS rejects N=1", threw ? "EstimatorError raised" : "no error");
}

void propriety(Report& r, std::size_t draws) {
  const double mus[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const double sigmas[] = {0.5, 0.75, 1.0, 1.25, 1.5};
  double score[5][5] = {};
  Rng rng(derive_seed(1, StreamPurpose::kTest, 3));
  std::vector<double> e(4), x(4);
  for (std::size_t i = 0; i < draws; ++i) {
    const double y = rng.normal();
    for (auto& v : e) v = rng.normal();
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        for (int k = 0; k < 4; ++k) x[k] = mus[a] + sigmas[b] * e[k];
        score[a][b] += scoring::crps_fair<double>(x, y);
      }
    }
  }
  int best_a = 0, best_b = 0;
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) {
      if (score[a][b] < score[best_a][best_b]) {
        best_a = a;
        best_b = b;
      }
    }
  }
  r.line(best_a == 2 && best_b == 2, "propriety scan minimum",
         fmt("argmin (mu %.2f, sigma %.2f), score %.5f", mus[best_a], sigmas[best_b],
             score[best_a][best_b] / static_cast<double>(draws)));
}

void gradient_check(Report& r) {
  DomainSpec dom;
  dom.height = dom.width = 16;
  net::ForecasterConfig cfg;
  cfg.noise_dim = 4;
  cfg.embed_dim = 8;
  cfg.channels = {4, 8};
  cfg.bottleneck_hidden = 8;
  auto params = net::init_params<double>(cfg, dom, 7).detached(true);
  Rng rng(derive_seed(1, StreamPurpose::kTest, 4));
  Trajectory traj;
  for (int t = 0; t < 3; ++t) {
    traj.states.push_back(gaussian_sample<float>({dom.state_vars, 16, 16}, rng));
    traj.forcings.push_back(gaussian_sample<float>({dom.forcing_vars, 16, 16}, rng));
  }
  traj.statics = gaussian_sample<float>({dom.static_vars, 16, 16}, rng);
  const auto window = build_window<double>(dom, traj, 1);
  std::vector<net::NoiseVector> z;
  for (std::size_t m = 0; m < 3; ++m) z.push_back(net::sample_noise(3, cfg.noise_dim, m, 0));
  const auto truth = crop2d(window.target, dom.boundary, dom.boundary, 8, 8);
  const auto loss_of = [&](const net::ForecasterParams<double>& p) {
    return train::ensemble_crps_loss(net::forward_ensemble(window, z, p), truth,
                                     train::Estimator::kFair);
  };
  backward(loss_of(params));

  std::vector<std::string> names;
  for (const auto& [n, _] : params.tensors) names.push_back(n);
  double worst = 0.0;
  std::size_t probed = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    const auto& name = names[rng.below(names.size())];
    auto& t = params.tensors.at(name);
    const std::size_t i = rng.below(t.numel());
    const double analytic = t.grad().empty() ? 0.0 : t.grad()[i];
    const double h = 1e-6;
    const double saved = t.values()[i];
    t.mutable_values()[i] = saved + h;
    const double up = loss_of(params).item();
    t.mutable_values()[i] = saved - h;
    const double down = loss_of(params).item();
    t.mutable_values()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
    ++probed;
  }
  r.line(worst < 1e-3, "autodiff vs central differences",
         fmt("%.0f probes, max rel err %.2e (bound 1e-3)", static_cast<double>(probed), worst));
}

void spectrum_checks(Report& r) {
  const std::size_t n = 16;
  std::vector<double> f(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      f[i * n + j] = std::sin(2.0 * std::numbers::pi * 3.0 * static_cast<double>(j) / n);
    }
  }
  const auto s = spectra::radial_spectrum(f, n, n);
  double in_bin = 0.0;
  for (std::size_t b = 0; b < s.energy.size(); ++b) {
    if (std::lround(s.wavenumber[b]) == 3) in_bin += s.energy[b] * static_cast<double>(s.count[b]);
  }
  const double frac = in_bin / s.total_energy();
  r.line(frac >= 0.99, "sinusoid energy concentration", fmt("%.4f in bin 3 (bound 0.99)", frac));

  Rng rng(derive_seed(1, StreamPurpose::kTest, 5));
  double mean = 0.0;
  for (auto& v : f) {
    v = rng.normal();
    mean += v;
  }
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  var /= static_cast<double>(f.size());
  const double total = spectra::radial_spectrum(f, n, n).total_energy();
  const double rel = std::abs(total - var) / var;
  r.line(rel < 0.01, "Parseval", fmt("spectrum %.6f vs variance %.6f, rel %.2e", total, var, rel));
}

}  // namespace

int selftest(bool quick) {
  Report r;
  unbiasedness(r, 200000);
  biased_excess(r, 200000);
  single_member_rejected(r);
  propriety(r, quick ? 10000 : 40000);
  gradient_check(r);
  spectrum_checks(r);
  std::printf("%s: %d failure(s)\n", r.failures == 0 ? "selftest passed" : "selftest FAILED",
              r.failures);
  return r.failures == 0 ? kOk : kNumeric;
}

}  // namespace crpslam::cli
