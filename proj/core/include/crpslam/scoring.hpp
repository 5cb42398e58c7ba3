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

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crpslam/errors.hpp"

namespace crpslam::scoring {

/// Normal forecast distribution used as an analytic CRPS reference.
struct GaussianForecast {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Member-major view of an ensemble over a set of points:
/// value(n, g) = data[n * points + g].
template <std::floating_point T>
struct EnsembleView {
  std::span<const T> data;
  std::size_t members = 0;
  std::size_t points = 0;

  EnsembleView(std::span<const T> values, std::size_t n_members)
      : data(values), members(n_members),
        points(n_members ? values.size() / n_members : 0) {
    if (n_members == 0 || points * n_members != values.size()) {
      throw DimensionError("EnsembleView: " + std::to_string(values.size()) +
                           " values do not split into " +
                           std::to_string(n_members) + " members");
    }
  }

  T operator()(std::size_t member, std::size_t point) const {
    return data[member * points + point];
  }
};

namespace detail {

template <std::floating_point T>
double pair_abs_sum(std::span<const T> members) {
  double s = 0.0;
  for (std::size_t n = 0; n < members.size(); ++n) {
    for (std::size_t m = 0; m < members.size(); ++m) {
      s += std::abs(static_cast<double>(members[n]) - static_cast<double>(members[m]));
    }
  }
  return s;
}

template <std::floating_point T>
double obs_abs_mean(std::span<const T> members, double obs) {
  double s = 0.0;
  for (auto x : members) s += std::abs(static_cast<double>(x) - obs);
  return s / static_cast<double>(members.size());
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Fair (ensemble-size unbiased) CRPS:
///   (1/N) sum |x_n - x| - 1/(2N(N-1)) sum_n sum_m |x_n - x_m|.
/// Throws EstimatorError for N < 2.
template <std::floating_point T>
double crps_fair(std::span<const T> members, T observation) {
  const std::size_t n = members.size();
  if (n < 2) {
    throw EstimatorError("crps_fair: needs at least 2 members, got " +
                         std::to_string(n));
  }
  const double nd = static_cast<double>(n);
  return detail::obs_abs_mean(members, static_cast<double>(observation)) -
         detail::pair_abs_sum(members) / (2.0 * nd * (nd - 1.0));
}

/// Plug-in CRPS of the empirical ensemble distribution; spread coefficient
/// 1/(2N^2). Defined for N >= 1.
template <std::floating_point T>
double crps_biased(std::span<const T> members, T observation) {
  const std::size_t n = members.size();
  if (n < 1) throw EstimatorError("crps_biased: empty ensemble");
  const double nd = static_cast<double>(n);
  return detail::obs_abs_mean(members, static_cast<double>(observation)) -
         detail::pair_abs_sum(members) / (2.0 * nd * nd);
}

/// Standard normal CDF and density.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Closed-form CRPS of N(mean, stddev^2) against an observation.
double crps_gaussian(const GaussianForecast& forecast, double observation);

/// Subgradient of crps_fair with respect to each member; ties contribute 0.
template <std::floating_point T>
std::vector<double> crps_fair_gradient(std::span<const T> members, T observation) {
  const std::size_t n = members.size();
  if (n < 2) {
    throw EstimatorError("crps_fair_gradient: needs at least 2 members, got " +
                         std::to_string(n));
  }
  const double nd = static_cast<double>(n);
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pair = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) pair += detail::sign(static_cast<double>(members[i]) - members[j]);
    }
    grad[i] = detail::sign(static_cast<double>(members[i]) - observation) / nd -
              pair / (nd * (nd - 1.0));
  }
  return grad;
}

/// Grid mean of crps_fair / crps_biased. Members vary slowest.
template <std::floating_point T>
double mean_crps(const EnsembleView<T>& ensemble, std::span<const T> truth,
                 bool fair = true) {
  if (truth.size() != ensemble.points) {
    throw DimensionError("mean_crps: truth has " + std::to_string(truth.size()) +
                         " points, ensemble has " + std::to_string(ensemble.points));
  }
  if (fair && ensemble.members < 2) {
    throw EstimatorError("mean_crps: fair estimator needs at least 2 members");
  }
  std::vector<T> column(ensemble.members);
  double acc = 0.0;
  for (std::size_t g = 0; g < ensemble.points; ++g) {
    for (std::size_t n = 0; n < ensemble.members; ++n) column[n] = ensemble(n, g);
    acc += fair ? crps_fair<T>(column, truth[g]) : crps_biased<T>(column, truth[g]);
  }
  return acc / static_cast<double>(ensemble.points);
}

/// Root of the mean of per-point squared errors.
template <std::floating_point T>
double rmse(std::span<const T> squared_errors) {
  if (squared_errors.empty()) throw DimensionError("rmse: empty field");
  double acc = 0.0;
  for (auto e : squared_errors) acc += static_cast<double>(e);
  return std::sqrt(acc / static_cast<double>(squared_errors.size()));
}

/// Per-point squared error of the ensemble mean.
template <std::floating_point T>
std::vector<double> ensemble_mean_squared_error(const EnsembleView<T>& ensemble,
                                                std::span<const T> truth) {
  if (truth.size() != ensemble.points) {
    throw DimensionError("ensemble_mean_squared_error: size mismatch");
  }
  std::vector<double> out(ensemble.points);
  for (std::size_t g = 0; g < ensemble.points; ++g) {
    double m = 0.0;
    for (std::size_t n = 0; n < ensemble.members; ++n) m += ensemble(n, g);
    m /= static_cast<double>(ensemble.members);
    const double e = m - static_cast<double>(truth[g]);
    out[g] = e * e;
  }
  return out;
}

/// Spread and skill accumulated over one or more fields, reduced at the end.
struct SpreadSkill {
  double ratio = 0.0;
  /// mean of unbiased ensemble variance over points
  double mean_variance = 0.0;
  /// mean squared ensemble-mean error over points
  double mean_squared_error = 0.0;
  std::optional<std::string> warning;
};

class SpreadSkillAccumulator {
 public:
  explicit SpreadSkillAccumulator(bool finite_ensemble_correction = true)
      : corrected_(finite_ensemble_correction) {}

  template <std::floating_point T>
  void add(const EnsembleView<T>& ensemble, std::span<const T> truth) {
    if (ensemble.members < 2) {
      throw EstimatorError("ssr: needs at least 2 members");
    }
    if (truth.size() != ensemble.points) throw DimensionError("ssr: size mismatch");
    if (members_ != 0 && members_ != ensemble.members) {
      throw DimensionError("ssr: member count changed between fields");
    }
    members_ = ensemble.members;
    const double nd = static_cast<double>(ensemble.members);
    for (std::size_t g = 0; g < ensemble.points; ++g) {
      double m = 0.0;
      for (std::size_t n = 0; n < ensemble.members; ++n) m += ensemble(n, g);
      m /= nd;
      double var = 0.0;
      for (std::size_t n = 0; n < ensemble.members; ++n) {
        const double d = ensemble(n, g) - m;
        var += d * d;
      }
      var_sum_ += var / (nd - 1.0);
      const double e = m - static_cast<double>(truth[g]);
      sq_err_sum_ += e * e;
      ++points_;
    }
  }

  SpreadSkill result() const;

 private:
  bool corrected_;
  std::size_t members_ = 0;
  std::size_t points_ = 0;
  double var_sum_ = 0.0;
  double sq_err_sum_ = 0.0;
};

/// sqrt(((N+1)/N) * mean unbiased variance / mean squared ensemble-mean
/// error). Zero spread gives 0; zero skill with positive spread gives
/// +infinity and a warning.
template <std::floating_point T>
SpreadSkill ssr(const EnsembleView<T>& ensemble, std::span<const T> truth,
                bool finite_ensemble_correction = true) {
  SpreadSkillAccumulator acc(finite_ensemble_correction);
  acc.add(ensemble, truth);
  return acc.result();
}

}  // namespace crpslam::scoring
