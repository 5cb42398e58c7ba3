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

#include "crpslam/scoring.hpp"

namespace crpslam::scoring {

double crps_gaussian(const GaussianForecast& forecast, double observation) {
  if (!(forecast.stddev > 0.0)) {
    throw ConfigError("crps_gaussian: stddev must be > 0, got " +
                      std::to_string(forecast.stddev));
  }
  const double z = (observation - forecast.mean) / forecast.stddev;
  return forecast.stddev * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                            1.0 / std::sqrt(std::numbers::pi));
}

SpreadSkill SpreadSkillAccumulator::result() const {
  SpreadSkill out;
  if (points_ == 0) throw DimensionError("ssr: no points accumulated");
  const double nd = static_cast<double>(members_);
  const double factor = corrected_ ? (nd + 1.0) / nd : 1.0;
  out.mean_variance = var_sum_ / static_cast<double>(points_);
  out.mean_squared_error = sq_err_sum_ / static_cast<double>(points_);
  if (out.mean_variance == 0.0) {
    out.ratio = 0.0;
  } else if (out.mean_squared_error == 0.0) {
    out.ratio = std::numeric_limits<double>::infinity();
    out.warning = "ssr: ensemble-mean error is zero; ratio reported as +inf";
  } else {
    out.ratio = std::sqrt(factor * out.mean_variance / out.mean_squared_error);
  }
  return out;
}

}  // namespace crpslam::scoring
