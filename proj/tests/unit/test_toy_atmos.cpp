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


#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "crpslam/domain.hpp"
#include "crpslam/rng.hpp"
#include "crpslam/scoring.hpp"
#include "crpslam/toy_atmos.hpp"

namespace crpslam::toy {
namespace {

// Smaller grid with a short spin-up, for speed.
ToyDynamicsConfig small_config() {
  ToyDynamicsConfig c;
  c.parent_size = 32;
  c.lam_size = 16;
  c.boundary = 4;
  c.steps = 6;
  c.burn_in = 20;
  c.noise_correlation = 3.0;
  return c;
}

ToyDynamicsConfig quiescent(ToyDynamicsConfig c) {
  c.velocity_x = c.velocity_y = c.velocity_amplitude = 0.0;
  c.diffusion = c.damping = c.coupling = c.diurnal_amplitude = c.noise_amplitude = 0.0;
  return c;
}

double field_sum(const ParentState& s) {
  double acc = 0;
  for (double v : s) acc += v;
  return acc;
}

TEST(ToyConfigTest, DefaultsSatisfyStabilityBounds) {
  const ToyDynamicsConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_LE(c.advective_courant(), 0.5);
  EXPECT_LE(c.diffusive_number(), 0.25);
  EXPECT_EQ(c.domain().height, 24u);
  EXPECT_EQ(c.domain().interior_height(), 16u);
}

TEST(ToyConfigTest, StabilityViolationsRejected) {
  auto fast = small_config();
  fast.velocity_x = 0.6;
  EXPECT_THROW(fast.validate(), ConfigError);
  EXPECT_THROW(ToyAtmosphere(fast, std::vector<double>(32 * 32, 0.0)), ConfigError);
  auto diffusive = small_config();
  diffusive.diffusion = 0.3;
  EXPECT_THROW(diffusive.validate(), ConfigError);
  auto cramped = small_config();
  cramped.parent_size = 24;
  EXPECT_THROW(cramped.validate(), ConfigError);
  EXPECT_THROW(make_dataset(fast, 1, 0, 0, 0), ConfigError);
}

TEST(ToyAtmosphereTest, DiffusionConservesMass) {
  auto c = quiescent(small_config());
  c.variables = 1;
  c.diffusion = 0.2;
  ToyAtmosphere atm(c, std::vector<double>(32 * 32, 0.0));
  ParentState s = atm.zero_state();
  s[10 * 32 + 17] = 100.0;
  const auto ep = simulate_from(atm, s, 0.0, 1, 10);
  for (const auto& p : ep.parent_states) EXPECT_NEAR(field_sum(p), 100.0, 1e-4);
  // The spot actually spread.
  EXPECT_LT(ep.parent_states.back()[10 * 32 + 17], 50.0);
}

TEST(ToyAtmosphereTest, ZeroDynamicsIsConstant) {
  const auto c = quiescent(small_config());
  ToyAtmosphere atm(c, make_orography(c, 3));
  ParentState s = atm.zero_state();
  Rng rng(4);
  for (auto& v : s) v = rng.normal();
  const auto ep = simulate_from(atm, s, 0.0, 5, 5);
  for (const auto& st : ep.trajectory.states) {
    for (std::size_t i = 0; i < st.numel(); ++i) ASSERT_EQ(st.at(i), ep.trajectory.states[0].at(i));
  }
}

TEST(ToyAtmosphereTest, SameSeedBitIdentical) {
  const auto c = small_config();
  const auto a = simulate_trajectory(c, 77);
  const auto b = simulate_trajectory(c, 77);
  const auto other = simulate_trajectory(c, 78);
  ASSERT_EQ(a.states.size(), c.steps + 1);
  bool differs = false;
  for (std::size_t t = 0; t < a.states.size(); ++t) {
    for (std::size_t i = 0; i < a.states[t].numel(); ++i) {
      ASSERT_EQ(a.states[t].at(i), b.states[t].at(i));
      differs = differs || a.states[t].at(i) != other.states[t].at(i);
    }
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.start_hour, b.start_hour);
}

TEST(ToyAtmosphereTest, DifferentForcingSeedsDiverge) {
  const ToyDynamicsConfig c;
  ToyAtmosphere atm(c, make_orography(c, 8));
  const auto d = c.domain();
  std::vector<double> sq(6, 0.0);
  for (std::uint64_t pair = 0; pair < 8; ++pair) {
    const auto start = simulate_trajectory(atm, 100 + pair).parent_states.back();
    const auto a = simulate_from(atm, start, 0.0, 1000 + 2 * pair, 5);
    const auto b = simulate_from(atm, start, 0.0, 1001 + 2 * pair, 5);
    for (std::size_t t = 0; t <= 5; ++t) {
      const auto xa = crop_interior(d, a.trajectory.states[t]);
      const auto xb = crop_interior(d, b.trajectory.states[t]);
      for (std::size_t i = 0; i < xa.numel(); ++i) sq[t] += std::pow(xa.at(i) - xb.at(i), 2);
    }
  }
  EXPECT_EQ(sq[0], 0.0);
  for (std::size_t t = 1; t <= 5; ++t) EXPECT_GT(sq[t], sq[t - 1]) << "step " << t;
}

TEST(ToyAtmosphereTest, BoundaryEqualsParentRestriction) {
  const auto c = small_config();
  ToyAtmosphere atm(c, make_orography(c, 9));
  const auto ep = simulate_trajectory(atm, 10);
  const auto d = c.domain();
  const std::size_t n = c.parent_size, l = c.lam_size, off = atm.lam_offset();
  for (std::size_t t = 0; t < ep.parent_states.size(); ++t) {
    const auto& x = ep.trajectory.states[t];
    for (std::size_t k = 0; k < c.variables; ++k) {
      for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
          if (d.is_interior(i, j)) continue;
          ASSERT_EQ(x.at((k * l + i) * l + j),
                    static_cast<float>(ep.parent_states[t][k * n * n + (i + off) * n + j + off]));
        }
      }
    }
  }
}

TEST(ToyAtmosphereTest, ForcingEncodesTimeOfDay) {
  const auto c = small_config();
  ToyAtmosphere atm(c, make_orography(c, 1));
  const auto f = atm.forcing(6.0);
  EXPECT_FLOAT_EQ(f.at(0), 1.0f);
  EXPECT_NEAR(f.at(c.lam_size * c.lam_size), 0.0f, 1e-7);
  Trajectory tr;
  tr.start_hour = 21.0;
  EXPECT_DOUBLE_EQ(hour_of_day(tr, 2, 3.0), 3.0);
}

TEST(OrographyTest, Standardized) {
  const ToyDynamicsConfig c;
  const auto o = make_orography(c, 12);
  double m = 0, v = 0;
  for (double x : o) m += x;
  m /= o.size();
  for (double x : o) v += (x - m) * (x - m);
  v /= o.size();
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(DatasetTest, SplitsSeedsAndStats) {
  const auto c = small_config();
  const auto ds = make_dataset(c, 4, 2, 3, 21);
  EXPECT_EQ(ds.train.size(), 4u);
  EXPECT_EQ(ds.val.size(), 2u);
  EXPECT_EQ(ds.test.size(), 3u);
  std::set<std::uint64_t> seeds;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& tr : *split) seeds.insert(tr.seed);
  }
  EXPECT_EQ(seeds.size(), 9u);
  const auto stats = compute_stats(ds.train);
  EXPECT_EQ(stats.mean, ds.stats.mean);
  EXPECT_EQ(stats.stddev, ds.stats.stddev);
  const auto again = make_dataset(c, 4, 2, 3, 21);
  EXPECT_EQ(again.stats.mean, ds.stats.mean);
  EXPECT_EQ(again.id(), ds.id());
  EXPECT_NE(make_dataset(c, 4, 2, 3, 22).id(), ds.id());
}

TEST(DatasetTest, NormalizeOnce) {
  const auto c = small_config();
  const auto ds = make_dataset(c, 2, 1, 1, 5);
  const auto n = normalized(ds);
  EXPECT_TRUE(n.is_normalized);
  EXPECT_THROW(normalized(n), ContractError);
  // Training split is standardized.
  double m = 0;
  std::size_t count = 0;
  for (const auto& tr : n.train) {
    for (const auto& s : tr.states) {
      for (std::size_t i = 0; i < s.numel() / 2; ++i, ++count) m += s.at(i);
    }
  }
  EXPECT_NEAR(m / count, 0.0, 1e-4);
}

TEST(ClimatologyTest, MembersAreTrainingStatesAtTheHour) {
  const auto c = small_config();
  const auto ds = make_dataset(c, 3, 0, 1, 6);
  const double hour = hour_of_day(ds.train[1], 2, c.step_hours);
  Rng rng(7);
  const auto single = climatology_ensemble(ds, hour, 1, rng);
  ASSERT_EQ(single.size(), 1u);
  const auto members = climatology_ensemble(ds, hour, 12, rng);
  for (const auto& m : members) {
    bool found = false;
    for (const auto& tr : ds.train) {
      for (std::size_t t = 0; t < tr.states.size() && !found; ++t) {
        if (std::abs(hour_of_day(tr, t, c.step_hours) - hour) > 1e-9) continue;
        const auto x = crop_interior(ds.domain, tr.states[t]);
        found = std::equal(x.values().begin(), x.values().end(), m.values().begin());
      }
    }
    EXPECT_TRUE(found);
  }
  EXPECT_THROW(climatology_ensemble(ds, 1.5, 2, rng), DataError);
}

// Regression values from the default dynamics, dataset seed 2024,
// 20 training and 5 test trajectories, 16 climatology members, starts
// t = 1, 7, 13, normalized units.
constexpr double kPinnedClimatology = 0.5224162;
constexpr double kPinnedPersistence = 0.3551088;

TEST(ClimatologyTest, PersistenceBeatsClimatologyAtLeadOne) {
  const ToyDynamicsConfig c;
  const auto ds = normalized(make_dataset(c, 20, 0, 5, 2024));
  const auto d = ds.domain;
  double clim = 0, pers = 0;
  std::size_t cases = 0;
  Rng rng(derive_seed(2024, StreamPurpose::kTest, 0));
  for (const auto& tr : ds.test) {
    for (std::size_t t0 : {1u, 7u, 13u}) {
      const auto truth = crop_interior(d, tr.states[t0 + 1]);
      const auto persisted = crop_interior(d, tr.states[t0]);
      const auto members = climatology_ensemble(ds, hour_of_day(tr, t0 + 1, c.step_hours), 16, rng);
      std::vector<float> column(members.size());
      for (std::size_t i = 0; i < truth.numel(); ++i) {
        for (std::size_t m = 0; m < members.size(); ++m) column[m] = members[m].at(i);
        clim += scoring::crps_fair<float>(column, truth.at(i));
        pers += std::abs(persisted.at(i) - truth.at(i));
      }
      cases += truth.numel();
    }
  }
  clim /= cases;
  pers /= cases;
  EXPECT_GT(clim, pers);
  EXPECT_NEAR(clim, kPinnedClimatology, 1e-6);
  EXPECT_NEAR(pers, kPinnedPersistence, 1e-6);
}

}  // namespace
}  // namespace crpslam::toy
