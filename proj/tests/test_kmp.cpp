#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ccv/kmp.hpp"
#include "ccv/mjp.hpp"
#include "ccv/stats.hpp"

using namespace ccv::kmp;

namespace {

Params reference(std::size_t n) { return {n, 10.0, 100.0}; }

}  // namespace

TEST(KmpProfile, Values) {
  EXPECT_DOUBLE_EQ(temperature_profile(reference(9), 0.5), 55.0);
  EXPECT_NEAR(temperature_profile(reference(9), 0.1), 19.0, 1e-12);
  EXPECT_DOUBLE_EQ(temperature_profile(Params{3, 7.0, 7.0}, 0.3), 7.0);
  const auto q = local_equilibrium_profile(reference(9));
  EXPECT_NEAR(q.beta[0], 1.0 / 19.0, 1e-15);
  EXPECT_NEAR(q.beta[0], 0.052632, 5e-7);
  EXPECT_NEAR(1.0 / q.beta[1], 28.0, 1e-12);
  EXPECT_THROW(temperature_profile(reference(9), 1.0), ccv::ConfigError);
  EXPECT_THROW(Profile({1.0, 0.0}), ccv::ConfigError);
}

TEST(KmpParams, Validation) {
  EXPECT_THROW((Params{0, 1.0, 1.0}.validate()), ccv::ConfigError);
  EXPECT_THROW((Params{3, 0.0, 1.0}.validate()), ccv::ConfigError);
  EXPECT_THROW((Params{3, 1.0, -2.0}.validate()), ccv::ConfigError);
}

TEST(KmpEvent, InteriorSplit) {
  State s{{4.0, 2.0, 9.0}};
  apply_event(s, {1, 0.5});
  EXPECT_EQ(s.energy, (std::vector<double>{3.0, 3.0, 9.0}));
  apply_event(s, {2, 0.0});
  EXPECT_EQ(s.energy, (std::vector<double>{3.0, 0.0, 12.0}));
}

TEST(KmpEvent, SplitAddsBackExactly) {
  ccv::Rng rng(9);
  for (int k = 0; k < 100000; ++k) {
    const double sum = ccv::exponential(rng, 0.01) + ccv::exponential(rng, 0.01);
    const auto [a, b] = split_energy(sum, ccv::uniform01(rng));
    ASSERT_EQ(a + b, sum);
    ASSERT_GE(a, 0.0);
    ASSERT_GE(b, 0.0);
  }
  EXPECT_EQ(split_energy(0.0, 0.3), std::make_pair(0.0, 0.0));
}

TEST(KmpEvent, BathResamples) {
  State s{{4.0, 2.0, 9.0}};
  apply_event(s, {0, 7.3});
  EXPECT_EQ(s.energy[0], 7.3);
  apply_event(s, {3, 1.25});
  EXPECT_EQ(s.energy[2], 1.25);
  EXPECT_EQ(s.energy[1], 2.0);
}

TEST(KmpEvent, InteriorSumIsBitExact) {
  const Model m(reference(12));
  ccv::Rng rng(1);
  State s = m.initial_state();
  for (int k = 0; k < 200000; ++k) {
    const Event e = m.sample_event(s, rng);
    if (e.bond == 0 || e.bond == 12) {
      m.apply(s, e);
      continue;
    }
    const double before = s.energy[e.bond - 1] + s.energy[e.bond];
    m.apply(s, e);
    ASSERT_EQ(s.energy[e.bond - 1] + s.energy[e.bond], before);
    ASSERT_GE(s.energy[e.bond - 1], 0.0);
    ASSERT_GE(s.energy[e.bond], 0.0);
  }
}

TEST(KmpModel, BondsAreUniformAndPayloadsCorrect) {
  const Model m(reference(4));
  const State s = m.initial_state();
  EXPECT_EQ(m.total_exit_rate(s), 5.0);
  ccv::Rng rng(2);
  std::vector<int> counts(5, 0);
  double left = 0.0, right = 0.0, split = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const Event e = m.sample_event(s, rng);
    ASSERT_LE(e.bond, 4u);
    ++counts[e.bond];
    if (e.bond == 0) left += e.payload;
    else if (e.bond == 4) right += e.payload;
    else {
      ASSERT_GE(e.payload, 0.0);
      ASSERT_LE(e.payload, 1.0);
      split += e.payload;
    }
  }
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.2, 4.0 * std::sqrt(0.16 / n));
  // Bath draws have mean T; exponential SD equals its mean.
  EXPECT_NEAR(left / counts[0], 10.0, 4.0 * 10.0 / std::sqrt(counts[0]));
  EXPECT_NEAR(right / counts[4], 100.0, 4.0 * 100.0 / std::sqrt(counts[4]));
  const int interior = counts[1] + counts[2] + counts[3];
  EXPECT_NEAR(split / interior, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / interior));
}

TEST(KmpMetropolis, LeftBathExample) {
  const auto p = reference(9);
  const auto q = local_equilibrium_profile(p);
  State y{std::vector<double>(9, 20.0)};
  y.energy[0] = 5.0;
  const Event e{0, 10.0};
  State y2 = y;
  apply_event(y2, e);
  const double z = metropolis_ratio(e, y, y2, q, p);
  const double ref = std::exp((0.1 - 1.0 / 19.0) * 5.0);
  EXPECT_NEAR(z, ref, 1e-12 * ref);
  EXPECT_NEAR(std::log(z), 0.236842, 5e-7);
  EXPECT_NEAR(z, 1.267241, 5e-7);
  EXPECT_NEAR(z, 1.2673, 1e-4);  // quoted value rounds up in the last digit
  const Coupling c(p, q);
  EXPECT_NEAR(c.acceptance_ratio(y, e), z, 1e-12 * z);
}

TEST(KmpMetropolis, RightBathAndInterior) {
  const auto p = reference(9);
  const auto q = local_equilibrium_profile(p);
  const Coupling c(p, q);
  State y{{12.0, 30.0, 33.0, 41.0, 50.0, 61.0, 70.0, 80.0, 95.0}};
  const Event right{9, 120.0};
  State y2 = y;
  apply_event(y2, right);
  const double zr = metropolis_ratio(right, y, y2, q, p);
  const double ref_r = std::exp((0.01 - q.beta[8]) * (120.0 - 95.0));
  EXPECT_NEAR(zr, ref_r, 1e-12 * ref_r);
  EXPECT_NEAR(c.acceptance_ratio(y, right), zr, 1e-12 * zr);

  const Event mid{4, 0.3};  // sites 4 and 5 (1-based)
  State y3 = y;
  apply_event(y3, mid);
  const double s = 41.0 + 50.0;
  const double ref_i = std::exp((q.beta[3] * 41.0 + q.beta[4] * 50.0) -
                                (q.beta[3] * 0.3 * s + q.beta[4] * (s - 0.3 * s)));
  const double zi = metropolis_ratio(mid, y, y3, q, p);
  EXPECT_NEAR(zi, ref_i, 1e-12 * ref_i);
  EXPECT_NEAR(c.acceptance_ratio(y, mid), zi, 1e-12 * zi);
}

TEST(KmpMetropolis, EqualLocalTemperaturesGiveUnitInteriorRatio) {
  const Params p{5, 20.0, 20.0};
  const auto q = local_equilibrium_profile(p);
  State y{{1.0, 17.0, 3.5, 8.0, 2.0}};
  for (std::size_t b = 1; b < 5; ++b) {
    const Event e{b, 0.83};
    State y2 = y;
    apply_event(y2, e);
    EXPECT_NEAR(metropolis_ratio(e, y, y2, q, p), 1.0, 1e-12);
  }
}

TEST(KmpMetropolis, ReverseEventIsReciprocal) {
  const auto p = reference(6);
  const auto q = local_equilibrium_profile(p);
  const State y{{3.0, 9.0, 27.0, 31.0, 60.0, 88.0}};
  // Interior: the reverse of split U is the split restoring the old share.
  for (std::size_t b = 1; b < 6; ++b) {
    const Event fwd{b, 0.71};
    State y2 = y;
    apply_event(y2, fwd);
    const double share = y.energy[b - 1] / (y.energy[b - 1] + y.energy[b]);
    const Event back{b, share};
    State y3 = y2;
    apply_event(y3, back);
    EXPECT_NEAR(metropolis_ratio(fwd, y, y2, q, p) * metropolis_ratio(back, y2, y3, q, p), 1.0,
                1e-12);
  }
  for (std::size_t b : {0u, 6u}) {
    const Event fwd{b, 44.0};
    State y2 = y;
    apply_event(y2, fwd);
    const Event back{b, b == 0 ? y.energy[0] : y.energy[5]};
    State y3 = y2;
    apply_event(y3, back);
    EXPECT_NEAR(metropolis_ratio(fwd, y, y2, q, p) * metropolis_ratio(back, y2, y3, q, p), 1.0,
                1e-12);
  }
}

TEST(KmpLte, Expectations) {
  const auto q = local_equilibrium_profile(reference(9));
  const std::vector obs{ccv::Observable::site(0), ccv::Observable::pair(0, 1)};
  const auto e = lte_expectations(q, obs);
  EXPECT_NEAR(e[0], 19.0, 1e-12);
  EXPECT_NEAR(e[1], 532.0, 1e-9);
  const std::vector same{ccv::Observable::pair(2, 2)};
  EXPECT_THROW(lte_expectations(q, same), ccv::ConfigError);
}

TEST(KmpCoupling, EveryEventIsShared) {
  const Coupling c(reference(5));
  ccv::Rng rng(3);
  const State x = c.model().initial_state();
  for (int k = 0; k < 1000; ++k) {
    const auto e = c.sample_joint_event(x, x, rng);
    ASSERT_TRUE(e.shared());
    ASSERT_EQ(*e.x_move, *e.y_move);
  }
  EXPECT_EQ(c.joint_total_rate(x, x), 6.0);
}

TEST(KmpCoupling, IdenticalCopiesUnderFlatProfileStayIdentical) {
  // Equal bath temperatures with a flat profile: every Z is 1.
  const Coupling c(Params{6, 20.0, 20.0});
  ccv::Rng rng(4);
  ccv::CoupledChainState<State> cs{c.model().initial_state(), c.model().initial_state()};
  for (int k = 0; k < 20000; ++k) {
    ccv::advance_coupled(c, cs, rng);
    ASSERT_EQ(cs.x, cs.y);
  }
  EXPECT_EQ(cs.rejections, 0u);
}

TEST(KmpCoupling, SumsConservedInBothCopiesAndBathCouples) {
  const Coupling c(reference(6));
  ccv::Rng rng(5);
  ccv::CoupledChainState<State> cs{c.model().initial_state(), State{std::vector<double>(6, 3.0)}};
  for (int k = 0; k < 20000; ++k) {
    ccv::Rng peek = rng;
    ccv::exponential(peek, 7.0);
    const auto e = c.sample_joint_event(cs.x, cs.y, peek);
    const auto x0 = cs.x, y0 = cs.y;
    const auto rej = cs.rejections;
    ccv::advance_coupled(c, cs, rng);
    const std::size_t b = e.x_move->bond;
    if (b > 0 && b < 6) {
      ASSERT_EQ(cs.x.energy[b - 1] + cs.x.energy[b], x0.energy[b - 1] + x0.energy[b]);
      ASSERT_EQ(cs.y.energy[b - 1] + cs.y.energy[b], y0.energy[b - 1] + y0.energy[b]);
    } else if (cs.rejections == rej) {
      const std::size_t site = b == 0 ? 0 : 5;
      ASSERT_EQ(cs.x.energy[site], cs.y.energy[site]);
    }
  }
}

TEST(KmpDynamics, EquilibriumMeansAndCovariance) {
  const Params p{5, 20.0, 20.0};
  const Model m(p);
  std::vector<ccv::Observable> obs;
  for (std::size_t i = 0; i < 5; ++i) obs.push_back(ccv::Observable::site(i));
  obs.push_back(ccv::Observable::pair(0, 3));
  ccv::Rng rng(6);
  ccv::RunOptions o;
  o.t_final = 5e4;
  const auto run = ccv::run_simple(m, m.initial_state(), obs, o, {}, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto e = ccv::stats::mean_estimate(run.phi[i]);
    EXPECT_NEAR(e.value, 20.0, 3.0 * e.se);
  }
  const auto cov = ccv::stats::covariance_estimate(run.phi[5], run.phi[0], run.phi[3]);
  EXPECT_NEAR(cov.value, 0.0, 3.0 * cov.se);
}

TEST(KmpDynamics, YMarginalMatchesLocalTemperatures) {
  const auto p = reference(6);
  const Coupling c(p);
  std::vector<ccv::Observable> obs;
  for (std::size_t i = 0; i < 6; ++i) obs.push_back(ccv::Observable::site(i));
  const auto eq = lte_expectations(c.profile(), obs);
  ccv::Rng rng(7);
  ccv::RunOptions o;
  o.t_final = 1e5;
  const auto run = ccv::run_coupled(c, {c.model().initial_state(), c.model().initial_state()},
                                    obs, eq, o, {}, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto y = ccv::stats::mean_estimate(run.y_average[i]);
    EXPECT_NEAR(y.value, 1.0 / c.profile().beta[i], 3.0 * y.se) << i;
  }
}
