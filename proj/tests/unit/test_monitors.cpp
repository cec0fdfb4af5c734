#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "levolve/errors.hpp"
#include "levolve/monitors.hpp"
#include "support.hpp"

using namespace levolve;
using levolve::testing::adaptive_simpson;
using levolve::testing::Gen;
using levolve::testing::make_geometry;

namespace {

constexpr double pi = std::numbers::pi;

// Reduced volume of the flat circle of length 2 pi with base offset eps.
double flat_reduced_volume(double tau, double eps) {
  const double s = std::sqrt(tau), a = std::sqrt(eps);
  return adaptive_simpson(
      [&](double d) {
        return std::exp(-d * d / (4.0 * s * (s - a))) / std::sqrt(4.0 * pi * tau);
      },
      -pi, pi);
}

}  // namespace

TEST(Series, VerdictsFollowProperty) {
  MonitorSeries dec = make_series("d", Abscissa::tau, {1, 2, 3}, {3, 2, 2.0005}, Property::weakly_decreasing, 1e-3);
  EXPECT_TRUE(dec.pass);
  EXPECT_NEAR(dec.worst_violation, 5e-4, 1e-12);
  dec.values[2] = 2.01;
  dec.evaluate();
  EXPECT_FALSE(dec.pass);

  const MonitorSeries cvx = make_series("c", Abscissa::inverse_sqrt_tau, {0, 1, 2}, {1, 0, 1}, Property::convex, 1e-3);
  EXPECT_TRUE(cvx.pass);
  const MonitorSeries con = make_series("c", Abscissa::inverse_sqrt_tau, {0, 1, 2}, {0, 1, 0}, Property::convex, 1e-3);
  EXPECT_FALSE(con.pass);

  const MonitorSeries bnd = make_series("b", Abscissa::index, {0, 1}, {0.5, 1.0005}, Property::bounded_above, 1e-3, 1.0);
  EXPECT_TRUE(bnd.pass);
  EXPECT_NEAR(violations(bnd)[1], 5e-4, 1e-12);

  const MonitorSeries nan = make_series("n", Abscissa::tau, {1, 2}, {1, std::nan("")}, Property::weakly_decreasing, 1e-3);
  EXPECT_FALSE(nan.pass);

  EXPECT_THROW(make_series("x", Abscissa::tau, {1, 2}, {1}, Property::convex, 1e-3), DomainError);
}

TEST(Series, VacuousSeriesPass) {
  EXPECT_TRUE(make_series("one", Abscissa::s, {0}, {5}, Property::weakly_decreasing, 1e-3).pass);
  EXPECT_TRUE(make_series("two", Abscissa::s, {0, 1}, {0, 5}, Property::convex, 1e-3).pass);
}

TEST(Series, EvaluationIsPureProperty) {
  Gen gen(101);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> grid, values;
    for (int k = 0; k < 7; ++k) {
      grid.push_back(k);
      values.push_back(gen.uniform(-1.0, 1.0));
    }
    const Property p = static_cast<Property>(gen.index(3));
    MonitorSeries s = make_series("p", Abscissa::tau, grid, values, p, gen.uniform(1e-4, 0.5), 0.2);
    const bool pass = s.pass;
    const double worst = s.worst_violation;
    s.evaluate();
    EXPECT_EQ(s.pass, pass);
    EXPECT_EQ(s.worst_violation, worst);
    const std::vector<double> v = violations(s);
    EXPECT_EQ(worst, std::max(0.0, *std::max_element(v.begin(), v.end())));
    EXPECT_EQ(pass, worst <= s.slack);
  }
}

TEST(Entropy, ClosedForms) {
  const Geometry flat = make_geometry(FlowModel::flat_circle());
  EXPECT_NEAR(entropy(flat, uniform_profile(flat, 1.0), 1.0), std::log(1.0 / (2.0 * pi)), 1e-13);
  EXPECT_NEAR(std::log(1.0 / (2.0 * pi)), -1.8379, 1e-4);
  const Geometry sphere = make_geometry(FlowModel::ricci_sphere(1.0));
  EXPECT_NEAR(entropy(sphere, uniform_profile(sphere, 1.0), 1.0), std::log(1.0 / (12.0 * pi)), 1e-13);
  EXPECT_GT(entropy(flat, bump_profile(flat, 1.0, 2.0, 0.2), 1.0), std::log(1.0 / (2.0 * pi)));
  std::vector<double> with_zero = two_point_profile(flat, 1.0, 1.0, 4.0);
  with_zero[0] = 0.0;
  EXPECT_TRUE(std::isfinite(entropy(flat, with_zero, 1.0)));
}

TEST(WEntropy, StaticFlatUniform) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 64, 0.5, 5.0);
  const double w1 = w_entropy(g, {uniform_profile(g, 1.0), 1.0});
  const double w4 = w_entropy(g, {uniform_profile(g, 4.0), 4.0});
  EXPECT_NEAR(w1, std::log(2.0 * pi) - 0.5 * std::log(4.0 * pi) - 1.0, 1e-13);
  EXPECT_NEAR(w1, -0.4276, 1e-4);
  EXPECT_NEAR(w4, w1 - 0.5 * std::log(4.0), 1e-13);
  EXPECT_NEAR(w4, -1.1207, 1e-4);
  EXPECT_LT(w4, w1);
}

TEST(WEntropy, RejectsNonPositiveDensity) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  std::vector<double> u = uniform_profile(g, 1.0);
  u[3] = 0.0;
  EXPECT_THROW(w_entropy(g, {u, 1.0}), NonPositiveDensity);
}

TEST(WEntropy, BumpDiffusionDecreasesOnEveryModel) {
  for (const auto& m : levolve::testing::builtin_models()) {
    const Geometry g = make_geometry(m.model);
    const Diffusion d(g, {bump_profile(g, 1.0, 1.2, 0.5), 1.0});
    const MonitorSeries s = w_entropy_series(d, {1.0, 1.5, 2.0, 3.0, 4.0});
    EXPECT_TRUE(s.pass) << m.name << " worst " << s.worst_violation;
  }
}

TEST(ReducedVolume, FlatCircleMatchesGaussianOracle) {
  const double eps = 1e-3;
  const Geometry g = make_geometry(FlowModel::flat_circle(), 256, eps, 5.0);
  const std::vector<double> taus{0.5, 1.0, 2.0, 4.0};
  const LDistanceField f = l_distance_field(g, 0.0, eps, taus);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    EXPECT_NEAR(reduced_volume(g, f, k), flat_reduced_volume(taus[k], eps), 1e-4) << taus[k];
  }
  EXPECT_TRUE(reduced_volume_series(g, f).pass);
}

TEST(ReducedVolume, SmallOffsetApproachesErf) {
  const double eps = 1e-8;
  const Geometry g = make_geometry(FlowModel::flat_circle(), 256, eps, 5.0);
  const std::vector<double> taus{1.0, 4.0};
  const LDistanceField f = l_distance_field(g, 0.0, eps, taus);
  EXPECT_NEAR(reduced_volume(g, f, 0), std::erf(pi / 2), 2e-4);
  EXPECT_NEAR(reduced_volume(g, f, 1), std::erf(pi / 4), 2e-4);
  EXPECT_LT(reduced_volume(g, f, 1), reduced_volume(g, f, 0));
}

TEST(ReducedVolume, NearBaseTimeIsNearOne) {
  const double eps = 1e-6;
  const Geometry g = make_geometry(FlowModel::flat_circle(), 512, eps, 5.0);
  const std::vector<double> taus{0.01};
  const LDistanceField f = l_distance_field(g, 0.0, eps, taus);
  EXPECT_NEAR(reduced_volume(g, f, 0), 1.0, 2e-2);
}

TEST(MinLbarGap, FlatCircleIsMinusTwoTau) {
  const double eps = 1e-3;
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32, eps, 5.0);
  const std::vector<double> taus{0.5, 1.0, 2.0, 4.0};
  const MonitorSeries s = min_lbar_gap(g, l_distance_field(g, 0.0, eps, taus));
  for (std::size_t k = 0; k < taus.size(); ++k) EXPECT_NEAR(s.values[k], -2.0 * taus[k], 1e-12);
  EXPECT_TRUE(s.pass);
  const std::vector<double> one{1.0};
  EXPECT_TRUE(min_lbar_gap(g, l_distance_field(g, 0.0, eps, one)).pass);
}

TEST(MinLbarGap, DecreasingOnEveryModelAndRobustToOffsetHalving) {
  const std::vector<double> taus{0.5, 1.0, 2.0, 4.0};
  for (const auto& m : levolve::testing::builtin_models()) {
    for (double eps : {1e-3, 5e-4}) {
      const Geometry g = make_geometry(m.model, 32, eps, 5.0);
      const MonitorSeries s = min_lbar_gap(g, l_distance_field(g, 0.3, eps, taus));
      EXPECT_TRUE(s.pass) << m.name << " eps " << eps << " worst " << s.worst_violation;
    }
  }
}

TEST(ThetaSeries, UniformFlatAndDegenerateGrids) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32, 0.5, 9.0);
  const Diffusion d(g, {uniform_profile(g, 1.0), 1.0});
  const MonitorSeries s = theta_series(d, d, 1.0, 4.0, {0.0, std::log(2.0)});
  EXPECT_NEAR(s.values[0], -2.0, 1e-9);
  EXPECT_NEAR(s.values[1], -4.0, 1e-9);
  EXPECT_TRUE(s.pass);
  EXPECT_TRUE(theta_series(d, d, 1.0, 4.0, {0.0}).pass);
}

TEST(ThetaSeries, EqualDiffusionsStayDecreasing) {
  const Geometry g = make_geometry(FlowModel::ricci_sphere(1.0), 32, 0.5, 6.0);
  const Diffusion d(g, {bump_profile(g, 0.5, 1.0, 0.5), 0.5});
  const MonitorSeries s = theta_series(d, d, 1.0, 4.0, {-0.2, 0.0, 0.2});
  for (double v : s.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(s.pass) << s.worst_violation;
}

TEST(Convexity, ZeroPotentialOnStaticFlatIsMinusLogW) {
  Gen gen(107);
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const DiscreteMeasure nu = DiscreteMeasure::from_density(g, normalize_density(g, gen.profile(g), 1.0), 1.0);
  const ConvexityProfile p = convexity_profile(g, nu, PotentialField::zero(g), 1.0, 4.0);
  ASSERT_EQ(p.series.values.size(), 9u);
  const double e0 = entropy(g, nu.density, 1.0);
  for (std::size_t k = 0; k < 9; ++k) {
    const double w = p.series.grid[k];
    EXPECT_NEAR(p.series.values[k], e0 - std::log(w), 1e-9);
  }
  for (double v : violations(p.series)) EXPECT_LT(v, 0.0);
  EXPECT_TRUE(p.series.pass);
  EXPECT_TRUE(std::is_sorted(p.series.grid.begin(), p.series.grid.end()));
  EXPECT_NEAR(p.series.grid.front(), 0.5, 1e-15);
  EXPECT_NEAR(p.series.grid.back(), 1.0, 1e-15);
}

TEST(Convexity, CosinePotentialOnFlatAndSphere) {
  for (const auto& m : {FlowModel::flat_circle(), FlowModel::ricci_sphere(1.0)}) {
    const Geometry g = make_geometry(m, 32);
    const DiscreteMeasure nu = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
    const ConvexityProfile p =
        convexity_profile(g, nu, PotentialField::from_cosines(g, {{0.1, 1.0}}), 1.0, 4.0);
    EXPECT_TRUE(p.series.pass) << to_string(m.kind) << " worst " << p.series.worst_violation;
  }
}

TEST(Convexity, TwoPointGridIsVacuous) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const DiscreteMeasure nu = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
  EXPECT_TRUE(convexity_profile(g, nu, PotentialField::zero(g), 1.0, 4.0, 2).series.pass);
  EXPECT_THROW(convexity_profile(g, nu, PotentialField::zero(g), 1.0, 4.0, 1), DomainError);
}

TEST(PrekopaLeindler, TauBar) {
  EXPECT_NEAR(pl_tau_bar(0.5, 1.0, 4.0), 16.0 / 9.0, 1e-15);
  for (double l : {0.1, 0.9}) {
    const double tb = pl_tau_bar(l, 1.0, 4.0);
    EXPECT_NEAR(1.0 / std::sqrt(tb), (1.0 - l) + l / 2.0, 1e-15);
  }
}

TEST(PrekopaLeindler, ConstantProfilesOnFlatCircle) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const std::vector<double> one(32, 1.0);
  const PLReport r = pl_check(g, one, one, 0.5, 1.0, 4.0);
  EXPECT_NEAR(r.tau_bar, 16.0 / 9.0, 1e-15);
  for (double v : r.v) EXPECT_NEAR(v, std::sqrt(9.0 / 8.0), 1e-9);
  EXPECT_NEAR(r.lhs, std::sqrt(9.0 / 8.0) * 2.0 * pi, 1e-8);
  EXPECT_NEAR(r.rhs, 2.0 * pi, 1e-12);
  EXPECT_NEAR(r.margin, std::sqrt(9.0 / 8.0), 1e-3);
  EXPECT_TRUE(r.pass);
}

TEST(PrekopaLeindler, ZeroProfileGivesZeroV) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 16);
  const PLReport r = pl_check(g, std::vector<double>(16, 0.0), std::vector<double>(16, 1.0), 0.5, 1.0, 4.0);
  for (double v : r.v) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(PrekopaLeindler, SphereRejectsNonZonalProfiles) {
  const Geometry g = make_geometry(FlowModel::ricci_sphere(1.0), 16);
  std::vector<double> u(16, 1.0);
  u[2] = 2.0;
  EXPECT_THROW(pl_check(g, u, std::vector<double>(16, 1.0), 0.5, 1.0, 4.0), DomainError);
  u[13] = 2.0;
  EXPECT_NO_THROW(pl_check(g, u, std::vector<double>(16, 1.0), 0.5, 1.0, 4.0));
}

TEST(PrekopaLeindler, RandomProfilesPassOnEveryModelProperty) {
  Gen gen(109);
  for (const auto& m : levolve::testing::builtin_models()) {
    const Geometry g = make_geometry(m.model, 16);
    for (int trial = 0; trial < 2; ++trial) {
      const PLReport r = pl_check(g, gen.profile(g), gen.profile(g), gen.uniform(0.2, 0.8), 1.0, 4.0);
      EXPECT_TRUE(r.pass) << m.name << " margin " << r.margin;
    }
  }
}

TEST(PrekopaLeindler, ConstructedVIsMinimalProperty) {
  Gen gen(113);
  for (const auto& m : levolve::testing::builtin_models()) {
    const Geometry g = make_geometry(m.model, 16);
    const PLReport r = pl_check(g, gen.profile(g), gen.profile(g), 0.5, 1.0, 4.0);
    EXPECT_LE(pl_hypothesis_violation(g, r, r.v), 0.0) << m.name;
    for (std::size_t k = 0; k < r.v.size(); ++k) {
      if (!(r.v[k] > 0.0)) continue;
      std::vector<double> lowered = r.v;
      lowered[k] *= 0.99;
      EXPECT_GT(pl_hypothesis_violation(g, r, lowered), 0.0) << m.name << " node " << k;
    }
  }
}

TEST(ScalingIdentity, FlatQuarterTurnAndConstantPaths) {
  const Geometry flat = make_geometry(FlowModel::flat_circle());
  const MonitorSeries a = scaling_identity_check(flat, {{0.0, 1.0, pi / 2, 4.0}});
  EXPECT_LT(a.values[0], 1e-12);
  for (const auto& m : levolve::testing::builtin_models()) {
    const Geometry g = make_geometry(m.model);
    const MonitorSeries s = scaling_identity_check(g, {{0.7, 1.0, 0.7, 4.0}, {2.0, 0.6, 2.0, 3.0}});
    for (double v : s.values) EXPECT_LT(v, 1e-6) << m.name;
  }
}

TEST(ScalingIdentity, NearCutPairsAreSkipped) {
  const Geometry flat = make_geometry(FlowModel::flat_circle());
  const MonitorSeries s = scaling_identity_check(flat, {{0.0, 1.0, pi, 4.0}, {0.0, 1.0, 1.0, 4.0}});
  EXPECT_EQ(s.values.size(), 1u);
  EXPECT_NE(s.note.find('1'), std::string::npos);
}

TEST(TransportBound, UniformOnStaticFlatIsZero) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 16);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, uniform_profile(g, 4.0), 4.0);
  const TransportBoundReport r = transport_bound_check(g, a, b);
  EXPECT_NEAR(r.lhs, 0.0, 1e-12);
  EXPECT_NEAR(r.bound, 1.0, 1e-15);
  EXPECT_TRUE(r.pass);
  EXPECT_FALSE(r.note.empty());
}

TEST(TransportBound, TwoBumpsOnStaticFlat) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, two_point_profile(g, 1.0, 1.0, 4.0, 0.5), 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, two_point_profile(g, 4.0, 1.5, 3.5, 0.5), 4.0);
  const TransportBoundReport r = transport_bound_check(g, a, b);
  EXPECT_LE(r.lhs, 1.0 + 1e-3);
  EXPECT_TRUE(r.pass);
}

TEST(TransportBound, UniformOnShrinkingSphere) {
  const Geometry g = make_geometry(FlowModel::ricci_sphere(1.0), 16);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, uniform_profile(g, 4.0), 4.0);
  const TransportBoundReport r = transport_bound_check(g, a, b);
  EXPECT_NEAR(r.bound, 2.0, 1e-15);
  EXPECT_LE(r.lhs, 2.0 + 1e-3);
  EXPECT_TRUE(r.pass);
}

TEST(TransportBound, RejectsZeroDensity) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 16);
  std::vector<double> u = uniform_profile(g, 1.0);
  u[0] = 0.0;
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, u, 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, uniform_profile(g, 4.0), 4.0);
  EXPECT_THROW(transport_bound_check(g, a, b), NonPositiveDensity);
}
