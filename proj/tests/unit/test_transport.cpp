#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "levolve/errors.hpp"
#include "levolve/ot_solvers.hpp"
#include "levolve/transport.hpp"
#include "support.hpp"

using namespace levolve;
using levolve::testing::adaptive_simpson;
using levolve::testing::Gen;
using levolve::testing::make_geometry;

namespace {

constexpr double pi = std::numbers::pi;

DiscreteMeasure two_atoms(double a, double b, double tau) {
  DiscreteMeasure m;
  m.support = {a, b};
  m.weights = {0.5, 0.5};
  m.tau = tau;
  return m;
}

// Oracle for small LPs: the optimum over all vertices of the transportation
// polytope is found by brute force over permutations when both sides are
// uniform with equal size (Birkhoff).
double assignment_oracle(const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(c.rows());
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += c(i, p[i]);
    best = std::min(best, s / n);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

std::vector<double> random_simplex(Gen& gen, std::size_t n) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) s += (x = gen.uniform(0.05, 1.0));
  for (double& x : w) x /= s;
  return w;
}

Eigen::MatrixXd random_cost(Gen& gen, std::size_t r, std::size_t c) {
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = gen.uniform(-1.0, 3.0);
  return m;
}

}  // namespace

TEST(CostMatrix, FlatQuarterTurn) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  const Eigen::MatrixXd c = cost_matrix(g, {0.0}, 1.0, {pi / 2}, 4.0);
  ASSERT_EQ(c.rows(), 1);
  EXPECT_NEAR(c(0, 0), pi * pi / 8, 1e-12);
}

TEST(CostMatrix, StaticFlatDiagonalIsZero) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  const std::vector<double> pts{0.0, 1.0, 2.5, 4.0};
  const Eigen::MatrixXd c = cost_matrix(g, pts, 1.0, pts, 2.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(c(i, i), 0.0, 1e-14);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) {
        EXPECT_GT(c(i, j), 0.0);
      }
}

TEST(CostMatrix, ShrinkingSphereDiagonal) {
  const Geometry g = make_geometry(FlowModel::ricci_sphere(1.0));
  const std::vector<double> pts{0.4, 1.3};
  const Eigen::MatrixXd c = cost_matrix(g, pts, 1.0, pts, 4.0);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(c(i, i), 1.6101, 1e-4);
}

TEST(CostMatrix, FailedEntryNamesCoordinates) {
  const Geometry g = make_geometry(FlowModel::ricci_sphere(1.0));
  CurveOptions o;
  o.max_iterations = 0;
  try {
    cost_matrix(g, {0.2}, 1.0, {1.9}, 4.0, o);
    FAIL() << "expected NoConvergence";
  } catch (const NoConvergence& e) {
    EXPECT_NE(std::string(e.what()).find("cost entry"), std::string::npos);
  }
}

TEST(OtSolve, DiracToDirac) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  const DiscreteMeasure a = DiscreteMeasure::dirac(0.0, 1.0), b = DiscreteMeasure::dirac(pi / 2, 4.0);
  const TransportPlan p = wasserstein_plan(g, a, b);
  EXPECT_EQ(p.plan.rows(), 1);
  EXPECT_DOUBLE_EQ(p.plan(0, 0), 1.0);
  EXPECT_NEAR(p.cost, pi * pi / 8, 1e-12);
  EXPECT_NEAR(wasserstein_v(g, a, b), pi * pi / 8, 1e-12);
}

TEST(OtSolve, IdentityPairingOnTwoAtoms) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  const DiscreteMeasure a = two_atoms(0.0, pi, 1.0), b = two_atoms(0.0, pi, 4.0);
  const Eigen::MatrixXd c = cost_matrix(g, a.support, 1.0, b.support, 4.0);
  EXPECT_NEAR(c(0, 1), pi * pi / 2, 1e-10);
  EXPECT_NEAR(c(1, 0), pi * pi / 2, 1e-10);
  // The plan family is [[t, 1/2 - t], [1/2 - t, t]]; cost is linear in t.
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100; ++k) {
    const double t = 0.005 * k;
    best = std::min(best, t * (c(0, 0) + c(1, 1)) + (0.5 - t) * (c(0, 1) + c(1, 0)));
  }
  const TransportPlan p = ot_solve(a, b, c);
  EXPECT_NEAR(p.cost, best, 1e-14);
  EXPECT_NEAR(p.cost, 0.0, 1e-14);
  EXPECT_NEAR(p.plan(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p.plan(1, 1), 0.5, 1e-15);
}

TEST(OtSolve, EntropicApproachesExact) {
  const Geometry g = make_geometry(FlowModel::flat_circle());
  const DiscreteMeasure a = two_atoms(0.0, pi, 1.0), b = two_atoms(0.0, pi, 4.0);
  const Eigen::MatrixXd c = cost_matrix(g, a.support, 1.0, b.support, 4.0);
  const TransportPlan p = ot_solve(a, b, c, SolverMode::entropic(1e-3));
  EXPECT_NEAR(p.cost, 0.0, 1e-3);
  EXPECT_GE(p.cost, -1e-15);
  EXPECT_EQ(p.mode.kind, SolverMode::Kind::entropic);
  EXPECT_LT(p.marginal_error, 1e-9);
}

TEST(OtSolve, RejectsBadInput) {
  const DiscreteMeasure a = two_atoms(0.0, 1.0, 1.0), b = two_atoms(0.0, 1.0, 2.0);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
  c(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(ot_solve(a, b, c), NonFiniteCost);
  c(0, 1) = std::nan("");
  EXPECT_THROW(ot_solve(a, b, c), NonFiniteCost);
  EXPECT_THROW(ot_solve(a, b, Eigen::MatrixXd::Zero(3, 2)), DomainError);
  EXPECT_THROW(solve_transport_exact({0.5, 0.5}, {0.9, 0.3}, Eigen::MatrixXd::Zero(2, 2)),
               Infeasible);
  DiscreteMeasure bad = a;
  bad.weights = {0.7, 0.7};
  EXPECT_THROW(bad.validate(), DomainError);
  bad.weights = {1.5, -0.5};
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(OtSolve, ExactPlansAreFeasibleAndCertifiedProperty) {
  Gen gen(61);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 1 + gen.index(12), c = 1 + gen.index(12);
    const std::vector<double> a = random_simplex(gen, r), b = random_simplex(gen, c);
    const Eigen::MatrixXd cost = random_cost(gen, r, c);
    const ExactSolution s = solve_transport_exact(a, b, cost);
    for (std::size_t i = 0; i < r; ++i) EXPECT_NEAR(s.plan.row(i).sum(), a[i], 1e-12);
    for (std::size_t j = 0; j < c; ++j) EXPECT_NEAR(s.plan.col(j).sum(), b[j], 1e-12);
    EXPECT_GE(s.plan.minCoeff(), 0.0);
    EXPECT_NEAR(s.cost, (s.plan.array() * cost.array()).sum(), 1e-12);
    const CertificateReport cert = check_certificate(s, cost);
    EXPECT_LE(cert.dual_violation, 1e-9);
    EXPECT_LE(cert.slackness_violation, 1e-9);
  }
}

TEST(OtSolve, ExactMatchesAssignmentOracleProperty) {
  Gen gen(67);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + gen.index(5);
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd cost = random_cost(gen, n, n);
    EXPECT_NEAR(solve_transport_exact(w, w, cost).cost, assignment_oracle(cost), 1e-12);
  }
}

TEST(OtSolve, DegenerateInstancesTerminate) {
  // Many ties and equal supplies stress the anti-cycling rule.
  const std::vector<double> w(8, 0.125);
  const Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(8, 8, 1.0);
  const ExactSolution s = solve_transport_exact(w, w, cost);
  EXPECT_NEAR(s.cost, 1.0, 1e-14);
  Eigen::MatrixXd c2(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) c2(i, j) = static_cast<double>((i * 3 + j * 5) % 4);
  const ExactSolution s2 = solve_transport_exact(w, w, c2);
  EXPECT_LE(check_certificate(s2, c2).dual_violation, 1e-9);
}

TEST(OtSolve, SinkhornConvergesMonotonicallyProperty) {
  Gen gen(71);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 2 + gen.index(11), c = 2 + gen.index(11);
    const std::vector<double> a = random_simplex(gen, r), b = random_simplex(gen, c);
    const Eigen::MatrixXd cost = random_cost(gen, r, c);
    const double exact = solve_transport_exact(a, b, cost).cost;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1e-1, 1e-2, 1e-3}) {
      const EntropicSolution s = solve_transport_entropic(a, b, cost, eps);
      const double gap = s.cost - exact;
      EXPECT_GE(gap, -1e-9) << "entropic below exact";
      // Monotone up to the Sinkhorn marginal tolerance.
      EXPECT_LE(gap, prev + 1e-9) << "trial " << trial << " eps " << eps;
      prev = gap;
      for (std::size_t i = 0; i < r; ++i) EXPECT_NEAR(s.plan.row(i).sum(), a[i], 1e-12);
      for (std::size_t j = 0; j < c; ++j) EXPECT_NEAR(s.plan.col(j).sum(), b[j], 1e-12);
    }
    EXPECT_LT(prev, 2e-2);
  }
}

TEST(Wasserstein, NoCheaperThanAnyFeasiblePlanProperty) {
  Gen gen(73);
  const Geometry g = make_geometry(FlowModel::dilaton(20.0, 1.0, 1.0), 16, 0.5, 5.0);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, gen.profile(g), 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, gen.profile(g), 3.0);
  const TransportPlan p = wasserstein_plan(g, a, b);
  const Eigen::MatrixXd product = Eigen::Map<const Eigen::VectorXd>(a.weights.data(), 16) *
                                  Eigen::Map<const Eigen::VectorXd>(b.weights.data(), 16).transpose();
  EXPECT_LE(p.cost, (product.array() * p.cost_matrix.array()).sum() + 1e-14);
  // Northwest-corner plan, another feasible coupling.
  std::vector<double> ra = a.weights, cb = b.weights;
  Eigen::MatrixXd nw = Eigen::MatrixXd::Zero(16, 16);
  std::size_t i = 0, j = 0;
  while (i < 16 && j < 16) {
    const double m = std::min(ra[i], cb[j]);
    nw(i, j) = m;
    ra[i] -= m;
    cb[j] -= m;
    if (ra[i] <= cb[j]) ++i; else ++j;
  }
  EXPECT_LE(p.cost, (nw.array() * p.cost_matrix.array()).sum() + 1e-14);
}

TEST(Wasserstein, StaticFlatSelfTransportIsZero) {
  Gen gen(79);
  const Geometry g = make_geometry(FlowModel::flat_circle(), 16);
  const std::vector<double> u = gen.profile(g);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, u, 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, u, 2.5);
  EXPECT_NEAR(wasserstein_v(g, a, b), 0.0, 1e-14);
}

TEST(Wasserstein, DilatonUniformIsNegative) {
  // Every point stays put at cost equal to the constant-path value, which
  // is negative because S < 0.
  const double phi2 = 20.0;
  const Geometry g = make_geometry(FlowModel::dilaton(phi2, 1.0, 1.0), 16, 0.5, 5.0);
  const std::vector<double> u = uniform_profile(g, 1.0);
  const DiscreteMeasure a = DiscreteMeasure::from_density(g, u, 1.0);
  const DiscreteMeasure b = DiscreteMeasure::from_density(g, uniform_profile(g, 4.0), 4.0);
  const double oracle = adaptive_simpson(
      [&](double s) { return 2.0 * s * s * (-1.0 / (phi2 - 2.0 * s * s)); }, 1.0, 2.0);
  const TransportPlan p = wasserstein_plan(g, a, b);
  EXPECT_LT(p.cost, 0.0);
  EXPECT_NEAR(p.cost, oracle, 1e-6);
  const ExactSolution s = solve_transport_exact(a.weights, b.weights, p.cost_matrix);
  EXPECT_LE(check_certificate(s, p.cost_matrix).dual_violation, 1e-9);
}

TEST(Theta, UniformFlatClosedForm) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32, 0.5, 9.0);
  const Diffusion d1(g, {uniform_profile(g, 0.5), 0.5});
  const Diffusion d2(g, {uniform_profile(g, 0.5), 0.5});
  EXPECT_NEAR(renormalized_theta(d1, d2, 1.0, 4.0, 0.0), -2.0, 1e-9);
  EXPECT_NEAR(renormalized_theta(d1, d2, 1.0, 4.0, std::log(2.0)), -4.0, 1e-9);
  for (double s : {-0.3, 0.1, 0.5})
    EXPECT_NEAR(renormalized_theta(d1, d2, 1.0, 4.0, s), -2.0 * std::exp(s), 1e-9);
}

TEST(Theta, Preconditions) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32, 0.5, 9.0);
  const Diffusion d(g, {uniform_profile(g, 1.0), 1.0});
  EXPECT_THROW(renormalized_theta(d, d, 2.0, 2.0, 0.0), DomainError);
  EXPECT_THROW(renormalized_theta(d, d, 1.0, 4.0, 1.0), DomainError);
}

TEST(Pushforward, ConstantPotentialIsIdentity) {
  Gen gen(83);
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const DiscreteMeasure nu = DiscreteMeasure::from_density(g, gen.profile(g), 1.0);
  PotentialField phi = PotentialField::from_values(g, std::vector<double>(32, 3.0));
  const PotentialPushforward p = push_forward_geodesic(g, nu, phi, 3.0);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_NEAR(p.targets[i], g.node(i), 1e-12);
    EXPECT_NEAR(p.jacobian[i], 1.0, 1e-9);
    EXPECT_NEAR(p.density[i], nu.density[i], 1e-8 * std::max(1.0, nu.density[i]));
  }
}

TEST(Pushforward, AtStartTimeIsIdentity) {
  const Geometry g = make_geometry(FlowModel::flat_circle(), 32);
  const DiscreteMeasure nu = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
  const PotentialField phi = PotentialField::from_cosines(g, {{0.1, 1.0}});
  const PotentialPushforward p = push_forward_geodesic(g, nu, phi, 1.0);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_NEAR(p.targets[i], g.node(i), 1e-14);
    EXPECT_NEAR(p.jacobian[i], 1.0, 1e-12);
  }
}

TEST(Pushforward, CosinePotentialMassAndHistogram) {
  std::vector<double> errors;
  for (std::size_t n : {64, 128}) {
    const Geometry g = make_geometry(FlowModel::flat_circle(), n);
    const DiscreteMeasure nu = DiscreteMeasure::from_density(g, uniform_profile(g, 1.0), 1.0);
    const PotentialField phi = PotentialField::from_cosines(g, {{0.1, 1.0}});
    const PotentialPushforward p = push_forward_geodesic(g, nu, phi, 4.0);
    EXPECT_NEAR(p.mass, 1.0, 1e-9);
    // Flat targets: x + sigma-distance times 0.05 sin x (grad phi = -0.1 sin x).
    for (std::size_t i = 0; i < n; ++i) {
      const double x = g.node(i);
      EXPECT_NEAR(p.targets[i], x + 0.05 * std::sin(x) * 2.0, 1e-3);
    }
    // Histogram of pushed weights on a coarse partition against the density.
    const std::size_t bins = 8;
    std::vector<double> hist(bins, 0.0), pred(bins, 0.0);
    const double bw = 2.0 * pi / bins;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = wrap_angle(p.targets[i]);
      hist[std::min(bins - 1, static_cast<std::size_t>(t / bw))] += p.weights[i];
    }
    // Predicted mass per bin from the density at the targets, by sorting
    // targets and integrating the piecewise-linear density.
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(wrap_angle(p.targets[i]), p.density[i]);
    std::sort(pts.begin(), pts.end());
    const std::size_t fine = 20000;
    for (std::size_t k = 0; k < fine; ++k) {
      const double t = (k + 0.5) * 2.0 * pi / fine;
      auto it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(t, -1.0));
      const auto hi = it == pts.end() ? pts.front() : *it;
      const auto lo = it == pts.begin() ? pts.back() : *(it - 1);
      double span = hi.first - lo.first, off = t - lo.first;
      if (span <= 0) span += 2.0 * pi;
      if (off < 0) off += 2.0 * pi;
      const double f = lo.second + (hi.second - lo.second) * off / span;
      pred[std::min(bins - 1, static_cast<std::size_t>(t / bw))] += f * 2.0 * pi / fine;
    }
    double worst = 0.0;
    for (std::size_t b = 0; b < bins; ++b) worst = std::max(worst, std::abs(hist[b] - pred[b]));
    errors.push_back(worst);
    EXPECT_LT(worst, 4.0 / static_cast<double>(n));
  }
}
