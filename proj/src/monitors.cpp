#include "levolve/monitors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>

#include "levolve/errors.hpp"
#include "levolve/parallel.hpp"

namespace levolve {
namespace {

double sum_weighted(const std::vector<double>& f, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += f[i] * w[i];
  return s;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Position along a sampled curve at sigma, by linear interpolation.
double position_at(const DiscreteCurve& c, double sigma) {
  const double t = (sigma - c.sigma1) / c.step();
  const auto k = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(t))), c.size() - 2);
  const double frac = t - static_cast<double>(k);
  return (1.0 - frac) * c.positions[k] + frac * c.positions[k + 1];
}

}  // namespace

std::string_view to_string(Abscissa a) {
  switch (a) {
    case Abscissa::tau: return "tau";
    case Abscissa::s: return "s";
    case Abscissa::inverse_sqrt_tau: return "tau^-1/2";
    case Abscissa::index: return "index";
  }
  return "unknown";
}

std::string_view to_string(Property p) {
  switch (p) {
    case Property::weakly_decreasing: return "weakly_decreasing";
    case Property::convex: return "convex";
    case Property::bounded_above: return "bounded_above";
  }
  return "unknown";
}

std::vector<double> violations(const MonitorSeries& s) {
  std::vector<double> out;
  const auto& x = s.grid;
  const auto& v = s.values;
  switch (s.property) {
    case Property::weakly_decreasing:
      for (std::size_t k = 0; k + 1 < v.size(); ++k) out.push_back(v[k + 1] - v[k]);
      break;
    case Property::convex:
      for (std::size_t k = 1; k + 1 < v.size(); ++k) {
        const double chord =
            (v[k - 1] * (x[k + 1] - x[k]) + v[k + 1] * (x[k] - x[k - 1])) / (x[k + 1] - x[k - 1]);
        out.push_back(2.0 * (v[k] - chord));
      }
      break;
    case Property::bounded_above:
      for (double e : v) out.push_back(e - s.bound);
      break;
  }
  return out;
}

void MonitorSeries::evaluate() {
  if (grid.size() != values.size()) {
    throw DomainError(fmt::format("series '{}' has {} abscissae and {} values", name, grid.size(),
                                  values.size()));
  }
  worst_violation = 0.0;
  bool finite = true;
  for (double v : values) finite = finite && std::isfinite(v);
  for (double e : violations(*this)) worst_violation = std::max(worst_violation, e);
  pass = finite && worst_violation <= slack;
}

MonitorSeries make_series(std::string name, Abscissa abscissa, std::vector<double> grid,
                          std::vector<double> values, Property property, double slack,
                          double bound) {
  MonitorSeries s;
  s.name = std::move(name);
  s.abscissa = abscissa;
  s.grid = std::move(grid);
  s.values = std::move(values);
  s.property = property;
  s.slack = slack;
  s.bound = bound;
  s.evaluate();
  return s;
}

double entropy(const Geometry& geom, const std::vector<double>& f, double tau) {
  const std::vector<double> w = geom.volume_weights(tau).values;
  if (f.size() != w.size()) throw DomainError("density does not match the mesh");
  double e = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (f[i] < 0.0) throw DomainError(fmt::format("negative density {} at node {}", f[i], i));
    if (f[i] > 0.0) e += f[i] * std::log(f[i]) * w[i];
  }
  return e;
}

double w_entropy(const Geometry& geom, const DiffusionState& state) {
  const std::size_t n = geom.node_count();
  const double tau = state.tau;
  const int dim = geom.dimension();
  if (state.u.size() != n) throw DomainError("density does not match the mesh");
  std::vector<double> f(n);
  const double shift = 0.5 * dim * std::log(4.0 * std::numbers::pi * tau);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(state.u[i] > 0.0)) {
      throw NonPositiveDensity(
          fmt::format("W-entropy needs u > 0; u = {} at node {}", state.u[i], i));
    }
    f[i] = -std::log(state.u[i]) - shift;
  }
  const std::vector<double> df = geom.coordinate_gradient(f);
  const std::vector<double> w = geom.volume_weights(tau).values;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ChartSample c = geom.chart(geom.node(i), tau);
    const double grad2 = df[i] * df[i] / c.metric;
    total += (tau * (c.trace + grad2) + f[i] - dim) * state.u[i] * w[i];
  }
  return total;
}

double reduced_volume(const Geometry& geom, const LDistanceField& field, std::size_t ti) {
  if (field.nodes.size() != geom.node_count()) {
    throw DomainError("reduced volume needs the L-distance field on every mesh node");
  }
  const double tau = field.taus.at(ti);
  const std::vector<double> w = geom.volume_weights(tau).values;
  const double norm = std::pow(4.0 * std::numbers::pi * tau, -0.5 * geom.dimension());
  double total = 0.0;
  for (std::size_t k = 0; k < field.nodes.size(); ++k) {
    const std::size_t e = field.index(ti, k);
    if (!field.valid[e]) {
      throw InvalidFieldEntry(
          fmt::format("L-distance entry at node {}, tau = {} is invalid", field.nodes[k], tau));
    }
    total += norm * std::exp(-field.L[e] / (2.0 * std::sqrt(tau))) * w[field.nodes[k]];
  }
  return total;
}

MonitorSeries min_lbar_gap(const Geometry& geom, const LDistanceField& field, double slack) {
  std::vector<double> values;
  for (std::size_t ti = 0; ti < field.taus.size(); ++ti) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < field.nodes.size(); ++k) {
      const std::size_t e = field.index(ti, k);
      if (!field.valid[e]) {
        throw InvalidFieldEntry(fmt::format("L-distance entry at node {}, tau = {} is invalid",
                                            field.nodes[k], field.taus[ti]));
      }
      best = std::min(best, field.Lbar[e]);
    }
    values.push_back(best - 2.0 * geom.dimension() * field.taus[ti]);
  }
  return make_series("min_lbar_gap", Abscissa::tau, field.taus, std::move(values),
                     Property::weakly_decreasing, slack);
}

MonitorSeries w_entropy_series(const Diffusion& diffusion, const std::vector<double>& taus,
                               double slack) {
  std::vector<double> values(taus.size());
  std::vector<std::exception_ptr> errors(taus.size());
  const auto count = static_cast<long long>(taus.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long k = 0; k < count; ++k) {
    try {
      values[k] = w_entropy(diffusion.geometry(), diffusion.at(taus[k]));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  rethrow_first(errors);
  return make_series("w_entropy", Abscissa::tau, taus, std::move(values),
                     Property::weakly_decreasing, slack);
}

MonitorSeries reduced_volume_series(const Geometry& geom, const LDistanceField& field,
                                    double slack) {
  std::vector<double> values;
  for (std::size_t ti = 0; ti < field.taus.size(); ++ti) {
    values.push_back(reduced_volume(geom, field, ti));
  }
  MonitorSeries s = make_series("reduced_volume", Abscissa::tau, field.taus, std::move(values),
                                Property::weakly_decreasing, slack);
  s.note = fmt::format("base time {:.17g}", field.base_tau);
  return s;
}

MonitorSeries theta_series(const Diffusion& d1, const Diffusion& d2, double tau_bar1,
                           double tau_bar2, const std::vector<double>& s_grid, double slack,
                           SolverMode mode, const CurveOptions& options) {
  std::vector<double> values;
  for (double s : s_grid) {
    values.push_back(renormalized_theta(d1, d2, tau_bar1, tau_bar2, s, mode, options));
  }
  MonitorSeries series = make_series("theta", Abscissa::s, s_grid, std::move(values),
                                     Property::weakly_decreasing, slack);
  series.note = mode.describe();
  return series;
}

ConvexityProfile convexity_profile(const Geometry& geom, const DiscreteMeasure& nu1,
                                   const PotentialField& phi, double tau1, double tau2,
                                   std::size_t points, double slack,
                                   const CurveOptions& options) {
  if (std::abs(nu1.tau - tau1) > 1e-12 * std::max(1.0, tau1)) {
    throw DomainError(fmt::format("measure lives at tau = {}, profile starts at {}", nu1.tau,
                                  tau1));
  }
  if (!(tau2 > tau1)) throw DomainError("convexity profile needs tau1 < tau2");
  if (points < 2) throw DomainError("convexity profile needs at least two points");
  nu1.validate();
  const std::size_t n = geom.node_count();
  const int dim = geom.dimension();
  const double w_lo = 1.0 / std::sqrt(tau2), w_hi = 1.0 / std::sqrt(tau1);
  const std::vector<double> w1 = geom.volume_weights(tau1).values;

  ConvexityProfile out;
  std::vector<double> grid(points), values(points);
  out.taus.resize(points);
  out.entropy.resize(points);
  out.potential_term.resize(points);

  for (std::size_t k = 0; k < points; ++k) {
    const double w = w_lo + (w_hi - w_lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    const double tau = k == 0 ? tau2 : (k + 1 == points ? tau1 : 1.0 / (w * w));
    grid[k] = w;
    out.taus[k] = tau;

    double ent = 0.0, pot = 0.0;
    if (k + 1 == points) {
      // At tau1 the map is the identity and the inf-convolution reduces to
      // -phi / (2 sqrt(tau1)).
      for (std::size_t i = 0; i < nu1.support.size(); ++i) {
        if (nu1.weights[i] <= 0.0) continue;
        const std::size_t node = geom.nearest_node(nu1.support[i]);
        const double f1 = nu1.density.empty() ? nu1.weights[i] / w1[node] : nu1.density[i];
        ent += nu1.weights[i] * std::log(f1);
        pot += nu1.weights[i] * (-phi.values[node] / (2.0 * std::sqrt(tau1)));
      }
    } else {
      const PotentialPushforward pf = push_forward_geodesic(geom, nu1, phi, tau, options);
      const std::size_t m = pf.targets.size();
      std::vector<double> inf(m, std::numeric_limits<double>::infinity());
      std::vector<double> cell(m * n);
      std::vector<std::exception_ptr> errors(m * n);
      const auto total = static_cast<long long>(m * n);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
      for (long long e = 0; e < total; ++e) {
        const std::size_t i = static_cast<std::size_t>(e) / n, j = static_cast<std::size_t>(e) % n;
        if (pf.weights[i] <= 0.0) continue;
        try {
          const double q = q_distance(geom, geom.node(j), tau1, pf.targets[i], tau, options).length;
          cell[e] = (q - phi.values[j]) / (2.0 * std::sqrt(tau));
        } catch (...) {
          errors[e] = std::current_exception();
        }
      }
      rethrow_first(errors);
      for (std::size_t i = 0; i < m; ++i) {
        if (pf.weights[i] <= 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) inf[i] = std::min(inf[i], cell[i * n + j]);
        ent += pf.weights[i] * std::log(pf.density[i]);
        pot += pf.weights[i] * inf[i];
      }
    }
    out.entropy[k] = ent;
    out.potential_term[k] = pot;
    values[k] = ent + pot + 0.5 * dim * std::log(tau);
  }
  out.series = make_series("convexity_profile", Abscissa::inverse_sqrt_tau, std::move(grid),
                           std::move(values), Property::convex, slack);
  return out;
}

double pl_tau_bar(double lambda, double tau1, double tau2) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("lambda must lie in (0, 1)");
  if (!(tau1 > 0.0) || !(tau2 > tau1)) throw DomainError("need 0 < tau1 < tau2");
  const double inv = (1.0 - lambda) / std::sqrt(tau1) + lambda / std::sqrt(tau2);
  return 1.0 / (inv * inv);
}

PLReport pl_check(const Geometry& geom, const std::vector<double>& u1,
                  const std::vector<double>& u2, double lambda, double tau1, double tau2,
                  const PLOptions& options) {
  const std::size_t n = geom.node_count();
  if (u1.size() != n || u2.size() != n) throw DomainError("profiles do not match the mesh");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(u1[i] >= 0.0) || !(u2[i] >= 0.0)) throw DomainError("profiles must be nonnegative");
    if (geom.zonal()) {
      // Only one half of the meridian is sampled, so both halves must agree.
      const std::size_t m = n - 1 - i;
      const double tol = 1e-12;
      if (std::abs(u1[i] - u1[m]) > tol * std::max(1.0, u1[i]) ||
          std::abs(u2[i] - u2[m]) > tol * std::max(1.0, u2[i])) {
        throw DomainError(fmt::format("profiles must be zonal (node {} differs from node {})", i, m));
      }
    }
  }
  PLReport r;
  r.lambda = lambda;
  r.tau1 = tau1;
  r.tau2 = tau2;
  r.tau_bar = pl_tau_bar(lambda, tau1, tau2);
  geom.check_time(tau1);
  geom.check_time(tau2);
  const int dim = geom.dimension();
  r.prefactor = std::pow(r.tau_bar / (std::pow(tau1, 1.0 - lambda) * std::pow(tau2, lambda)),
                         0.5 * dim);
  const double s1 = std::sqrt(tau1), s2 = std::sqrt(tau2), sbar = std::sqrt(r.tau_bar);
  const CurveOptions& co = options.curve;

  auto hypothesis = [&](double q1, double q2, double a, double b) {
    return std::exp(-(1.0 - lambda) * q1 / (2.0 * s1)) * std::pow(a, 1.0 - lambda) *
           std::exp(lambda * q2 / (2.0 * s2)) * std::pow(b, lambda) / r.prefactor;
  };

  // Each task records up to two geodesics (both ways round at a tie).
  struct Task {
    std::size_t i = 0, j = 0;
    double delta = 0.0;  // sphere: longitude difference
  };
  std::vector<Task> tasks;
  if (geom.zonal()) {
    const std::size_t half = n / 2;
    const std::size_t lon = std::max<std::size_t>(1, options.longitudes);
    for (std::size_t i = 0; i < half; ++i) {
      for (std::size_t j = 0; j < half; ++j) {
        for (std::size_t k = 0; k < lon; ++k) {
          // Antipodal pairs have a whole circle of minimizers; skip them.
          if (2 * k == lon && i + j + 1 == half) continue;
          tasks.push_back({i, j, static_cast<double>(k) * 2.0 * std::numbers::pi /
                                     static_cast<double>(lon)});
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) tasks.push_back({i, j, 0.0});
    }
  }

  std::vector<std::array<PLWitness, 2>> found(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  const auto count = static_cast<long long>(tasks.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long t = 0; t < count; ++t) {
    const Task& task = tasks[t];
    try {
      const double a = u1[task.i], b = u2[task.j];
      if (a == 0.0 || b == 0.0) continue;  // hypothesis right side vanishes
      if (geom.zonal()) {
        const double p1 = geom.node(task.i), p2 = geom.node(task.j);
        const std::array<double, 3> xv{std::sin(p1), 0.0, std::cos(p1)};
        const std::array<double, 3> yv{std::sin(p2) * std::cos(task.delta),
                                       std::sin(p2) * std::sin(task.delta), std::cos(p2)};
        const double dot = std::clamp(xv[0] * yv[0] + xv[1] * yv[1] + xv[2] * yv[2], -1.0, 1.0);
        const double d = std::acos(dot);
        const GeodesicResult g = q_distance(geom, 0.0, tau1, d, tau2, co);
        const double arc = position_at(g.curve, sbar);
        double polar = p1;
        if (d > 1e-12) {
          const double frac = arc / d;
          const double wa = std::sin((1.0 - frac) * d) / std::sin(d);
          const double wb = std::sin(frac * d) / std::sin(d);
          polar = std::acos(std::clamp(wa * xv[2] + wb * yv[2], -1.0, 1.0));
        }
        const double q1 = q_distance(geom, 0.0, tau1, arc, r.tau_bar, co).length;
        const double q2 = q_distance(geom, arc, r.tau_bar, d, tau2, co).length;
        found[t][0] = {hypothesis(q1, q2, a, b), p1, p2, polar, true};
      } else {
        const double x = geom.node(task.i), y = geom.node(task.j);
        const GeodesicResult g = q_distance(geom, x, tau1, y, tau2, co);
        const double z = position_at(g.curve, sbar);
        const double q1 = q_distance(geom, x, tau1, z, r.tau_bar, co).length;
        const double q2 = q_distance(geom, z, r.tau_bar, y, tau2, co).length;
        found[t][0] = {hypothesis(q1, q2, a, b), x, y, z, true};
        const double disp = g.curve.positions.back() - x;
        if (g.near_cut && geom.homogeneous() && std::abs(disp) > 1e-12) {
          // Tied minimizers: the other way round at the same fraction.
          const double other = disp > 0.0 ? disp - 2.0 * std::numbers::pi
                                          : disp + 2.0 * std::numbers::pi;
          const double z2 = x + other * (z - x) / disp;
          const double q1b = q_distance(geom, x, tau1, z2, r.tau_bar, co).length;
          const double q2b = q_distance(geom, z2, r.tau_bar, y, tau2, co).length;
          found[t][1] = {hypothesis(q1b, q2b, a, b), x, y, z2, true};
        }
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  rethrow_first(errors);

  r.v.assign(n, 0.0);
  r.witness.assign(n, PLWitness{});
  auto deposit = [&](std::size_t node, const PLWitness& w) {
    if (w.value > r.v[node]) {
      r.v[node] = w.value;
      r.witness[node] = w;
    }
  };
  for (const auto& pair : found) {
    for (const PLWitness& w : pair) {
      if (!w.set) continue;
      r.samples.push_back(w);
      ++r.pairs;
      const auto [lo, hi] = geom.bracketing_nodes(w.z);
      deposit(lo, w);
      deposit(hi, w);
      if (geom.zonal()) {
        deposit(n - 1 - lo, w);
        deposit(n - 1 - hi, w);
      }
    }
  }

  const std::vector<double> wbar = geom.volume_weights(r.tau_bar).values;
  r.lhs = sum_weighted(r.v, wbar);
  const double m1 = sum_weighted(u1, geom.volume_weights(tau1).values);
  const double m2 = sum_weighted(u2, geom.volume_weights(tau2).values);
  r.rhs = std::pow(m1, 1.0 - lambda) * std::pow(m2, lambda);
  r.margin = r.rhs > 0.0 ? r.lhs / r.rhs : 1.0;
  r.pass = r.lhs >= r.rhs - options.slack;
  return r;
}

double pl_hypothesis_violation(const Geometry& geom, const PLReport& report,
                               const std::vector<double>& v) {
  const std::size_t n = geom.node_count();
  double worst = -std::numeric_limits<double>::infinity();
  for (const PLWitness& w : report.samples) {
    const auto [lo, hi] = geom.bracketing_nodes(w.z);
    double at = std::min(v[lo], v[hi]);
    // Zonal fields sit on both halves of the meridian.
    if (geom.zonal()) at = std::min({at, v[n - 1 - lo], v[n - 1 - hi]});
    worst = std::max(worst, w.value - at);
  }
  return worst;
}

double energy_identity_residual(const Geometry& geom, const GeodesicResult& r) {
  const ChartSample c1 = geom.chart(r.curve.positions.front(), r.tau1);
  const ChartSample c2 = geom.chart(r.curve.positions.back(), r.tau2);
  const double v1 = r.velocity.front(), v2 = r.velocity.back();
  const double lhs = std::pow(r.tau2, 1.5) * (c2.trace + c2.metric * v2 * v2) -
                     std::pow(r.tau1, 1.5) * (c1.trace + c1.metric * v1 * v1);
  return lhs - (-kappa_integral(geom, r) + 0.5 * r.length);
}

MonitorSeries scaling_identity_check(const Geometry& geom, const std::vector<PairSample>& pairs,
                            double slack, const CurveOptions& options) {
  std::vector<double> grid, values;
  std::size_t skipped = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const PairSample& p = pairs[k];
    const GeodesicResult r = q_distance(geom, p.x, p.tau1, p.y, p.tau2, options);
    if (r.near_cut) {
      ++skipped;
      continue;
    }
    const QPartials d = q_partials(geom, r);
    const double kappa = kappa_integral(geom, r);
    const double sx = geom.chart(p.x, p.tau1).trace;
    const double sy = geom.chart(r.curve.positions.back(), p.tau2).trace;
    const double lhs = p.tau2 * d.d_tau2 + p.tau1 * d.d_tau1;
    const double rhs = 2.0 * std::pow(p.tau2, 1.5) * sy - 2.0 * std::pow(p.tau1, 1.5) * sx +
                       kappa - 0.5 * r.length;
    grid.push_back(static_cast<double>(k));
    values.push_back(std::abs(lhs - rhs));
  }
  MonitorSeries s = make_series("scaling_identity_residual", Abscissa::index, std::move(grid),
                                std::move(values), Property::bounded_above, slack, 0.0);
  s.note = fmt::format("{} near-cut pairs skipped", skipped);
  return s;
}

TransportBoundReport transport_bound_check(const Geometry& geom, const DiscreteMeasure& nu1,
                                    const DiscreteMeasure& nu2, double slack, SolverMode mode,
                                    const CurveOptions& options) {
  nu1.validate();
  nu2.validate();
  if (nu1.density.empty() || nu2.density.empty()) {
    throw DomainError("transport bound check needs measures with densities");
  }
  const std::size_t n = geom.node_count();
  if (nu1.support.size() != n || nu2.support.size() != n) {
    throw DomainError("transport bound check needs mesh-supported measures");
  }
  for (double f : nu1.density) {
    if (!(f > 0.0)) throw NonPositiveDensity("transport bound check needs positive densities");
  }
  for (double f : nu2.density) {
    if (!(f > 0.0)) throw NonPositiveDensity("transport bound check needs positive densities");
  }
  const double tau1 = nu1.tau, tau2 = nu2.tau;
  const TransportPlan plan = wasserstein_plan(geom, nu1, nu2, mode, options);

  std::vector<double> l1(n), l2(n);
  for (std::size_t i = 0; i < n; ++i) {
    l1[i] = std::log(nu1.density[i]);
    l2[i] = std::log(nu2.density[i]);
  }
  const std::vector<double> g1 = geom.coordinate_gradient(l1);
  const std::vector<double> g2 = geom.coordinate_gradient(l2);

  TransportBoundReport out;
  out.slack = slack;
  out.bound = geom.dimension() * (std::sqrt(tau2) - std::sqrt(tau1));
  out.note = "applied to an arbitrary density pair, not only geodesic endpoints";

  struct Cell {
    std::size_t i, j;
    double mass;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (plan.plan(i, j) > 1e-14) cells.push_back({i, j, plan.plan(i, j)});
    }
  }
  std::vector<double> term(cells.size(), 0.0);
  std::vector<char> skip(cells.size(), 0);
  std::vector<std::exception_ptr> errors(cells.size());
  const auto count = static_cast<long long>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long c = 0; c < count; ++c) {
    try {
      const Cell& cell = cells[c];
      const GeodesicResult r =
          q_distance(geom, nu1.support[cell.i], tau1, nu2.support[cell.j], tau2, options);
      if (r.near_cut) {
        skip[c] = 1;
        continue;
      }
      const QPartials d = q_partials(geom, r);
      const double kappa = kappa_integral(geom, r);
      const double sx = geom.chart(r.curve.positions.front(), tau1).trace;
      const double sy = geom.chart(r.curve.positions.back(), tau2).trace;
      term[c] = kappa - 2.0 * std::pow(tau1, 1.5) * sx - tau1 * d.grad1.components[0] * g1[cell.i] +
                2.0 * std::pow(tau2, 1.5) * sy - tau2 * d.grad2.components[0] * g2[cell.j];
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  rethrow_first(errors);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (skip[c]) {
      ++out.skipped;
      continue;
    }
    ++out.pairs;
    out.lhs += cells[c].mass * term[c];
  }
  out.pass = out.lhs <= out.bound + slack;
  return out;
}

}  // namespace levolve
