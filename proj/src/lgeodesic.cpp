#include "levolve/lgeodesic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "levolve/errors.hpp"
#include "levolve/parallel.hpp"

namespace levolve {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sigma_at(const DiscreteCurve& c, std::size_t k) {
  return k + 1 == c.size() ? c.sigma2 : c.sigma(k);
}

double mid_sigma(const DiscreteCurve& c, std::size_t k) {
  return c.sigma1 + c.step() * (static_cast<double>(k) + 0.5);
}

// Per-segment data at the segment midpoint position: compliance c (Simpson
// integral of 1/a in sigma), its position derivative, and the trace S and its
// derivative at the midpoint time.
struct Segment {
  double c = 0.0, dc = 0.0, s = 0.0, ds = 0.0;
};

Segment segment_at(const Geometry& geom, double theta, double s0, double s1, double h) {
  const double sm = 0.5 * (s0 + s1);
  const ChartSample lo = geom.chart(theta, s0 * s0);
  const ChartSample mid = geom.chart(theta, sm * sm);
  const ChartSample hi = geom.chart(theta, s1 * s1);
  Segment seg;
  seg.c = h / 6.0 * (1.0 / lo.metric + 4.0 / mid.metric + 1.0 / hi.metric);
  seg.dc = -h / 6.0 *
           (lo.dmetric / (lo.metric * lo.metric) + 4.0 * mid.dmetric / (mid.metric * mid.metric) +
            hi.dmetric / (hi.metric * hi.metric));
  seg.s = mid.trace;
  seg.ds = mid.dtrace;
  return seg;
}

struct CurveData {
  std::vector<Segment> seg;
  std::vector<double> s, ds;  // trace S and its derivative at samples
};

CurveData evaluate(const Geometry& geom, const DiscreteCurve& c) {
  const std::size_t m = c.size();
  const double h = c.step();
  CurveData d;
  d.seg.resize(m - 1);
  d.s.resize(m);
  d.ds.resize(m);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    d.seg[k] = segment_at(geom, 0.5 * (c.positions[k] + c.positions[k + 1]), sigma_at(c, k),
                          sigma_at(c, k + 1), h);
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double sg = sigma_at(c, k);
    const ChartSample cs = geom.chart(c.positions[k], sg * sg);
    d.s[k] = cs.trace;
    d.ds[k] = cs.dtrace;
  }
  return d;
}

double action(const DiscreteCurve& c, const CurveData& d) {
  const std::size_t m = c.size();
  const double h = c.step();
  double kinetic = 0.0, potential = 0.0;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double delta = c.positions[k + 1] - c.positions[k];
    kinetic += 0.5 * delta * delta / d.seg[k].c;
    const double s0 = sigma_at(c, k), s1 = sigma_at(c, k + 1), sm = mid_sigma(c, k);
    potential += h / 6.0 *
                 (2.0 * s0 * s0 * d.s[k] + 8.0 * sm * sm * d.seg[k].s + 2.0 * s1 * s1 * d.s[k + 1]);
  }
  return kinetic + potential;
}

// Derivative of segment k's kinetic term with respect to its right (+) and
// left (-) endpoint, without the potential.
double kinetic_right(const Segment& g, double delta) {
  return delta / g.c - 0.25 * delta * delta * g.dc / (g.c * g.c);
}
double kinetic_left(const Segment& g, double delta) {
  return -delta / g.c - 0.25 * delta * delta * g.dc / (g.c * g.c);
}

// Potential force a sample receives from one adjacent segment midpoint.
double midpoint_force(const DiscreteCurve& c, const CurveData& d, std::size_t k) {
  const double sm = mid_sigma(c, k);
  return c.step() / 3.0 * 2.0 * sm * sm * d.seg[k].ds;
}

std::vector<double> interior_gradient(const DiscreteCurve& c, const CurveData& d) {
  const std::size_t m = c.size();
  const double h = c.step();
  std::vector<double> g(m - 2);
  for (std::size_t k = 1; k + 1 < m; ++k) {
    const double dl = c.positions[k] - c.positions[k - 1];
    const double dr = c.positions[k + 1] - c.positions[k];
    const double sg = sigma_at(c, k);
    g[k - 1] = kinetic_right(d.seg[k - 1], dl) + kinetic_left(d.seg[k], dr) +
               h / 3.0 * 2.0 * sg * sg * d.ds[k] + midpoint_force(c, d, k - 1) +
               midpoint_force(c, d, k);
  }
  return g;
}

// Solves the tridiagonal kinetic Hessian against rhs (Thomas algorithm).
std::vector<double> precondition(const CurveData& d, const std::vector<double>& rhs) {
  const std::size_t n = rhs.size();
  auto stiff = [&](std::size_t k) { return 1.0 / d.seg[k].c; };
  std::vector<double> c(n), x(n);
  double denom = stiff(0) + stiff(1);
  c[0] = n > 1 ? -stiff(1) / denom : 0.0;
  x[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    const double lower = -stiff(i);
    denom = stiff(i) + stiff(i + 1) - lower * c[i - 1];
    c[i] = i + 1 < n ? -stiff(i + 1) / denom : 0.0;
    x[i] = (rhs[i] - lower * x[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
  return x;
}

double max_abs(const std::vector<double>& v) {
  double r = 0.0;
  for (double e : v) r = std::max(r, std::abs(e));
  return r;
}

struct Descent {
  bool converged = false;
  double gradient_norm = 0.0;
  double length = 0.0;
  int iterations = 0;
};

Descent minimize(const Geometry& geom, DiscreteCurve& curve, const CurveOptions& opt) {
  Descent out;
  CurveData data = evaluate(geom, curve);
  double value = action(curve, data);
  for (int it = 0;; ++it) {
    const std::vector<double> grad = interior_gradient(curve, data);
    out.gradient_norm = max_abs(grad);
    out.iterations = it;
    out.length = value;
    if (out.gradient_norm < opt.gradient_tolerance) {
      out.converged = true;
      return out;
    }
    if (it >= opt.max_iterations) return out;

    std::vector<double> dir = precondition(data, grad);
    double slope = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] = -dir[i];
      slope += grad[i] * dir[i];
    }
    double t = 1.0;
    DiscreteCurve trial = curve;
    CurveData trial_data;
    double trial_value = 0.0;
    bool accepted = false;
    const double roundoff = 1e-13 * std::max(1.0, std::abs(value));
    while (t > 1e-12) {
      for (std::size_t i = 0; i < dir.size(); ++i) {
        trial.positions[i + 1] = curve.positions[i + 1] + t * dir[i];
      }
      trial_data = evaluate(geom, trial);
      trial_value = action(trial, trial_data);
      if (trial_value <= value + 1e-4 * t * slope ||
          (t == 1.0 && trial_value <= value + roundoff)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return out;
    curve = std::move(trial);
    data = std::move(trial_data);
    value = trial_value;
  }
}

void fill_velocities(const Geometry& geom, GeodesicResult& r) {
  const DiscreteCurve& c = r.curve;
  const CurveData d = evaluate(geom, c);
  const std::size_t m = c.size();
  const double h = c.step();
  std::vector<double> seg(m - 1);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    seg[k] = (c.positions[k + 1] - c.positions[k]) / d.seg[k].c;
  }
  std::vector<double> momentum(m);
  const double d0 = c.positions[1] - c.positions[0];
  const double dn = c.positions[m - 1] - c.positions[m - 2];
  const double s0 = c.sigma1, sn = c.sigma2;
  momentum[0] = -kinetic_left(d.seg[0], d0) - h / 6.0 * 2.0 * s0 * s0 * d.ds[0] -
                midpoint_force(c, d, 0);
  momentum[m - 1] = kinetic_right(d.seg[m - 2], dn) + h / 6.0 * 2.0 * sn * sn * d.ds[m - 1] +
                    midpoint_force(c, d, m - 2);
  for (std::size_t k = 1; k + 1 < m; ++k) momentum[k] = 0.5 * (seg[k - 1] + seg[k]);

  r.velocity.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double sg = sigma_at(c, k);
    const double a = geom.chart(c.positions[k], sg * sg).metric;
    r.velocity[k] = momentum[k] / (a * 2.0 * sg);
  }
  r.midpoint_velocity.resize(m - 1);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double sm = mid_sigma(c, k);
    const double a = geom.chart(0.5 * (c.positions[k] + c.positions[k + 1]), sm * sm).metric;
    r.midpoint_velocity[k] = seg[k] / (a * 2.0 * sm);
  }
  const int n = geom.dimension();
  r.x1 = TangentVector::along_chart(n, r.velocity.front(), r.tau1);
  r.x2 = TangentVector::along_chart(n, r.velocity.back(), r.tau2);
}

void check_interval(const Geometry& geom, double tau1, double tau2) {
  if (!(tau1 > 0.0) || !(tau2 > tau1)) {
    throw DomainError(fmt::format("need 0 < tau1 < tau2, got tau1 = {}, tau2 = {}", tau1, tau2));
  }
  geom.check_time(tau1);
  geom.check_time(tau2);
}

void check_samples(const CurveOptions& opt) {
  if (opt.samples < 32) {
    throw DomainError(fmt::format("curves need at least 32 samples, got {}", opt.samples));
  }
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

DiscreteCurve DiscreteCurve::straight(double from, double to, double tau1, double tau2,
                                      std::size_t samples) {
  DiscreteCurve c;
  c.sigma1 = std::sqrt(tau1);
  c.sigma2 = std::sqrt(tau2);
  c.positions.resize(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(samples - 1);
    c.positions[k] = from + t * (to - from);
  }
  c.positions.back() = to;
  return c;
}

double l_length(const Geometry& geom, const DiscreteCurve& curve) {
  if (curve.size() < 2 || !(curve.sigma2 > curve.sigma1) || !(curve.sigma1 > 0.0)) {
    throw DomainError("curve needs at least two samples on an increasing positive sigma grid");
  }
  geom.check_time(curve.sigma1 * curve.sigma1);
  geom.check_time(curve.sigma2 * curve.sigma2);
  return action(curve, evaluate(geom, curve));
}

GeodesicResult q_distance(const Geometry& geom, double x, double tau1, double y, double tau2,
                          const CurveOptions& options) {
  check_interval(geom, tau1, tau2);
  check_samples(options);

  const double d = circle_displacement(x, y);
  const double other = d >= 0.0 ? d - kTwoPi : d + kTwoPi;
  std::mt19937_64 rng(options.seed);
  const double amplitude = options.perturbation * (2.0 * unit_uniform(rng) - 1.0);

  std::vector<DiscreteCurve> starts;
  starts.push_back(DiscreteCurve::straight(x, x + d, tau1, tau2, options.samples));
  starts.push_back(DiscreteCurve::straight(x, x + other, tau1, tau2, options.samples));
  DiscreteCurve bent = starts.front();
  for (std::size_t k = 1; k + 1 < bent.size(); ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(bent.size() - 1);
    bent.positions[k] += amplitude * std::sin(std::numbers::pi * t);
  }
  starts.push_back(std::move(bent));

  std::vector<Descent> runs;
  for (auto& curve : starts) runs.push_back(minimize(geom, curve, options));

  std::size_t best = starts.size();
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (!runs[i].converged) continue;
    if (best == starts.size() || runs[i].length < runs[best].length) best = i;
  }
  if (best == starts.size()) {
    throw NoConvergence(fmt::format(
        "no start converged for x = {}, tau1 = {}, y = {}, tau2 = {} within {} iterations", x,
        tau1, y, tau2, options.max_iterations));
  }

  GeodesicResult r;
  r.x = x;
  r.y = y;
  r.tau1 = tau1;
  r.tau2 = tau2;
  r.curve = starts[best];
  r.length = runs[best].length;
  r.gradient_norm = runs[best].gradient_norm;
  r.iterations = runs[best].iterations;
  r.converged = true;
  r.is_minimum = true;
  r.starts = static_cast<int>(starts.size());
  const double tie = options.tie_tolerance * std::max(1.0, std::abs(r.length));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (i == best || !runs[i].converged) continue;
    if (std::abs(runs[i].length - r.length) > tie) continue;
    double gap = 0.0;
    for (std::size_t k = 0; k < r.curve.size(); ++k) {
      gap = std::max(gap, std::abs(starts[i].positions[k] - r.curve.positions[k]));
    }
    if (gap > 1e-6) r.near_cut = true;
  }
  fill_velocities(geom, r);
  return r;
}

DiscreteCurve l_exp_curve(const Geometry& geom, double x, double tau1, const TangentVector& z,
                          double tau2, const CurveOptions& options) {
  check_samples(options);
  if (z.components.size() != geom.dimension()) {
    throw DomainError("initial vector does not match the manifold dimension");
  }
  geom.check_time(tau1);
  geom.check_time(tau2);
  if (!(tau1 > 0.0) || tau2 < tau1) {
    throw DomainError(fmt::format("need 0 < tau1 <= tau2, got {}, {}", tau1, tau2));
  }
  if (tau2 == tau1) {
    DiscreteCurve c;
    c.sigma1 = c.sigma2 = std::sqrt(tau1);
    c.positions.assign(options.samples, x);
    return c;
  }

  DiscreteCurve c;
  c.sigma1 = std::sqrt(tau1);
  c.sigma2 = std::sqrt(tau2);
  c.positions.assign(options.samples, x);
  const std::size_t m = c.size();
  const double h = c.step();

  // Momentum leaving sample k through segment k, as a function of the
  // segment's displacement; solved for the displacement that matches the
  // momentum carried in from the left.
  auto solve_segment = [&](std::size_t k, double target) {
    const double s0 = sigma_at(c, k), s1 = sigma_at(c, k + 1), sm = mid_sigma(c, k);
    const double start = c.positions[k];
    auto residual = [&](double delta) {
      const Segment g = segment_at(geom, start + 0.5 * delta, s0, s1, h);
      return -kinetic_left(g, delta) - h / 3.0 * 2.0 * sm * sm * g.ds - target;
    };
    const Segment g0 = segment_at(geom, start, s0, s1, h);
    double delta = target * g0.c;
    if (geom.homogeneous()) return delta;
    for (int it = 0; it < 60; ++it) {
      const double f = residual(delta);
      const double step = 1e-7 * std::max(1.0, std::abs(delta));
      const double df = (residual(delta + step) - residual(delta - step)) / (2.0 * step);
      const double next = delta - f / df;
      if (std::abs(next - delta) <= 1e-14 * std::max(1.0, std::abs(delta))) return next;
      delta = next;
    }
    throw NoConvergence(fmt::format("L-exponential step {} did not converge", k));
  };

  const ChartSample c0 = geom.chart(x, tau1);
  double carried = c0.metric * 2.0 * z.components[0] + h / 6.0 * 2.0 * tau1 * c0.dtrace;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double delta = solve_segment(k, carried);
    c.positions[k + 1] = c.positions[k] + delta;
    if (k + 2 < m) {
      const double s0 = sigma_at(c, k), s1 = sigma_at(c, k + 1), sm = mid_sigma(c, k);
      const Segment g = segment_at(geom, c.positions[k] + 0.5 * delta, s0, s1, h);
      const ChartSample node = geom.chart(c.positions[k + 1], s1 * s1);
      carried = kinetic_right(g, delta) + h / 3.0 * 2.0 * s1 * s1 * node.dtrace +
                h / 3.0 * 2.0 * sm * sm * g.ds;
    }
  }
  return c;
}

double l_exp(const Geometry& geom, double x, double tau1, const TangentVector& z, double tau2,
             const CurveOptions& options) {
  return l_exp_curve(geom, x, tau1, z, tau2, options).positions.back();
}

QPartials q_partials(const Geometry& geom, const GeodesicResult& r) {
  if (!r.converged) throw NoConvergence("first variations need a converged geodesic");
  if (r.near_cut) {
    throw NearCutLocus(fmt::format("pair (x = {}, tau1 = {}; y = {}, tau2 = {}) is near the cut locus",
                                   r.x, r.tau1, r.y, r.tau2));
  }
  const ChartSample start = geom.chart(r.curve.positions.front(), r.tau1);
  const ChartSample end = geom.chart(r.curve.positions.back(), r.tau2);
  const double v1 = r.velocity.front(), v2 = r.velocity.back();
  const double s1 = std::sqrt(r.tau1), s2 = std::sqrt(r.tau2);
  const int n = geom.dimension();
  QPartials p;
  p.d_tau1 = s1 * (start.metric * v1 * v1 - start.trace);
  p.d_tau2 = s2 * (end.trace - end.metric * v2 * v2);
  p.grad1 = TangentVector::along_chart(n, -2.0 * s1 * v1, r.tau1);
  p.grad2 = TangentVector::along_chart(n, 2.0 * s2 * v2, r.tau2);
  return p;
}

std::vector<double> h_along(const Geometry& geom, const GeodesicResult& r) {
  const std::size_t m = r.curve.size();
  const int n = geom.dimension();
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double sg = sigma_at(r.curve, k);
    const double tau = sg * sg;
    const FlowSample s = geom.flow_sample_at_point(r.curve.positions[k], tau);
    out[k] = h_quantity(s, tau, TangentVector::along_chart(n, r.velocity[k], tau));
  }
  return out;
}

std::vector<double> h_along_midpoints(const Geometry& geom, const GeodesicResult& r) {
  const std::size_t m = r.curve.size();
  const int n = geom.dimension();
  std::vector<double> out(m - 1);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double sm = mid_sigma(r.curve, k);
    const double tau = sm * sm;
    const double theta = 0.5 * (r.curve.positions[k] + r.curve.positions[k + 1]);
    const FlowSample s = geom.flow_sample_at_point(theta, tau);
    out[k] = h_quantity(s, tau, TangentVector::along_chart(n, r.midpoint_velocity[k], tau));
  }
  return out;
}

double kappa_integral(const Geometry& geom, const GeodesicResult& r) {
  if (r.velocity.size() != r.curve.size() ||
      r.midpoint_velocity.size() + 1 != r.curve.size()) {
    throw DomainError("geodesic result carries no velocities");
  }
  // tau^{3/2} H dtau = 2 sigma^4 H dsigma, integrated by Simpson per segment.
  const std::vector<double> hn = h_along(geom, r);
  const std::vector<double> hm = h_along_midpoints(geom, r);
  const double step = r.curve.step();
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < hn.size(); ++k) {
    const double s0 = sigma_at(r.curve, k), s1 = sigma_at(r.curve, k + 1);
    const double sm = mid_sigma(r.curve, k);
    sum += 2.0 * std::pow(s0, 4) * hn[k] + 8.0 * std::pow(sm, 4) * hm[k] +
           2.0 * std::pow(s1, 4) * hn[k + 1];
  }
  return sum * step / 6.0;
}

bool LDistanceField::all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](char v) { return v != 0; });
}

LDistanceField l_distance_field(const Geometry& geom, double x, double base_tau,
                                std::span<const double> taus,
                                std::span<const std::size_t> nodes,
                                const CurveOptions& options) {
  if (taus.empty()) throw DomainError("L-distance field needs at least one time");
  const double lowest = *std::min_element(taus.begin(), taus.end());
  if (!(base_tau > 0.0) || !(base_tau < lowest)) {
    throw DomainError(fmt::format("base time {} must satisfy 0 < base < min(tau grid) = {}",
                                  base_tau, lowest));
  }
  geom.check_time(base_tau);
  for (double t : taus) geom.check_time(t);
  for (std::size_t n : nodes) {
    if (n >= geom.node_count()) throw DomainError(fmt::format("node {} not on the mesh", n));
  }

  LDistanceField f;
  f.base_point = x;
  f.base_tau = base_tau;
  f.taus.assign(taus.begin(), taus.end());
  f.nodes.assign(nodes.begin(), nodes.end());
  const std::size_t total = f.taus.size() * f.nodes.size();
  f.L.assign(total, std::numeric_limits<double>::quiet_NaN());
  f.Lbar.assign(total, std::numeric_limits<double>::quiet_NaN());
  f.valid.assign(total, 0);

  const auto count = static_cast<long long>(total);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long e = 0; e < count; ++e) {
    const auto ti = static_cast<std::size_t>(e) / f.nodes.size();
    const auto ni = static_cast<std::size_t>(e) % f.nodes.size();
    const double tau = f.taus[ti];
    try {
      const GeodesicResult r = q_distance(geom, x, base_tau, geom.node(f.nodes[ni]), tau, options);
      f.L[e] = r.length;
      f.Lbar[e] = 2.0 * std::sqrt(tau) * r.length;
      f.valid[e] = 1;
    } catch (const NoConvergence&) {
      f.valid[e] = 0;
    }
  }
  return f;
}

LDistanceField l_distance_field(const Geometry& geom, double x, double base_tau,
                                std::span<const double> taus, const CurveOptions& options) {
  std::vector<std::size_t> all(geom.node_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return l_distance_field(geom, x, base_tau, taus, all, options);
}

AlphaSeries jacobian_alpha(const Geometry& geom, double x, double tau1, const TangentVector& z,
                           std::span<const double> taus, const CurveOptions& options,
                           double dz_dx) {
  AlphaSeries out;
  const double rho1 = geom.metric_at_point(x, tau1).volume_density;
  auto shifted = [&](double offset, double tau) {
    TangentVector zz = z;
    zz.components[0] += offset * dz_dx;
    return l_exp(geom, x + offset, tau1, zz, tau, options);
  };
  for (double tau : taus) {
    if (tau < tau1) throw DomainError(fmt::format("tau = {} precedes tau1 = {}", tau, tau1));
    const double target = l_exp(geom, x, tau1, z, tau, options);
    double derivative = 1.0;
    double step = 0.0;
    if (tau > tau1) {
      step = 1e-3;
      auto central = [&](double hh) { return (shifted(hh, tau) - shifted(-hh, tau)) / (2.0 * hh); };
      double coarse = central(step);
      derivative = coarse;
      for (int it = 0; it < 24; ++it) {
        const double fine = central(0.5 * step);
        step *= 0.5;
        derivative = fine;
        if (std::abs(fine - coarse) <= 1e-4 * std::abs(fine)) break;
        coarse = fine;
      }
    }
    const double rho = geom.metric_at_point(target, tau).volume_density;
    const double jac = derivative * (rho / rho1) * geom.transverse_stretch(x, target);
    if (!(jac > 0.0) || !std::isfinite(jac)) {
      throw ConjugatePoint(fmt::format(
          "Jacobian of the L-exponential map is {} at x = {}, tau = {}", jac, x, tau));
    }
    out.taus.push_back(tau);
    out.targets.push_back(target);
    out.jacobian.push_back(jac);
    out.alpha.push_back(-std::log(jac));
    out.steps.push_back(step);
  }
  return out;
}

}  // namespace levolve
