#include "levolve/geometry.hpp"

#include <fmt/format.h>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "levolve/errors.hpp"

namespace levolve {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Catmull-Rom interpolation through four equally spaced samples; t in [0, 1]
// runs from p1 to p2. Returns value and derivative with respect to t.
std::pair<double, double> catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double c1 = -p0 + p2;
  const double c2 = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3;
  const double c3 = -p0 + 3.0 * p1 - 3.0 * p2 + p3;
  const double value = 0.5 * (2.0 * p1 + c1 * t + c2 * t * t + c3 * t * t * t);
  const double slope = 0.5 * (c1 + 2.0 * c2 * t + 3.0 * c3 * t * t);
  return {value, slope};
}

struct TimeBracket {
  std::size_t k = 0;
  double t = 0.0;
};

TimeBracket bracket_time(const std::vector<double>& taus, double tau) {
  auto it = std::upper_bound(taus.begin(), taus.end(), tau);
  std::size_t k = it == taus.begin() ? 0 : static_cast<std::size_t>(it - taus.begin()) - 1;
  k = std::min(k, taus.size() - 2);
  return {k, (tau - taus[k]) / (taus[k + 1] - taus[k])};
}

}  // namespace

double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

double circle_displacement(double a, double b) {
  double d = std::remainder(b - a, kTwoPi);
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

std::string_view to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::static_flat_circle: return "static_flat_circle";
    case FlowKind::static_round_sphere: return "static_round_sphere";
    case FlowKind::ricci_round_sphere: return "ricci_round_sphere";
    case FlowKind::dilaton_circle: return "dilaton_circle";
    case FlowKind::custom_tabulated: return "custom_tabulated";
  }
  return "unknown";
}

FlowKind flow_kind_from_string(std::string_view name) {
  for (auto kind : {FlowKind::static_flat_circle, FlowKind::static_round_sphere,
                    FlowKind::ricci_round_sphere, FlowKind::dilaton_circle,
                    FlowKind::custom_tabulated}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError(fmt::format("unknown flow model '{}'", name));
}

int FlowModel::dimension() const {
  switch (kind) {
    case FlowKind::static_round_sphere:
    case FlowKind::ricci_round_sphere:
      return 2;
    default:
      return 1;
  }
}

FlowModel FlowModel::flat_circle(double circumference) {
  FlowModel m;
  m.kind = FlowKind::static_flat_circle;
  m.circumference = circumference;
  return m;
}

FlowModel FlowModel::static_sphere(double radius) {
  FlowModel m;
  m.kind = FlowKind::static_round_sphere;
  m.radius = radius;
  return m;
}

FlowModel FlowModel::ricci_sphere(double radius) {
  FlowModel m;
  m.kind = FlowKind::ricci_round_sphere;
  m.radius = radius;
  return m;
}

FlowModel FlowModel::dilaton(double phi0_squared, double coupling, double winding) {
  FlowModel m;
  m.kind = FlowKind::dilaton_circle;
  m.phi0_squared = phi0_squared;
  m.coupling = coupling;
  m.winding = winding;
  return m;
}

FlowModel FlowModel::tabulated(std::shared_ptr<const FlowTable> table) {
  FlowModel m;
  m.kind = FlowKind::custom_tabulated;
  m.table = std::move(table);
  return m;
}

TangentVector TangentVector::along_chart(int dimension, double component, double tau) {
  TangentVector v;
  v.components = Vector::Zero(dimension);
  v.components[0] = component;
  v.tau = tau;
  return v;
}

Geometry::Geometry(FlowModel model, std::size_t nodes, TimeInterval domain)
    : model_(std::move(model)), domain_(domain) {
  if (nodes < 16) {
    throw ConfigError(fmt::format("node count must be at least 16, got {}", nodes));
  }
  if (!(domain_.lo > 0.0) || !(domain_.hi >= domain_.lo)) {
    throw DomainError(fmt::format("tau domain [{}, {}] must satisfy 0 < tau_min <= tau_max",
                                  domain_.lo, domain_.hi));
  }
  spacing_ = kTwoPi / static_cast<double>(nodes);
  nodes_.resize(nodes);

  switch (model_.kind) {
    case FlowKind::static_flat_circle:
      if (!(model_.circumference > 0.0)) throw ConfigError("circumference must be positive");
      break;
    case FlowKind::static_round_sphere:
    case FlowKind::ricci_round_sphere:
      if (!(model_.radius > 0.0)) throw ConfigError("sphere radius must be positive");
      if (nodes % 2 != 0) throw ConfigError("sphere meshes need an even node count");
      break;
    case FlowKind::dilaton_circle:
      if (!(model_.coupling > 0.0)) throw ConfigError("dilaton coupling must be positive");
      if (!(model_.phi0_squared > 0.0)) throw ConfigError("phi0^2 must be positive");
      break;
    case FlowKind::custom_tabulated: {
      const auto& table = model_.table;
      if (!table) throw ConfigError("custom_tabulated model needs a flow table");
      if (table->nodes != nodes) {
        throw ConfigError(fmt::format("flow table has {} nodes but the mesh has {}",
                                      table->nodes, nodes));
      }
      if (domain_.lo < table->taus.front() || domain_.hi > table->taus.back()) {
        throw DomainError(fmt::format("tau domain [{}, {}] exceeds the table range [{}, {}]",
                                      domain_.lo, domain_.hi, table->taus.front(),
                                      table->taus.back()));
      }
      for (double g : table->metric) {
        if (!(g > 0.0)) throw DomainError("flow table metric degenerates (g <= 0)");
      }
      break;
    }
  }

  if (model_.homogeneous()) {
    // Monotone in tau for every closed-form model, so the endpoints suffice.
    if (!(closed_form_scale(domain_.lo) > 0.0) || !(closed_form_scale(domain_.hi) > 0.0)) {
      throw DomainError(fmt::format("metric degenerates inside tau domain [{}, {}]",
                                    domain_.lo, domain_.hi));
    }
  }

  const bool offset = zonal();
  for (std::size_t i = 0; i < nodes; ++i) {
    nodes_[i] = (static_cast<double>(i) + (offset ? 0.5 : 0.0)) * spacing_;
  }
  if (offset) {
    unit_cell_.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      const double lo = static_cast<double>(i) * spacing_;
      unit_cell_[i] = std::numbers::pi * std::abs(std::cos(lo) - std::cos(lo + spacing_));
    }
  }
}

bool Geometry::zonal() const {
  return model_.kind == FlowKind::static_round_sphere ||
         model_.kind == FlowKind::ricci_round_sphere;
}

void Geometry::check_time(double tau) const {
  // Tolerate round-off at the interval ends (times built as products like
  // tau_bar * exp(s)).
  const double slack = 1e-12 * std::max(1.0, std::abs(domain_.hi));
  if (!(tau >= domain_.lo - slack && tau <= domain_.hi + slack)) {
    throw DomainError(fmt::format("tau = {} outside the flow interval [{}, {}]", tau,
                                  domain_.lo, domain_.hi));
  }
}

double Geometry::closed_form_scale(double tau) const {
  switch (model_.kind) {
    case FlowKind::static_flat_circle: {
      const double r = model_.circumference / kTwoPi;
      return r * r;
    }
    case FlowKind::static_round_sphere:
      return model_.radius * model_.radius;
    case FlowKind::ricci_round_sphere:
      return model_.radius * model_.radius + 2.0 * tau;
    case FlowKind::dilaton_circle:
      return model_.phi0_squared -
             2.0 * model_.coupling * model_.winding * model_.winding * tau;
    case FlowKind::custom_tabulated:
      break;
  }
  return 0.0;
}

FlowSample Geometry::closed_form_sample(double tau) const {
  const int n = dimension();
  const double a = closed_form_scale(tau);
  FlowSample s;
  s.S = Tensor::Zero(n, n);
  s.ricci = Tensor::Zero(n, n);
  s.grad_trace = Vector::Zero(n);
  s.div = Vector::Zero(n);

  switch (model_.kind) {
    case FlowKind::static_flat_circle:
      break;
    case FlowKind::static_round_sphere:
      // Unit-sphere orthonormal frame: g = a I and Ric = K g = I.
      s.ricci = Tensor::Identity(n, n);
      break;
    case FlowKind::ricci_round_sphere:
      s.ricci = Tensor::Identity(n, n);
      s.S = s.ricci;
      s.trace = 2.0 / a;
      s.dtau_trace = -4.0 / (a * a);
      s.norm2 = 2.0 / (a * a);
      break;
    case FlowKind::dilaton_circle: {
      const double k = model_.coupling * model_.winding * model_.winding;
      s.S(0, 0) = -k;
      s.trace = -k / a;
      s.dtau_trace = -2.0 * k * k / (a * a);
      s.norm2 = (k / a) * (k / a);
      break;
    }
    case FlowKind::custom_tabulated:
      break;
  }
  return s;
}

MetricSample Geometry::metric_at(std::size_t node, double tau) const {
  return metric_at_point(nodes_.at(node), tau);
}

MetricSample Geometry::metric_at_point(double coordinate, double tau) const {
  check_time(tau);
  const int n = dimension();
  MetricSample m;
  if (homogeneous()) {
    const double a = closed_form_scale(tau);
    m.g = a * Tensor::Identity(n, n);
    m.volume_density = n == 2 ? a : std::sqrt(a);
  } else {
    m.g = Tensor::Constant(1, 1, chart(coordinate, tau).metric);
    m.volume_density = std::sqrt(m.g(0, 0));
  }
  return m;
}

FlowSample Geometry::tabulated_node_sample(std::size_t node, double tau) const {
  const FlowTable& table = *model_.table;
  const std::size_t n_nodes = nodes_.size();
  const auto tb = bracket_time(table.taus, tau);

  auto lerp_g = [&](std::size_t i) {
    return (1.0 - tb.t) * table.g(i, tb.k) + tb.t * table.g(i, tb.k + 1);
  };
  auto lerp_s = [&](std::size_t i) {
    return (1.0 - tb.t) * table.s(i, tb.k) + tb.t * table.s(i, tb.k + 1);
  };
  // Centered difference in the time index, one-sided at the table ends.
  auto dtau_trace_at = [&](std::size_t i, std::size_t k) {
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = std::min(k + 1, table.taus.size() - 1);
    const double tr_lo = table.s(i, lo) / table.g(i, lo);
    const double tr_hi = table.s(i, hi) / table.g(i, hi);
    return (tr_hi - tr_lo) / (table.taus[hi] - table.taus[lo]);
  };

  const std::size_t ip = (node + 1) % n_nodes;
  const std::size_t im = (node + n_nodes - 1) % n_nodes;
  const double h = spacing_;
  const double g0 = lerp_g(node), gp = lerp_g(ip), gm = lerp_g(im);
  const double s0 = lerp_s(node), sp = lerp_s(ip), sm = lerp_s(im);
  const double tr0 = s0 / g0, trp = sp / gp, trm = sm / gm;

  FlowSample out;
  out.S = Tensor::Constant(1, 1, s0);
  out.ricci = Tensor::Zero(1, 1);
  out.trace = tr0;
  out.norm2 = tr0 * tr0;
  out.dtau_trace = (1.0 - tb.t) * dtau_trace_at(node, tb.k) + tb.t * dtau_trace_at(node, tb.k + 1);
  out.grad_trace = Vector::Constant(1, (trp - trm) / (2.0 * h));
  const double dg = (gp - gm) / (2.0 * h);
  const double ds = (sp - sm) / (2.0 * h);
  // nabla^0 S_00 = g^{00} (d S_00 - 2 Gamma S_00), Gamma = dg / 2g.
  out.div = Vector::Constant(1, (ds - dg / g0 * s0) / g0);
  const double rg0 = std::sqrt(g0), rgp = std::sqrt(gp), rgm = std::sqrt(gm);
  const double kp = 2.0 / ((rg0 + rgp) * h);
  const double km = 2.0 / ((rg0 + rgm) * h);
  out.lap_trace = (kp * (trp - tr0) - km * (tr0 - trm)) / (rg0 * h);
  return out;
}

FlowSample Geometry::flow_sample(std::size_t node, double tau) const {
  check_time(tau);
  if (homogeneous()) return closed_form_sample(tau);
  return tabulated_node_sample(node, tau);
}

FlowSample Geometry::flow_sample_at_point(double coordinate, double tau) const {
  check_time(tau);
  if (homogeneous()) return closed_form_sample(tau);

  const std::size_t n = nodes_.size();
  const double p = wrap_angle(coordinate) / spacing_;
  const auto i1 = static_cast<std::size_t>(std::floor(p)) % n;
  const double t = p - std::floor(p);
  const std::size_t i0 = (i1 + n - 1) % n, i2 = (i1 + 1) % n, i3 = (i1 + 2) % n;
  const FlowSample s0 = tabulated_node_sample(i0, tau), s1 = tabulated_node_sample(i1, tau),
                   s2 = tabulated_node_sample(i2, tau), s3 = tabulated_node_sample(i3, tau);
  auto mix = [&](auto get) { return catmull_rom(get(s0), get(s1), get(s2), get(s3), t).first; };

  FlowSample out;
  out.S = Tensor::Constant(1, 1, mix([](const FlowSample& s) { return s.S(0, 0); }));
  out.ricci = Tensor::Zero(1, 1);
  out.trace = mix([](const FlowSample& s) { return s.trace; });
  out.norm2 = out.trace * out.trace;
  out.dtau_trace = mix([](const FlowSample& s) { return s.dtau_trace; });
  out.lap_trace = mix([](const FlowSample& s) { return s.lap_trace; });
  out.grad_trace = Vector::Constant(1, mix([](const FlowSample& s) { return s.grad_trace[0]; }));
  out.div = Vector::Constant(1, mix([](const FlowSample& s) { return s.div[0]; }));
  return out;
}

ChartSample Geometry::chart(double coordinate, double tau) const {
  check_time(tau);
  if (homogeneous()) {
    const FlowSample s = closed_form_sample(tau);
    return {closed_form_scale(tau), 0.0, s.trace, 0.0};
  }
  const FlowTable& table = *model_.table;
  const auto tb = bracket_time(table.taus, tau);
  const std::size_t n = nodes_.size();
  const double p = wrap_angle(coordinate) / spacing_;
  const auto i1 = static_cast<std::size_t>(std::floor(p)) % n;
  const double t = p - std::floor(p);
  const std::size_t idx[4] = {(i1 + n - 1) % n, i1, (i1 + 1) % n, (i1 + 2) % n};
  double g[4], tr[4];
  for (int k = 0; k < 4; ++k) {
    const double gk = (1.0 - tb.t) * table.g(idx[k], tb.k) + tb.t * table.g(idx[k], tb.k + 1);
    const double sk = (1.0 - tb.t) * table.s(idx[k], tb.k) + tb.t * table.s(idx[k], tb.k + 1);
    g[k] = gk;
    tr[k] = sk / gk;
  }
  const auto [gv, gd] = catmull_rom(g[0], g[1], g[2], g[3], t);
  const auto [sv, sd] = catmull_rom(tr[0], tr[1], tr[2], tr[3], t);
  return {gv, gd / spacing_, sv, sd / spacing_};
}

LaplaceStencil Geometry::laplace_stencil(double tau) const {
  check_time(tau);
  const std::size_t n = nodes_.size();
  const double h = spacing_;
  LaplaceStencil st;
  st.weights.resize(n);
  st.conductance.resize(n);

  if (zonal()) {
    const double a = closed_form_scale(tau);
    for (std::size_t i = 0; i < n; ++i) {
      st.weights[i] = a * unit_cell_[i];
      // Face between node i and i + 1 sits at (i + 1) h; the metric scale
      // cancels between face length and normal derivative.
      st.conductance[i] =
          std::numbers::pi * std::abs(std::sin(static_cast<double>(i + 1) * h)) / h;
    }
    return st;
  }

  std::vector<double> root(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = homogeneous() ? closed_form_scale(tau) : chart(nodes_[i], tau).metric;
    root[i] = std::sqrt(g);
    st.weights[i] = root[i] * h;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double face = 0.5 * (root[i] + root[(i + 1) % n]);
    st.conductance[i] = 1.0 / (face * h);
  }
  return st;
}

ScalarField Geometry::volume_weights(double tau) const {
  return {laplace_stencil(tau).weights, tau};
}

ScalarField Geometry::laplace_beltrami(const ScalarField& field, double tau) const {
  const std::size_t n = nodes_.size();
  if (field.values.size() != n) {
    throw DomainError(fmt::format("field has {} values, mesh has {} nodes",
                                  field.values.size(), n));
  }
  const LaplaceStencil st = laplace_stencil(tau);
  const auto& u = field.values;
  ScalarField out{std::vector<double>(n), tau};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ip = (i + 1) % n, im = (i + n - 1) % n;
    const double flux = st.conductance[i] * (u[ip] - u[i]) - st.conductance[im] * (u[i] - u[im]);
    out.values[i] = flux / st.weights[i];
  }
  return out;
}

std::vector<double> Geometry::coordinate_gradient(std::span<const double> values) const {
  const std::size_t n = nodes_.size();
  if (values.size() != n) throw DomainError("gradient input does not match the mesh");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (values[(i + 1) % n] - values[(i + n - 1) % n]) / (2.0 * spacing_);
  }
  return out;
}

double Geometry::transverse_stretch(double from, double to) const {
  if (!zonal()) return 1.0;
  return std::abs(std::sin(to)) / std::abs(std::sin(from));
}

std::size_t Geometry::nearest_node(double coordinate) const {
  const std::size_t n = nodes_.size();
  const double p = wrap_angle(coordinate) / spacing_ - (zonal() ? 0.5 : 0.0);
  const auto k = static_cast<long long>(std::llround(p));
  return static_cast<std::size_t>(((k % static_cast<long long>(n)) + static_cast<long long>(n)) %
                                  static_cast<long long>(n));
}

std::pair<std::size_t, std::size_t> Geometry::bracketing_nodes(double coordinate) const {
  const std::size_t n = nodes_.size();
  const double p = wrap_angle(coordinate) / spacing_ - (zonal() ? 0.5 : 0.0);
  const auto k = static_cast<long long>(std::floor(p));
  const auto nn = static_cast<long long>(n);
  const auto lo = static_cast<std::size_t>(((k % nn) + nn) % nn);
  return {lo, (lo + 1) % n};
}

Geometry build_geometry(const FlowModel& model, std::size_t nodes, TimeInterval domain) {
  return Geometry(model, nodes, domain);
}

namespace {

// Smallest eigenvalue of a symmetric 1x1 or 2x2 matrix.
double min_eigenvalue(const Tensor& q) {
  if (q.rows() == 1) return q(0, 0);
  const double mean = 0.5 * (q(0, 0) + q(1, 1));
  const double half = 0.5 * (q(0, 0) - q(1, 1));
  return mean - std::hypot(half, q(0, 1));
}

void check_vector(const Vector& v, int n) {
  if (v.size() != n) {
    throw DomainError(fmt::format("tangent vector has {} components, manifold dimension is {}",
                                  v.size(), n));
  }
}

}  // namespace

double d_quantity(const FlowSample& s, const MetricSample& metric, const TangentVector& x) {
  const auto n = static_cast<int>(metric.g.rows());
  check_vector(x.components, n);
  const Vector& X = x.components;
  return -s.dtau_trace - s.lap_trace - 2.0 * s.norm2 + 4.0 * s.div.dot(X) -
         2.0 * s.grad_trace.dot(X) + 2.0 * X.dot(s.ricci * X) - 2.0 * X.dot(s.S * X);
}

double d_quantity(const Geometry& geom, std::size_t node, double tau, const TangentVector& x) {
  return d_quantity(geom.flow_sample(node, tau), geom.metric_at(node, tau), x);
}

double h_quantity(const FlowSample& s, double tau, const TangentVector& x) {
  if (!(tau > 0.0)) throw DomainError("H(S, X) needs tau > 0");
  check_vector(x.components, static_cast<int>(s.S.rows()));
  const Vector& X = x.components;
  return -s.dtau_trace - s.trace / tau - 2.0 * s.grad_trace.dot(X) + 2.0 * X.dot(s.S * X);
}

double h_quantity(const Geometry& geom, std::size_t node, double tau, const TangentVector& x) {
  return h_quantity(geom.flow_sample(node, tau), tau, x);
}

DNonnegReport verify_d_nonneg(const Geometry& geom, std::span<const double> taus,
                              double tolerance) {
  const int n = geom.dimension();
  DNonnegReport report;
  report.tolerance = tolerance;
  report.minimum = std::numeric_limits<double>::infinity();

  // Magnitudes |X|_g used when the quadratic part is not positive definite.
  static constexpr double kMagnitudes[] = {0.0, 1e-3, 1e-2, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0};
  const int directions = n == 1 ? 2 : 32;

  for (double tau : taus) {
    for (std::size_t node = 0; node < geom.node_count(); ++node) {
      const FlowSample s = geom.flow_sample(node, tau);
      const MetricSample m = geom.metric_at(node, tau);
      TangentVector zero{Vector::Zero(n), tau};
      // D(X) = D(0) + b.X + X^T Q X with Q = 2 (Ric - S).
      const Vector b = 4.0 * s.div - 2.0 * s.grad_trace;
      const Tensor Q = 2.0 * (s.ricci - s.S);

      double best = std::numeric_limits<double>::infinity();
      TangentVector best_x = zero;
      bool closed = false;

      if (min_eigenvalue(Q) > 1e-12) {
        const Vector x = -0.5 * Q.inverse() * b;
        best_x = {x, tau};
        best = d_quantity(s, m, best_x);
        closed = true;
      } else {
        for (int d = 0; d < directions; ++d) {
          Vector dir(n);
          if (n == 1) {
            dir[0] = d == 0 ? 1.0 : -1.0;
          } else {
            const double angle = 2.0 * std::numbers::pi * d / directions;
            dir << std::cos(angle), std::sin(angle);
          }
          const double norm = std::sqrt(dir.dot(m.g * dir));
          for (double mag : kMagnitudes) {
            TangentVector x{dir * (mag / norm), tau};
            const double v = d_quantity(s, m, x);
            if (v < best) {
              best = v;
              best_x = x;
            }
          }
        }
      }
      if (best < report.minimum) {
        report.minimum = best;
        report.node = node;
        report.tau = tau;
        report.argmin = best_x;
        report.closed_form = closed;
      }
    }
  }
  report.pass = report.minimum >= -tolerance;
  return report;
}

double flow_consistency_residual(const Geometry& geom, std::size_t node, double tau, double h) {
  const MetricSample up = geom.metric_at(node, tau + h);
  const MetricSample down = geom.metric_at(node, tau - h);
  const FlowSample s = geom.flow_sample(node, tau);
  const Tensor fd = (up.g - down.g) / (2.0 * h);
  return (fd - 2.0 * s.S).cwiseAbs().maxCoeff();
}

}  // namespace levolve
