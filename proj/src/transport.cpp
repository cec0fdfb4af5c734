#include "levolve/transport.hpp"

#include <fmt/format.h>

#include <cmath>
#include <exception>
#include <numeric>

#include "levolve/errors.hpp"
#include "levolve/parallel.hpp"

namespace levolve {

void DiscreteMeasure::validate() const {
  if (support.empty() || support.size() != weights.size()) {
    throw DomainError(fmt::format("measure has {} points and {} weights", support.size(),
                                  weights.size()));
  }
  if (!density.empty() && density.size() != support.size()) {
    throw DomainError("measure density does not match its support");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError(fmt::format("negative measure weight {}", w));
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError(fmt::format("measure weights sum to {}, not 1", total));
  }
}

DiscreteMeasure DiscreteMeasure::dirac(double point, double tau) {
  return {{point}, {1.0}, tau, {}};
}

DiscreteMeasure DiscreteMeasure::from_density(const Geometry& geom, const std::vector<double>& u,
                                              double tau) {
  const std::size_t n = geom.node_count();
  if (u.size() != n) throw DomainError("density does not match the mesh");
  const std::vector<double> w = geom.volume_weights(tau).values;
  DiscreteMeasure m;
  m.support = geom.nodes();
  m.tau = tau;
  m.weights.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] < 0.0) throw DomainError(fmt::format("negative density {} at node {}", u[i], i));
    m.weights[i] = u[i] * w[i];
    total += m.weights[i];
  }
  if (!(total > 0.0)) throw DomainError("density has no mass");
  m.density.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.weights[i] /= total;
    m.density[i] = u[i] / total;
  }
  return m;
}

std::string SolverMode::describe() const {
  return kind == Kind::exact ? std::string("exact") : fmt::format("entropic(eps={:.17g})", epsilon);
}

Eigen::MatrixXd cost_matrix(const Geometry& geom, const std::vector<double>& support1, double tau1,
                            const std::vector<double>& support2, double tau2,
                            const CurveOptions& options) {
  if (!(tau1 > 0.0) || !(tau2 > tau1)) {
    throw DomainError(fmt::format("need 0 < tau1 < tau2, got {}, {}", tau1, tau2));
  }
  const auto m = static_cast<Eigen::Index>(support1.size());
  const auto n = static_cast<Eigen::Index>(support2.size());
  Eigen::MatrixXd c(m, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m * n));
  const long long total = static_cast<long long>(m) * n;
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long e = 0; e < total; ++e) {
    const Eigen::Index i = e / n, j = e % n;
    try {
      c(i, j) = q_distance(geom, support1[i], tau1, support2[j], tau2, options).length;
    } catch (const NoConvergence& err) {
      errors[e] = std::make_exception_ptr(NoConvergence(fmt::format(
          "cost entry ({}, {}) [x = {}, y = {}]: {}", i, j, support1[i], support2[j], err.what())));
    } catch (...) {
      errors[e] = std::current_exception();
    }
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return c;
}

TransportPlan ot_solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const Eigen::MatrixXd& cost, SolverMode mode) {
  mu.validate();
  nu.validate();
  TransportPlan p;
  p.mode = mode;
  p.cost_matrix = cost;
  if (mode.kind == SolverMode::Kind::exact) {
    ExactSolution s = solve_transport_exact(mu.weights, nu.weights, cost);
    p.plan = std::move(s.plan);
    p.cost = s.cost;
    p.u = std::move(s.u);
    p.v = std::move(s.v);
    p.iterations = s.pivots;
  } else {
    EntropicSolution s = solve_transport_entropic(mu.weights, nu.weights, cost, mode.epsilon);
    p.plan = std::move(s.plan);
    p.cost = s.cost;
    p.marginal_error = s.marginal_error;
    p.iterations = s.iterations;
  }
  p.row_marginal.resize(p.plan.rows());
  p.column_marginal.resize(p.plan.cols());
  for (Eigen::Index i = 0; i < p.plan.rows(); ++i) p.row_marginal[i] = p.plan.row(i).sum();
  for (Eigen::Index j = 0; j < p.plan.cols(); ++j) p.column_marginal[j] = p.plan.col(j).sum();
  return p;
}

TransportPlan wasserstein_plan(const Geometry& geom, const DiscreteMeasure& nu1,
                               const DiscreteMeasure& nu2, SolverMode mode,
                               const CurveOptions& options) {
  const Eigen::MatrixXd c = cost_matrix(geom, nu1.support, nu1.tau, nu2.support, nu2.tau, options);
  return ot_solve(nu1, nu2, c, mode);
}

double wasserstein_v(const Geometry& geom, const DiscreteMeasure& nu1, const DiscreteMeasure& nu2,
                     SolverMode mode, const CurveOptions& options) {
  return wasserstein_plan(geom, nu1, nu2, mode, options).cost;
}

double renormalized_theta(const Diffusion& d1, const Diffusion& d2, double tau_bar1,
                          double tau_bar2, double s, SolverMode mode,
                          const CurveOptions& options) {
  if (!(tau_bar1 > 0.0) || !(tau_bar2 > tau_bar1)) {
    throw DomainError(fmt::format("need 0 < tau_bar1 < tau_bar2, got {}, {}", tau_bar1,
                                  tau_bar2));
  }
  const Geometry& geom = d1.geometry();
  const double scale = std::exp(s);
  const double tau1 = tau_bar1 * scale, tau2 = tau_bar2 * scale;
  geom.check_time(tau1);
  geom.check_time(tau2);
  const DiscreteMeasure m1 = DiscreteMeasure::from_density(geom, d1.at(tau1).u, tau1);
  const DiscreteMeasure m2 = DiscreteMeasure::from_density(geom, d2.at(tau2).u, tau2);
  const double v = wasserstein_v(geom, m1, m2, mode, options);
  const double gap = std::sqrt(tau2) - std::sqrt(tau1);
  return 2.0 * gap * v - 2.0 * geom.dimension() * gap * gap;
}

PotentialField PotentialField::zero(const Geometry& geom) {
  const std::size_t n = geom.node_count();
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

PotentialField PotentialField::from_cosines(const Geometry& geom,
                                            const std::vector<CosineTerm>& terms) {
  PotentialField p = zero(geom);
  for (std::size_t i = 0; i < geom.node_count(); ++i) {
    const double theta = geom.node(i);
    for (const CosineTerm& t : terms) {
      const double k = t.frequency;
      p.values[i] += t.amplitude * std::cos(k * theta);
      p.gradient[i] -= t.amplitude * k * std::sin(k * theta);
      p.hessian[i] -= t.amplitude * k * k * std::cos(k * theta);
    }
  }
  return p;
}

PotentialField PotentialField::from_values(const Geometry& geom, std::vector<double> values) {
  const std::size_t n = geom.node_count();
  if (values.size() != n) throw DomainError("potential does not match the mesh");
  PotentialField p;
  p.gradient = geom.coordinate_gradient(values);
  p.hessian.resize(n);
  const double h = geom.spacing();
  for (std::size_t i = 0; i < n; ++i) {
    p.hessian[i] = (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n]) / (h * h);
  }
  p.values = std::move(values);
  return p;
}

PotentialPushforward push_forward_geodesic(const Geometry& geom, const DiscreteMeasure& nu1,
                                           const PotentialField& phi, double tau,
                                           const CurveOptions& options) {
  nu1.validate();
  const double tau1 = nu1.tau;
  if (tau < tau1) throw DomainError(fmt::format("tau = {} precedes tau1 = {}", tau, tau1));
  const std::size_t n = geom.node_count();
  if (phi.values.size() != n) throw DomainError("potential does not match the mesh");

  const std::vector<double> w1 = geom.volume_weights(tau1).values;
  const int dim = geom.dimension();
  PotentialPushforward out;
  out.tau = tau;
  const std::size_t count = nu1.support.size();
  out.potential.resize(count);
  out.sources = nu1.support;
  out.targets.resize(count);
  out.jacobian.resize(count);
  out.density.resize(count);
  out.weights = nu1.weights;

  std::vector<std::exception_ptr> errors(count);
  const auto total = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long e = 0; e < total; ++e) {
    try {
      const double x = nu1.support[e];
      const std::size_t node = geom.nearest_node(x);
      if (std::abs(circle_displacement(geom.node(node), x)) > 1e-9) {
        throw DomainError(fmt::format("support point {} is not a mesh node", x));
      }
      const ChartSample cs = geom.chart(x, tau1);
      // Z = -grad(phi) / 2 with the index raised by g(tau1).
      const double z = -0.5 * phi.gradient[node] / cs.metric;
      const double dz = -0.5 * phi.hessian[node] / cs.metric +
                        0.5 * phi.gradient[node] * cs.dmetric / (cs.metric * cs.metric);
      const double one[] = {tau};
      const AlphaSeries a = jacobian_alpha(geom, x, tau1, TangentVector::along_chart(dim, z, tau1),
                                           one, options, dz);
      const double f1 = nu1.density.empty() ? nu1.weights[e] / w1[node] : nu1.density[e];
      out.potential[e] = phi.values[node];
      out.targets[e] = a.targets[0];
      out.jacobian[e] = a.jacobian[0];
      out.density[e] = f1 / a.jacobian[0];
    } catch (...) {
      errors[e] = std::current_exception();
    }
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  out.mass = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  return out;
}

}  // namespace levolve
