#include "levolve/diffusion.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "levolve/errors.hpp"

namespace levolve {
namespace {

// Gershgorin bound on the largest eigenvalue of -Laplace.
double spectral_bound(const LaplaceStencil& st) {
  const std::size_t n = st.weights.size();
  double bound = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = st.conductance[i] + st.conductance[(i + n - 1) % n];
    bound = std::max(bound, 2.0 * k / st.weights[i]);
  }
  return bound;
}

// dv/dtau = E * Laplace(v / E) with E = w(tau) / w0.
std::vector<double> rate(const LaplaceStencil& st, const std::vector<double>& w0,
                         const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> u(n), out(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = v[i] * w0[i] / st.weights[i];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ip = (i + 1) % n, im = (i + n - 1) % n;
    const double flux = st.conductance[i] * (u[ip] - u[i]) - st.conductance[im] * (u[i] - u[im]);
    out[i] = flux / w0[i];
  }
  return out;
}

}  // namespace

DiffusionState evolve_density(const Geometry& geom, const DiffusionState& state,
                              double tau_target, const DiffusionOptions& opt) {
  const std::size_t n = geom.node_count();
  if (state.u.size() != n) {
    throw DomainError(fmt::format("density has {} values, mesh has {} nodes", state.u.size(), n));
  }
  geom.check_time(state.tau);
  geom.check_time(tau_target);
  if (tau_target < state.tau) {
    throw DomainError(fmt::format("cannot evolve backward from tau = {} to {}", state.tau,
                                  tau_target));
  }

  const std::vector<double> w0 = geom.laplace_stencil(state.tau).weights;
  std::vector<double> v = state.u;
  DiffusionState out = state;
  double tau = state.tau;

  while (tau < tau_target) {
    const double remaining = tau_target - tau;
    const LaplaceStencil here = geom.laplace_stencil(tau);
    double lambda = spectral_bound(here);
    const double probe = std::min(tau_target, tau + opt.courant * 2.0 / lambda);
    lambda = std::max(lambda, spectral_bound(geom.laplace_stencil(probe)));
    const double limit = opt.courant * 2.0 / lambda;
    if (limit < opt.min_step) {
      throw StabilityError(fmt::format(
          "stable step {} at tau = {} is below the minimum {}", limit, tau, opt.min_step));
    }
    const double count = std::ceil(remaining / limit);
    const double dt = count <= 1.0 ? remaining : remaining / count;
    const double next = count <= 1.0 ? tau_target : tau + dt;

    const std::vector<double> k1 = rate(here, w0, v);
    std::vector<double> trial(n);
    for (std::size_t i = 0; i < n; ++i) trial[i] = v[i] + dt * k1[i];
    const LaplaceStencil there = geom.laplace_stencil(next);
    const std::vector<double> k2 = rate(there, w0, trial);
    for (std::size_t i = 0; i < n; ++i) v[i] += 0.5 * dt * (k1[i] + k2[i]);

    for (std::size_t i = 0; i < n; ++i) {
      const double u = v[i] * w0[i] / there.weights[i];
      if (u < -opt.negative_tolerance) {
        throw NegativeDensity(fmt::format("density {} at node {} and tau = {}", u, i, next));
      }
    }
    tau = next;
    out.last_step = dt;
    ++out.steps;
  }

  const std::vector<double> w = geom.laplace_stencil(tau_target).weights;
  for (std::size_t i = 0; i < n; ++i) out.u[i] = v[i] * w0[i] / w[i];
  out.tau = tau_target;
  return out;
}

double total_mass(const Geometry& geom, const DiffusionState& state) {
  const std::vector<double> w = geom.volume_weights(state.tau).values;
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) m += state.u[i] * w[i];
  return m;
}

Diffusion::Diffusion(Geometry geom, DiffusionState initial, DiffusionOptions options)
    : geom_(std::move(geom)), initial_(std::move(initial)), options_(options) {
  if (initial_.u.size() != geom_.node_count()) {
    throw DomainError("initial density does not match the mesh");
  }
  geom_.check_time(initial_.tau);
}

DiffusionState Diffusion::at(double tau) const {
  return evolve_density(geom_, initial_, tau, options_);
}

std::vector<double> normalize_density(const Geometry& geom, std::vector<double> values,
                                      double tau) {
  const std::vector<double> w = geom.volume_weights(tau).values;
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) m += values[i] * w[i];
  if (!(m > 0.0)) throw DomainError("profile has no mass");
  for (double& v : values) v /= m;
  return values;
}

std::vector<double> uniform_profile(const Geometry& geom, double tau) {
  return normalize_density(geom, std::vector<double>(geom.node_count(), 1.0), tau);
}

std::vector<double> bump_profile(const Geometry& geom, double tau, double center, double width) {
  if (!(width > 0.0)) throw DomainError("bump width must be positive");
  std::vector<double> u(geom.node_count());
  auto bump = [&](double theta, double c) {
    const double d = circle_displacement(c, theta);
    return std::exp(-0.5 * d * d / (width * width));
  };
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double theta = geom.node(i);
    u[i] = bump(theta, center);
    if (geom.zonal()) u[i] += bump(theta, -center);
  }
  return normalize_density(geom, std::move(u), tau);
}

std::vector<double> two_point_profile(const Geometry& geom, double tau, double a, double b,
                                      double width) {
  std::vector<double> pa = bump_profile(geom, tau, a, width);
  const std::vector<double> pb = bump_profile(geom, tau, b, width);
  for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = 0.5 * (pa[i] + pb[i]);
  return pa;
}

}  // namespace levolve
