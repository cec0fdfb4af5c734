#pragma once

#include <cstddef>
#include <vector>

#include "levolve/geometry.hpp"

namespace levolve {

struct DiffusionState {
  std::vector<double> u;  // density relative to the volume measure of g(tau)
  double tau = 0.0;
  double last_step = 0.0;
  std::size_t steps = 0;
};

struct DiffusionOptions {
  double courant = 0.4;  // fraction of the RK2 stability limit 2 / lambda_max
  double min_step = 1e-9;
  double negative_tolerance = 1e-10;
};

// Advances du/dtau = Laplace(u) - S u with Heun's method. The state is carried
// as v = u * w(tau) / w(tau0), which turns the equation into the conservative
// form dv/dtau = E * Laplace(v / E), so the discrete mass is exact up to
// rounding. Steps are re-derived from the Gershgorin bound each step and
// shortened so the last one lands on tau_target.
DiffusionState evolve_density(const Geometry& geom, const DiffusionState& state,
                              double tau_target, const DiffusionOptions& options = {});

// Integral of u against the volume measure of g(state.tau).
double total_mass(const Geometry& geom, const DiffusionState& state);

// A diffusion started from a fixed initial state. Every query evolves from
// the initial state, so results do not depend on query order.
class Diffusion {
 public:
  Diffusion(Geometry geom, DiffusionState initial, DiffusionOptions options = {});

  const Geometry& geometry() const { return geom_; }
  const DiffusionState& initial() const { return initial_; }
  DiffusionState at(double tau) const;

 private:
  Geometry geom_;
  DiffusionState initial_;
  DiffusionOptions options_;
};

// Initial profiles, normalized to unit mass at tau. On the sphere they are
// symmetrized so the density is zonal.
std::vector<double> uniform_profile(const Geometry& geom, double tau);
std::vector<double> bump_profile(const Geometry& geom, double tau, double center, double width);
std::vector<double> two_point_profile(const Geometry& geom, double tau, double a, double b,
                                      double width = 0.25);

// Rescales values so that sum(values * weights(tau)) = 1.
std::vector<double> normalize_density(const Geometry& geom, std::vector<double> values,
                                      double tau);

}  // namespace levolve
