#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "levolve/diffusion.hpp"
#include "levolve/geometry.hpp"
#include "levolve/lgeodesic.hpp"
#include "levolve/ot_solvers.hpp"

namespace levolve {

// Weighted points at one time. density, when present, holds values relative
// to the volume measure at tau, one per support point.
struct DiscreteMeasure {
  std::vector<double> support;
  std::vector<double> weights;
  double tau = 0.0;
  std::vector<double> density;

  void validate() const;

  static DiscreteMeasure dirac(double point, double tau);
  // Mesh-supported measure from a density: weights u_i * w_i(tau), renormalized.
  static DiscreteMeasure from_density(const Geometry& geom, const std::vector<double>& u,
                                      double tau);
};

struct SolverMode {
  enum class Kind { exact, entropic };
  Kind kind = Kind::exact;
  double epsilon = 0.0;

  static SolverMode exact() { return {}; }
  static SolverMode entropic(double eps) { return {Kind::entropic, eps}; }
  std::string describe() const;
};

struct TransportPlan {
  Eigen::MatrixXd plan;
  Eigen::MatrixXd cost_matrix;
  std::vector<double> row_marginal;
  std::vector<double> column_marginal;
  double cost = 0.0;
  SolverMode mode;
  std::vector<double> u;  // dual potentials (exact mode)
  std::vector<double> v;
  double marginal_error = 0.0;
  int iterations = 0;
};

Eigen::MatrixXd cost_matrix(const Geometry& geom, const std::vector<double>& support1,
                            double tau1, const std::vector<double>& support2, double tau2,
                            const CurveOptions& options = {});

TransportPlan ot_solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const Eigen::MatrixXd& cost, SolverMode mode = SolverMode::exact());

TransportPlan wasserstein_plan(const Geometry& geom, const DiscreteMeasure& nu1,
                               const DiscreteMeasure& nu2, SolverMode mode = SolverMode::exact(),
                               const CurveOptions& options = {});
double wasserstein_v(const Geometry& geom, const DiscreteMeasure& nu1, const DiscreteMeasure& nu2,
                     SolverMode mode = SolverMode::exact(), const CurveOptions& options = {});

// Theta(s) = 2 (sqrt(tau2) - sqrt(tau1)) V - 2 n (sqrt(tau2) - sqrt(tau1))^2 with
// tau_i = tau_bar_i * e^s and V between the two diffusions at those times.
double renormalized_theta(const Diffusion& d1, const Diffusion& d2, double tau_bar1,
                          double tau_bar2, double s, SolverMode mode = SolverMode::exact(),
                          const CurveOptions& options = {});

// A smooth potential on the mesh with its first and second chart derivatives.
struct PotentialField {
  std::vector<double> values;
  std::vector<double> gradient;  // d phi / d theta
  std::vector<double> hessian;   // d^2 phi / d theta^2

  struct CosineTerm {
    double amplitude = 0.0;
    double frequency = 1.0;
  };
  static PotentialField zero(const Geometry& geom);
  static PotentialField from_cosines(const Geometry& geom, const std::vector<CosineTerm>& terms);
  // Periodic centered differences of nodal values.
  static PotentialField from_values(const Geometry& geom, std::vector<double> values);
};

struct PotentialPushforward {
  std::vector<double> potential;
  std::vector<double> sources;
  std::vector<double> targets;   // F_tau(x_i), unwrapped
  std::vector<double> jacobian;  // volume Jacobian of F_tau
  std::vector<double> density;   // f_tau(F_tau(x_i)) = f1(x_i) / jacobian
  std::vector<double> weights;   // pushed weights (unchanged)
  double tau = 0.0;
  double mass = 0.0;
};

// Pushes a mesh-supported measure with density along x -> l_exp(x, -grad phi / 2).
PotentialPushforward push_forward_geodesic(const Geometry& geom, const DiscreteMeasure& nu1,
                                           const PotentialField& phi, double tau,
                                           const CurveOptions& options = {});

}  // namespace levolve
