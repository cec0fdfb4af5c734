#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "levolve/diffusion.hpp"
#include "levolve/geometry.hpp"
#include "levolve/lgeodesic.hpp"
#include "levolve/transport.hpp"

namespace levolve {

enum class Abscissa { tau, s, inverse_sqrt_tau, index };
enum class Property { weakly_decreasing, convex, bounded_above };

std::string_view to_string(Abscissa a);
std::string_view to_string(Property p);

struct MonitorSeries {
  std::string name;
  Abscissa abscissa = Abscissa::tau;
  std::vector<double> grid;
  std::vector<double> values;
  Property property = Property::weakly_decreasing;
  double bound = 0.0;  // bounded_above only
  double slack = 1e-3;
  bool pass = true;
  double worst_violation = 0.0;  // largest violation, floored at 0; <= slack passes
  std::string note;

  // Recomputes pass and worst_violation from values, property and slack.
  void evaluate();
};

MonitorSeries make_series(std::string name, Abscissa abscissa, std::vector<double> grid,
                          std::vector<double> values, Property property, double slack,
                          double bound = 0.0);

// Violation amounts per check: increments for weakly_decreasing, negated
// second differences (relative to the chord) for convex, excess over the
// bound for bounded_above.
std::vector<double> violations(const MonitorSeries& series);

// Boltzmann-Shannon entropy sum f ln f w with 0 ln 0 = 0.
double entropy(const Geometry& geom, const std::vector<double>& density, double tau);

double w_entropy(const Geometry& geom, const DiffusionState& state);

double reduced_volume(const Geometry& geom, const LDistanceField& field, std::size_t tau_index);

MonitorSeries min_lbar_gap(const Geometry& geom, const LDistanceField& field, double slack = 1e-3);

MonitorSeries w_entropy_series(const Diffusion& diffusion, const std::vector<double>& taus,
                               double slack = 1e-3);

MonitorSeries reduced_volume_series(const Geometry& geom, const LDistanceField& field,
                                    double slack = 1e-3);

MonitorSeries theta_series(const Diffusion& d1, const Diffusion& d2, double tau_bar1,
                           double tau_bar2, const std::vector<double>& s_grid,
                           double slack = 1e-3, SolverMode mode = SolverMode::exact(),
                           const CurveOptions& options = {});

// Entropy of the pushed-forward measure plus the inf-convolution term plus
// (n/2) ln tau, on `points` times uniform in tau^{-1/2}; the abscissa is
// tau^{-1/2} in increasing order.
struct ConvexityProfile {
  MonitorSeries series;
  std::vector<double> taus;
  std::vector<double> entropy;
  std::vector<double> potential_term;
};
ConvexityProfile convexity_profile(const Geometry& geom, const DiscreteMeasure& nu1,
                                   const PotentialField& phi, double tau1, double tau2,
                                   std::size_t points = 9, double slack = 1e-3,
                                   const CurveOptions& options = {});

struct PLWitness {
  double value = 0.0;  // hypothesis right side over the prefactor
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool set = false;
};

struct PLOptions {
  std::size_t longitudes = 16;  // sphere: longitude differences per polar pair
  double slack = 1e-3;
  CurveOptions curve;
};

struct PLReport {
  double lambda = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau_bar = 0.0;
  double prefactor = 0.0;
  std::vector<double> v;  // minimal admissible v on the mesh
  std::vector<PLWitness> witness;  // per node: the geodesic that set v there
  std::vector<PLWitness> samples;  // every recorded geodesic
  double lhs = 0.0;  // integral of v at tau_bar
  double rhs = 0.0;  // product of powers of the integrals of u1, u2
  double margin = 0.0;
  bool pass = false;
  std::size_t pairs = 0;
};

double pl_tau_bar(double lambda, double tau1, double tau2);

// On the sphere both profiles must be zonal; otherwise DomainError.
PLReport pl_check(const Geometry& geom, const std::vector<double>& u1,
                  const std::vector<double>& u2, double lambda, double tau1, double tau2,
                  const PLOptions& options = {});

// Largest violation of the hypothesis by v over the recorded geodesics, with v
// at an off-mesh point taken as the smallest of its bracketing nodes (and
// their mirror images on the sphere).
double pl_hypothesis_violation(const Geometry& geom, const PLReport& report,
                               const std::vector<double>& v);

struct PairSample {
  double x = 0.0;
  double tau1 = 0.0;
  double y = 0.0;
  double tau2 = 0.0;
};

// Residual of tau2 dQ/dtau2 + tau1 dQ/dtau1 = 2 tau2^{3/2} S(y) - 2 tau1^{3/2} S(x)
// + K - Q / 2 per pair; near-cut pairs are skipped and counted in the note.
MonitorSeries scaling_identity_check(const Geometry& geom, const std::vector<PairSample>& pairs,
                            double slack = 1e-4, const CurveOptions& options = {});

// tau2^{3/2} (S + |X|^2)(tau2) - tau1^{3/2} (S + |X|^2)(tau1) + K - Q / 2.
double energy_identity_residual(const Geometry& geom, const GeodesicResult& result);

struct TransportBoundReport {
  double lhs = 0.0;
  double bound = 0.0;
  double slack = 1e-3;
  bool pass = false;
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  std::string note;
};

TransportBoundReport transport_bound_check(const Geometry& geom, const DiscreteMeasure& nu1,
                                    const DiscreteMeasure& nu2, double slack = 1e-3,
                                    SolverMode mode = SolverMode::exact(),
                                    const CurveOptions& options = {});

}  // namespace levolve
