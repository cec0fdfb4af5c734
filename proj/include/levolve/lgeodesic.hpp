#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "levolve/geometry.hpp"

namespace levolve {

struct CurveOptions {
  std::size_t samples = 64;  // M, points on the sigma grid including both ends
  double gradient_tolerance = 1e-10;
  int max_iterations = 10000;
  double tie_tolerance = 1e-8;  // relative gap below which two minima count as tied
  double perturbation = 0.5;    // amplitude bound for the randomized start
  std::uint64_t seed = 0;
};

// A curve sampled on a uniform grid in sigma = sqrt(tau). Positions are the
// unwrapped chart coordinate, so winding is visible in the data.
struct DiscreteCurve {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  std::vector<double> positions;

  std::size_t size() const { return positions.size(); }
  double step() const { return (sigma2 - sigma1) / static_cast<double>(positions.size() - 1); }
  double sigma(std::size_t k) const { return sigma1 + step() * static_cast<double>(k); }
  double tau(std::size_t k) const { return sigma(k) * sigma(k); }

  static DiscreteCurve straight(double from, double to, double tau1, double tau2,
                                std::size_t samples);
};

struct GeodesicResult {
  DiscreteCurve curve;
  double x = 0.0;  // endpoints as requested (chart coordinates)
  double y = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double length = 0.0;  // Q when this is the multistart winner
  bool is_minimum = false;
  bool converged = false;
  bool near_cut = false;
  double gradient_norm = 0.0;
  int iterations = 0;
  int starts = 0;
  std::vector<double> velocity;           // chart component of dgamma/dtau per sample
  std::vector<double> midpoint_velocity;  // same, at segment midpoints
  TangentVector x1;              // X(tau1)
  TangentVector x2;              // X(tau2)
};

// Discrete sigma-form action. Each segment contributes delta^2 / (2 c) with
// c the Simpson integral of 1/a over the segment (the exact minimum for a
// position-independent metric), plus a Simpson rule for the potential.
double l_length(const Geometry& geom, const DiscreteCurve& curve);

GeodesicResult q_distance(const Geometry& geom, double x, double tau1, double y, double tau2,
                          const CurveOptions& options = {});

// Endpoint of the L-geodesic leaving x at tau1 with sqrt(tau1) * gamma'(tau1) = Z,
// as an unwrapped chart coordinate.
double l_exp(const Geometry& geom, double x, double tau1, const TangentVector& z, double tau2,
             const CurveOptions& options = {});
DiscreteCurve l_exp_curve(const Geometry& geom, double x, double tau1, const TangentVector& z,
                          double tau2, const CurveOptions& options = {});

struct QPartials {
  double d_tau1 = 0.0;
  double d_tau2 = 0.0;
  TangentVector grad1;  // gradients as vectors (index raised with g)
  TangentVector grad2;
};

QPartials q_partials(const Geometry& geom, const GeodesicResult& result);

// Integral of tau^{3/2} H(S, X) along the curve.
double kappa_integral(const Geometry& geom, const GeodesicResult& result);

// H(S, X) at every sample of a geodesic, X taken from the stored velocities.
std::vector<double> h_along(const Geometry& geom, const GeodesicResult& result);
std::vector<double> h_along_midpoints(const Geometry& geom, const GeodesicResult& result);

struct LDistanceField {
  double base_point = 0.0;
  double base_tau = 0.0;
  std::vector<double> taus;
  std::vector<std::size_t> nodes;
  std::vector<double> L;     // [tau_index * nodes.size() + node position]
  std::vector<double> Lbar;  // 2 sqrt(tau) L
  std::vector<char> valid;

  std::size_t index(std::size_t tau_index, std::size_t node_pos) const {
    return tau_index * nodes.size() + node_pos;
  }
  bool all_valid() const;
};

LDistanceField l_distance_field(const Geometry& geom, double x, double base_tau,
                                std::span<const double> taus,
                                std::span<const std::size_t> nodes,
                                const CurveOptions& options = {});
// Every mesh node.
LDistanceField l_distance_field(const Geometry& geom, double x, double base_tau,
                                std::span<const double> taus,
                                const CurveOptions& options = {});

struct AlphaSeries {
  std::vector<double> taus;
  std::vector<double> targets;   // F_tau(x), unwrapped
  std::vector<double> jacobian;  // volume Jacobian of F_tau at x
  std::vector<double> alpha;     // -ln jacobian
  std::vector<double> steps;     // finite-difference step chosen per tau
};

// Jacobian of x -> l_exp(x, Z(x)) by central differences along the direction
// (1, dz_dx), relative to the volume forms of g(tau1) and g(tau).
AlphaSeries jacobian_alpha(const Geometry& geom, double x, double tau1, const TangentVector& z,
                           std::span<const double> taus, const CurveOptions& options = {},
                           double dz_dx = 0.0);

}  // namespace levolve
