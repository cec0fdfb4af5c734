#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "levolve/flow_table.hpp"

namespace levolve {

// Tensors and vectors live in at most two dimensions. Fixed capacity keeps
// them on the stack.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;

enum class FlowKind {
  static_flat_circle,
  static_round_sphere,
  ricci_round_sphere,
  dilaton_circle,
  custom_tabulated,
};

std::string_view to_string(FlowKind kind);
FlowKind flow_kind_from_string(std::string_view name);

// A closed manifold evolving by dg/dtau = 2S. Circle models use the angle
// coordinate on [0, 2pi); sphere models use the arc coordinate along a
// meridian great circle, with fields understood as zonal (functions of the
// polar angle only).
struct FlowModel {
  FlowKind kind = FlowKind::static_flat_circle;
  double circumference = 6.283185307179586;  // static_flat_circle
  double radius = 1.0;                       // r0 for both sphere models
  double phi0_squared = 10.0;                // dilaton_circle
  double coupling = 1.0;                     // alpha
  double winding = 1.0;                      // c
  std::shared_ptr<const FlowTable> table;    // custom_tabulated

  int dimension() const;
  bool homogeneous() const { return kind != FlowKind::custom_tabulated; }

  static FlowModel flat_circle(double circumference = 6.283185307179586);
  static FlowModel static_sphere(double radius = 1.0);
  static FlowModel ricci_sphere(double radius = 1.0);
  static FlowModel dilaton(double phi0_squared, double coupling, double winding);
  static FlowModel tabulated(std::shared_ptr<const FlowTable> table);
};

struct TimeInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double tau) const { return tau >= lo && tau <= hi; }
};

struct MetricSample {
  Tensor g;
  double volume_density = 0.0;  // sqrt(det g)
};

// Every ingredient of D(S, X) and H(S, X) at one point and time. Covectors
// (grad_trace, div) are given in the same frame as the tensors.
struct FlowSample {
  Tensor S;
  Tensor ricci;
  double trace = 0.0;       // g^{ij} S_ij
  double dtau_trace = 0.0;  // d/dtau of the trace at a fixed point
  double lap_trace = 0.0;   // Laplace-Beltrami of the trace
  double norm2 = 0.0;       // |S_ij|^2
  Vector grad_trace;        // d_j (trace)
  Vector div;               // nabla^i S_ij
};

struct TangentVector {
  Vector components;  // contravariant
  double tau = 0.0;

  static TangentVector along_chart(int dimension, double component, double tau);
};

struct ScalarField {
  std::vector<double> values;
  double tau = 0.0;
};

// Chart data along the one-dimensional curve coordinate: metric coefficient
// a = g_00, trace S, and their derivatives in the coordinate.
struct ChartSample {
  double metric = 0.0;
  double dmetric = 0.0;
  double trace = 0.0;
  double dtrace = 0.0;
};

// Finite-volume form of the Laplace-Beltrami operator: node weights (volume
// of each cell) and face conductances between node i and i + 1.
struct LaplaceStencil {
  std::vector<double> weights;
  std::vector<double> conductance;
};

class Geometry {
 public:
  Geometry(FlowModel model, std::size_t nodes, TimeInterval domain);

  const FlowModel& model() const { return model_; }
  int dimension() const { return model_.dimension(); }
  bool homogeneous() const { return model_.homogeneous(); }
  bool zonal() const;
  std::size_t node_count() const { return nodes_.size(); }
  double node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<double>& nodes() const { return nodes_; }
  double spacing() const { return spacing_; }
  TimeInterval tau_domain() const { return domain_; }

  void check_time(double tau) const;

  MetricSample metric_at(std::size_t node, double tau) const;
  MetricSample metric_at_point(double coordinate, double tau) const;
  FlowSample flow_sample(std::size_t node, double tau) const;
  FlowSample flow_sample_at_point(double coordinate, double tau) const;
  ChartSample chart(double coordinate, double tau) const;

  ScalarField volume_weights(double tau) const;
  LaplaceStencil laplace_stencil(double tau) const;
  ScalarField laplace_beltrami(const ScalarField& field, double tau) const;

  // Periodic centered difference in the chart coordinate.
  std::vector<double> coordinate_gradient(std::span<const double> values) const;

  // Ratio of transverse volume elements of the unit background between two
  // chart positions; 1 on circles, |sin(to)| / |sin(from)| on the sphere.
  double transverse_stretch(double from, double to) const;

  // Index of the node nearest to a chart coordinate, and the two nodes
  // bracketing it.
  std::size_t nearest_node(double coordinate) const;
  std::pair<std::size_t, std::size_t> bracketing_nodes(double coordinate) const;

 private:
  FlowSample closed_form_sample(double tau) const;
  double closed_form_scale(double tau) const;
  FlowSample tabulated_node_sample(std::size_t node, double tau) const;

  FlowModel model_;
  TimeInterval domain_;
  std::vector<double> nodes_;
  double spacing_ = 0.0;
  std::vector<double> unit_cell_;  // sphere: half-band area on the unit sphere
};

// Wraps an angle into [0, 2pi).
double wrap_angle(double theta);
// Signed shortest displacement from a to b on the circle, in (-pi, pi].
double circle_displacement(double a, double b);

Geometry build_geometry(const FlowModel& model, std::size_t nodes,
                        TimeInterval domain);

double d_quantity(const Geometry& geom, std::size_t node, double tau,
                  const TangentVector& x);
double d_quantity(const FlowSample& sample, const MetricSample& metric,
                  const TangentVector& x);
double h_quantity(const Geometry& geom, std::size_t node, double tau,
                  const TangentVector& x);
double h_quantity(const FlowSample& sample, double tau, const TangentVector& x);

struct DNonnegReport {
  double minimum = 0.0;
  std::size_t node = 0;
  double tau = 0.0;
  TangentVector argmin;
  bool closed_form = false;  // minimum found from a positive-definite form
  bool pass = false;
  double tolerance = 0.0;
};

DNonnegReport verify_d_nonneg(const Geometry& geom, std::span<const double> taus,
                              double tolerance = 1e-8);

// max |(g(tau + h) - g(tau - h)) / 2h - 2 S(tau)| over frame components.
double flow_consistency_residual(const Geometry& geom, std::size_t node,
                                 double tau, double h);

}  // namespace levolve
