#pragma once

#include <Eigen/Core>

#include <vector>

namespace levolve {

struct ExactSolution {
  Eigen::MatrixXd plan;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
  double cost = 0.0;
  int pivots = 0;
  int degenerate_pivots = 0;
  bool bland = false;  // switched to Bland's rule at some point
};

// Transportation simplex on a spanning-tree basis: northwest-corner start,
// Dantzig pricing, Bland's rule after a run of degenerate pivots. Supplies
// and demands must have equal totals; costs may be negative.
ExactSolution solve_transport_exact(const std::vector<double>& supply,
                                    const std::vector<double>& demand,
                                    const Eigen::MatrixXd& cost);

// Largest violation of the dual certificate: max over cells of
// u_i + v_j - c_ij, and max |u_i + v_j - c_ij| over cells carrying mass.
struct CertificateReport {
  double dual_violation = 0.0;
  double slackness_violation = 0.0;
};
CertificateReport check_certificate(const ExactSolution& solution, const Eigen::MatrixXd& cost,
                                    double support_threshold = 1e-14);

struct EntropicSolution {
  Eigen::MatrixXd plan;  // rounded onto the exact marginals
  double cost = 0.0;     // of the rounded plan
  double epsilon = 0.0;
  double marginal_error = 0.0;  // before rounding
  int iterations = 0;
};

// Log-domain Sinkhorn with epsilon scaling, stopped when the l1 marginal error
// drops below tolerance, then rounded to a feasible plan.
EntropicSolution solve_transport_entropic(const std::vector<double>& supply,
                                          const std::vector<double>& demand,
                                          const Eigen::MatrixXd& cost, double epsilon,
                                          double tolerance = 1e-9, int max_iterations = 500000);

}  // namespace levolve
