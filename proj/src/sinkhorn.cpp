#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "levolve/errors.hpp"
#include "levolve/ot_solvers.hpp"

namespace levolve {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Rounds a near-feasible plan onto the exact marginals: scale rows and
// columns down where they overshoot, then spread the remaining deficit as a
// rank-one correction.
Eigen::MatrixXd round_to_marginals(Eigen::MatrixXd p, const std::vector<double>& a,
                                   const std::vector<double>& b) {
  const Eigen::Index m = p.rows(), n = p.cols();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = p.row(i).sum();
    if (r > a[i]) p.row(i) *= a[i] / r;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = p.col(j).sum();
    if (c > b[j]) p.col(j) *= b[j] / c;
  }
  Eigen::VectorXd er(m), ec(n);
  for (Eigen::Index i = 0; i < m; ++i) er[i] = std::max(0.0, a[i] - p.row(i).sum());
  for (Eigen::Index j = 0; j < n; ++j) ec[j] = std::max(0.0, b[j] - p.col(j).sum());
  const double total = er.sum();
  if (total > 0.0) p += er * ec.transpose() / total;
  return p;
}

}  // namespace

EntropicSolution solve_transport_entropic(const std::vector<double>& a,
                                          const std::vector<double>& b,
                                          const Eigen::MatrixXd& cost, double epsilon,
                                          double tolerance, int max_iterations) {
  const auto m = static_cast<Eigen::Index>(a.size());
  const auto n = static_cast<Eigen::Index>(b.size());
  if (m == 0 || n == 0) throw Infeasible("transport problem has an empty side");
  if (cost.rows() != m || cost.cols() != n) {
    throw DomainError(fmt::format("cost matrix is {}x{}, marginals are {} and {}", cost.rows(),
                                  cost.cols(), m, n));
  }
  if (!(epsilon > 0.0)) throw DomainError("entropic regularization needs epsilon > 0");
  if (!cost.allFinite()) throw NonFiniteCost("cost matrix has non-finite entries");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) {
    throw Infeasible(fmt::format("total supply {} differs from total demand {}", sa, sb));
  }

  Eigen::VectorXd la(m), lb(n);
  for (Eigen::Index i = 0; i < m; ++i) la[i] = a[i] > 0.0 ? std::log(a[i]) : kNegInf;
  for (Eigen::Index j = 0; j < n; ++j) lb[j] = b[j] > 0.0 ? std::log(b[j]) : kNegInf;

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m), g = Eigen::VectorXd::Zero(n);
  std::vector<double> buf(std::max(m, n));

  auto lse = [&](Eigen::Index count) {
    double peak = kNegInf;
    for (Eigen::Index k = 0; k < count; ++k) peak = std::max(peak, buf[k]);
    if (peak == kNegInf) return kNegInf;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < count; ++k) sum += std::exp(buf[k] - peak);
    return peak + std::log(sum);
  };

  // Plan entries: a_i b_j exp((f_i + g_j - c_ij) / eps).
  auto plan_at = [&](double eps) {
    Eigen::MatrixXd p(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double e = la[i] + lb[j] + (f[i] + g[j] - cost(i, j)) / eps;
        p(i, j) = std::exp(e);
      }
    }
    return p;
  };

  const double spread = cost.maxCoeff() - cost.minCoeff();
  double eps = std::max(epsilon, 0.5 * spread);
  EntropicSolution out;
  out.epsilon = epsilon;
  int total_iterations = 0;

  for (;;) {
    const bool final_stage = eps <= epsilon;
    const double stage_tol = final_stage ? tolerance : std::max(tolerance, 1e-3 * eps);
    double err = std::numeric_limits<double>::infinity();
    int it = 0;
    while (err >= stage_tol) {
      if (total_iterations >= max_iterations) {
        throw NoConvergence(fmt::format(
            "Sinkhorn did not reach marginal error {} at epsilon = {} within {} iterations "
            "(error {})",
            stage_tol, eps, max_iterations, err));
      }
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) buf[j] = lb[j] + (g[j] - cost(i, j)) / eps;
        f[i] = -eps * lse(n);
        if (!std::isfinite(f[i])) f[i] = 0.0;
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) buf[i] = la[i] + (f[i] - cost(i, j)) / eps;
        g[j] = -eps * lse(m);
        if (!std::isfinite(g[j])) g[j] = 0.0;
      }
      ++it;
      ++total_iterations;
      // Columns are exact after the g update; measure the row error.
      if (it % 5 == 0 || final_stage) {
        err = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          if (a[i] == 0.0) continue;
          for (Eigen::Index j = 0; j < n; ++j) buf[j] = lb[j] + (f[i] + g[j] - cost(i, j)) / eps;
          err += std::abs(a[i] * std::exp(lse(n)) - a[i]);
        }
      }
    }
    if (final_stage) {
      out.marginal_error = err;
      break;
    }
    eps = std::max(epsilon, 0.5 * eps);
  }

  out.iterations = total_iterations;
  out.plan = round_to_marginals(plan_at(epsilon), a, b);
  out.cost = (out.plan.array() * cost.array()).sum();
  return out;
}

}  // namespace levolve
