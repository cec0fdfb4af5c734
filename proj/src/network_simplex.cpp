#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "levolve/errors.hpp"
#include "levolve/ot_solvers.hpp"

namespace levolve {
namespace {

constexpr int kDegenerateRunBeforeBland = 50;

struct Cell {
  int i = 0;
  int j = 0;
};

void check_inputs(const std::vector<double>& supply, const std::vector<double>& demand,
                  const Eigen::MatrixXd& cost) {
  if (supply.empty() || demand.empty()) throw Infeasible("transport problem has an empty side");
  if (cost.rows() != static_cast<Eigen::Index>(supply.size()) ||
      cost.cols() != static_cast<Eigen::Index>(demand.size())) {
    throw DomainError(fmt::format("cost matrix is {}x{}, marginals are {} and {}", cost.rows(),
                                  cost.cols(), supply.size(), demand.size()));
  }
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      if (!std::isfinite(cost(i, j))) {
        throw NonFiniteCost(fmt::format("cost entry ({}, {}) is {}", i, j, cost(i, j)));
      }
    }
  }
  for (double w : supply) {
    if (!(w >= 0.0)) throw Infeasible("supply weights must be nonnegative");
  }
  for (double w : demand) {
    if (!(w >= 0.0)) throw Infeasible("demand weights must be nonnegative");
  }
  const double sa = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double sb = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) {
    throw Infeasible(fmt::format("total supply {} differs from total demand {}", sa, sb));
  }
}

}  // namespace

ExactSolution solve_transport_exact(const std::vector<double>& supply,
                                    const std::vector<double>& demand,
                                    const Eigen::MatrixXd& cost) {
  check_inputs(supply, demand, cost);
  const int m = static_cast<int>(supply.size());
  const int n = static_cast<int>(demand.size());
  const int nodes = m + n;

  ExactSolution sol;
  sol.plan = Eigen::MatrixXd::Zero(m, n);
  std::vector<Cell> basis;
  basis.reserve(nodes - 1);

  // Northwest-corner basis: a staircase of m + n - 1 cells, some possibly
  // carrying zero flow.
  {
    std::vector<double> ra = supply, rb = demand;
    int i = 0, j = 0;
    for (;;) {
      const double x = std::min(ra[i], rb[j]);
      sol.plan(i, j) = x;
      basis.push_back({i, j});
      ra[i] -= x;
      rb[j] -= x;
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1) {
        ++j;
      } else if (j == n - 1) {
        ++i;
      } else if (ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double price_tol = 1e-12 * scale;
  const long long max_pivots = 50LL * nodes * nodes + 1000;
  int degenerate_run = 0;
  bool bland = false;

  std::vector<std::vector<std::pair<int, int>>> adj(nodes);  // (neighbor, basis index)
  std::vector<double> pot(nodes);
  std::vector<int> parent(nodes), parent_cell(nodes), queue;
  queue.reserve(nodes);

  auto build_tree = [&](int root) {
    for (auto& a : adj) a.clear();
    for (int b = 0; b < static_cast<int>(basis.size()); ++b) {
      adj[basis[b].i].push_back({m + basis[b].j, b});
      adj[m + basis[b].j].push_back({basis[b].i, b});
    }
    std::fill(parent.begin(), parent.end(), -2);
    queue.clear();
    parent[root] = -1;
    parent_cell[root] = -1;
    queue.push_back(root);
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int node = queue[q];
      for (auto [next, b] : adj[node]) {
        if (parent[next] != -2) continue;
        parent[next] = node;
        parent_cell[next] = b;
        queue.push_back(next);
      }
    }
    if (static_cast<int>(queue.size()) != nodes) {
      throw NoConvergence("transportation simplex basis is not a spanning tree");
    }
  };

  for (long long pivot = 0;; ++pivot) {
    if (pivot > max_pivots) {
      throw NoConvergence(fmt::format("transportation simplex exceeded {} pivots", max_pivots));
    }
    // Potentials from the tree rooted at row 0: u_i + v_j = c_ij on the basis.
    build_tree(0);
    pot[0] = 0.0;
    for (std::size_t q = 1; q < queue.size(); ++q) {
      const int node = queue[q];
      const Cell c = basis[parent_cell[node]];
      pot[node] = cost(c.i, c.j) - pot[parent[node]];
    }

    int ei = -1, ej = -1;
    double best = -price_tol;
    for (int i = 0; i < m && !(bland && ei >= 0); ++i) {
      for (int j = 0; j < n; ++j) {
        const double reduced = cost(i, j) - pot[i] - pot[m + j];
        if (reduced < best) {
          ei = i;
          ej = j;
          if (bland) break;
          best = reduced;
        }
      }
    }
    if (ei < 0) break;

    // Cycle: entering cell plus the tree path from column ej back to row ei.
    build_tree(ei);
    std::vector<int> path;  // basis indices, alternating -, +, -, ...
    for (int node = m + ej; node != ei; node = parent[node]) path.push_back(parent_cell[node]);

    double theta = std::numeric_limits<double>::infinity();
    int leave = -1, leave_index = 0;
    for (std::size_t t = 0; t < path.size(); t += 2) {
      const Cell c = basis[path[t]];
      const double f = sol.plan(c.i, c.j);
      const int index = c.i * n + c.j;
      if (leave < 0 || f < theta || (f == theta && index < leave_index)) {
        theta = f;
        leave = static_cast<int>(t);
        leave_index = index;
      }
    }
    theta = std::max(theta, 0.0);
    for (std::size_t t = 0; t < path.size(); ++t) {
      const Cell c = basis[path[t]];
      sol.plan(c.i, c.j) += (t % 2 == 0) ? -theta : theta;
      if (sol.plan(c.i, c.j) < 0.0) sol.plan(c.i, c.j) = 0.0;
    }
    sol.plan(ei, ej) = theta;
    const Cell gone = basis[path[leave]];
    sol.plan(gone.i, gone.j) = 0.0;
    basis[path[leave]] = {ei, ej};

    ++sol.pivots;
    if (theta <= 0.0) {
      ++sol.degenerate_pivots;
      if (++degenerate_run > kDegenerateRunBeforeBland) bland = true;
    } else {
      degenerate_run = 0;
    }
  }

  sol.bland = bland;
  sol.u.assign(pot.begin(), pot.begin() + m);
  sol.v.assign(pot.begin() + m, pot.end());
  sol.cost = (sol.plan.array() * cost.array()).sum();
  return sol;
}

CertificateReport check_certificate(const ExactSolution& s, const Eigen::MatrixXd& cost,
                                    double support_threshold) {
  CertificateReport r;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      const double gap = s.u[i] + s.v[j] - cost(i, j);
      r.dual_violation = std::max(r.dual_violation, gap);
      if (s.plan(i, j) > support_threshold) {
        r.slackness_violation = std::max(r.slackness_violation, std::abs(gap));
      }
    }
  }
  return r;
}

}  // namespace levolve
