#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "levolve/geometry.hpp"

namespace levolve::testing {

// Hand-rolled generator: uniform doubles from the top 53 bits of a 64-bit
// Mersenne twister, so draws are identical on every platform.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * unit(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)); }
  double angle() { return uniform(0.0, 2.0 * std::numbers::pi); }

  // Two ordered times in [lo, hi] at least `gap` apart.
  std::pair<double, double> times(double lo, double hi, double gap) {
    const double a = uniform(lo, hi - gap);
    const double b = uniform(a + gap, hi);
    return {a, b};
  }

  // Nonnegative profile: a few random bumps, sometimes with zero patches.
  std::vector<double> profile(const Geometry& geom) {
    const std::size_t n = geom.node_count();
    std::vector<double> u(n, 0.0);
    const int bumps = 1 + static_cast<int>(index(3));
    for (int b = 0; b < bumps; ++b) {
      const double c = angle(), w = uniform(0.3, 1.0), h = uniform(0.2, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = circle_displacement(c, geom.node(i));
        u[i] += h * std::exp(-0.5 * d * d / (w * w));
      }
    }
    const double floor = uniform(-0.1, 0.1);
    for (double& v : u) v = std::max(0.0, v + floor);
    // Sphere meshes carry zonal fields: mirror images along the meridian agree.
    if (geom.zonal()) {
      for (std::size_t i = 0; i < n / 2; ++i) u[n - 1 - i] = u[i];
    }
    return u;
  }

 private:
  std::mt19937_64 rng_;
};

struct NamedModel {
  std::string name;
  FlowModel model;
};

// The three built-in evolving models used throughout; the dilaton coupling
// keeps the metric positive up to tau = 9.
inline std::vector<NamedModel> builtin_models() {
  return {{"static_flat_circle", FlowModel::flat_circle()},
          {"ricci_round_sphere", FlowModel::ricci_sphere(1.0)},
          {"dilaton_circle", FlowModel::dilaton(20.0, 1.0, 1.0)}};
}

inline Geometry make_geometry(const FlowModel& m, std::size_t n = 64, double lo = 0.5,
                              double hi = 5.0) {
  return build_geometry(m, n, {lo, hi});
}

// Adaptive Simpson quadrature, an oracle independent of the library's rules.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-13) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int depth) {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const double flm = f(lm), frm = f(rm);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
          return left + right + (left + right - whole) / 15.0;
        }
        return rec(lo, mid, flo, flm, fmid, left, depth - 1) +
               rec(mid, hi, fmid, frm, fhi, right, depth - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 50);
}

}  // namespace levolve::testing
