#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace dynmech {

// Uniform grid over one period's state interval.
struct PeriodGrid {
  int period = 1;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> x;
  std::vector<double> tw;  // trapezoid weights

  std::size_t size() const { return x.size(); }
  double step() const { return (hi - lo) / static_cast<double>(x.size() - 1); }

  // Cell k and fraction in [0,1] such that v = x[k] + frac*(x[k+1]-x[k]); clamped.
  std::pair<std::size_t, double> locate(double v) const {
    const std::size_t n = x.size();
    if (v <= lo) return {0, 0.0};
    if (v >= hi) return {n - 2, 1.0};
    std::size_t k = static_cast<std::size_t>((v - lo) / step());
    if (k > n - 2) k = n - 2;
    while (k > 0 && v < x[k]) --k;
    while (k < n - 2 && v > x[k + 1]) ++k;
    double frac = (v - x[k]) / (x[k + 1] - x[k]);
    return {k, std::clamp(frac, 0.0, 1.0)};
  }

  std::size_t nearest(double v) const {
    auto [k, f] = locate(v);
    return f < 0.5 ? k : k + 1;
  }

  // Linear interpolation with clamped extrapolation.
  double interp(const std::vector<double>& f, double v) const {
    auto [k, fr] = locate(v);
    if (fr == 0.0) return f[k];
    if (fr == 1.0) return f[k + 1];
    return f[k] + fr * (f[k + 1] - f[k]);
  }

  double integrate(const std::vector<double>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += tw[i] * f[i];
    return s;
  }

  // Exact integral of the piecewise-linear interpolant of f over [lo, v].
  double integrate_to(const std::vector<double>& f, double v) const {
    if (v <= lo) return 0.0;
    if (v >= hi) return integrate(f);
    auto [k, fr] = locate(v);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += 0.5 * (x[i + 1] - x[i]) * (f[i] + f[i + 1]);
    double fv = f[k] + fr * (f[k + 1] - f[k]);
    s += 0.5 * (v - x[k]) * (f[k] + fv);
    return s;
  }

  // Cumulative trapezoid integral of nodal values from lo.
  std::vector<double> cumulative(const std::vector<double>& f) const {
    std::vector<double> c(f.size(), 0.0);
    for (std::size_t i = 1; i < f.size(); ++i)
      c[i] = c[i - 1] + 0.5 * (x[i] - x[i - 1]) * (f[i - 1] + f[i]);
    return c;
  }

  bool contains(double v) const { return v >= lo && v <= hi; }
};

inline PeriodGrid make_grid(int period, double lo, double hi, std::size_t n) {
  if (n < 3) throw DegenerateError("grid for period " + std::to_string(period) + " needs at least 3 nodes");
  if (!(lo < hi)) throw DegenerateError("grid for period " + std::to_string(period) + " has lo >= hi");
  PeriodGrid g;
  g.period = period;
  g.lo = lo;
  g.hi = hi;
  g.x.resize(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g.x[i] = lo + h * static_cast<double>(i);
  g.x.back() = hi;
  g.tw.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double d = 0.5 * (g.x[i + 1] - g.x[i]);
    g.tw[i] += d;
    g.tw[i + 1] += d;
  }
  return g;
}

// Integrals of the grid's hat functions over [a, b]; mass outside the grid
// goes to the boundary nodes (clamped extrapolation).
inline void hat_integrals(const PeriodGrid& g, double a, double b, std::size_t& first,
                          std::vector<double>& w) {
  const std::size_t n = g.size();
  w.clear();
  if (b <= g.lo) {
    first = 0;
    w.push_back(b - a);
    return;
  }
  if (a >= g.hi) {
    first = n - 1;
    w.push_back(b - a);
    return;
  }
  double left_out = a < g.lo ? g.lo - a : 0.0;
  double right_out = b > g.hi ? b - g.hi : 0.0;
  double p0 = std::max(a, g.lo);
  double q0 = std::min(b, g.hi);
  std::size_t k0 = g.locate(p0).first;
  std::size_t k1 = g.locate(q0).first;
  first = k0;
  w.assign(k1 - k0 + 2, 0.0);
  for (std::size_t k = k0; k <= k1; ++k) {
    double xl = g.x[k];
    double xr = g.x[k + 1];
    double p = std::max(p0, xl);
    double q = std::min(q0, xr);
    if (q <= p) continue;
    double h = xr - xl;
    w[k - k0] += ((xr - p) * (xr - p) - (xr - q) * (xr - q)) / (2.0 * h);
    w[k - k0 + 1] += ((q - xl) * (q - xl) - (p - xl) * (p - xl)) / (2.0 * h);
  }
  if (left_out > 0.0) {
    if (first > 0) {
      w.insert(w.begin(), first, 0.0);
      first = 0;
    }
    w[0] += left_out;
  }
  if (right_out > 0.0) {
    std::size_t last = first + w.size() - 1;
    if (last < n - 1) w.resize(w.size() + (n - 1 - last), 0.0);
    w.back() += right_out;
  }
}

}  // namespace dynmech
