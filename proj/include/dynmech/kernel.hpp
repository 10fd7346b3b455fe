#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace dynmech {

// Contiguous block of quadrature weights on a grid.
struct Weights {
  std::size_t first = 0;
  std::vector<double> w;

  double dot(const std::vector<double>& f) const {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * f[first + k];
    return s;
  }
  double sum() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }
};

// Transition kernel for one step t -> t+1.
struct TransitionKernel {
  enum class Kind { AffineUniform, Tabular };
  Kind kind = Kind::AffineUniform;

  // next = c1*theta + c2*a + omega, omega ~ U[0, width]
  double c1 = 0.0;
  double c2 = 0.0;
  double width = 1.0;

  // Tabular density over (prev node, allocation node, next node).
  std::vector<double> prev_nodes;
  std::vector<double> alloc_nodes;
  std::vector<double> dens;  // [ip * na + ia] * nn + j
  std::size_t n_next = 0;
  bool fd_fallback = true;

  static TransitionKernel affine(double c1, double c2, double width) {
    if (!(width > 0.0)) throw DegenerateError("affine-uniform kernel needs width > 0");
    TransitionKernel k;
    k.kind = Kind::AffineUniform;
    k.c1 = c1;
    k.c2 = c2;
    k.width = width;
    return k;
  }

  // Rows are renormalized so that trapezoid quadrature on next gives 1.
  static TransitionKernel tabular(const PeriodGrid& prev, std::vector<double> alloc_nodes,
                                  std::vector<double> dens, const PeriodGrid& next) {
    TransitionKernel k;
    k.kind = Kind::Tabular;
    k.prev_nodes = prev.x;
    k.alloc_nodes = std::move(alloc_nodes);
    k.n_next = next.size();
    if (k.alloc_nodes.empty()) throw SchemaError("tabular kernel needs at least one allocation node");
    if (dens.size() != k.prev_nodes.size() * k.alloc_nodes.size() * k.n_next)
      throw SchemaError("tabular kernel table has wrong shape");
    k.dens = std::move(dens);
    k.renormalize(next);
    return k;
  }

  void renormalize(const PeriodGrid& next) {
    const std::size_t rows = dens.size() / n_next;
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = &dens[r * n_next];
      double s = 0.0;
      for (std::size_t j = 0; j < n_next; ++j) s += next.tw[j] * row[j];
      if (!(s > 0.0)) throw DegenerateError("tabular kernel row " + std::to_string(r) + " has no mass");
      for (std::size_t j = 0; j < n_next; ++j) row[j] /= s;
    }
  }

  const double* raw_row(std::size_t ip, std::size_t ia) const {
    return &dens[(ip * alloc_nodes.size() + ia) * n_next];
  }

  // Bilinear interpolation of the density row in (theta, a), clamped.
  void row(double theta, double a, std::vector<double>& out) const {
    out.assign(n_next, 0.0);
    auto bracket = [](const std::vector<double>& nodes, double v, std::size_t& k, double& f) {
      if (nodes.size() == 1 || v <= nodes.front()) {
        k = 0;
        f = 0.0;
        return;
      }
      if (v >= nodes.back()) {
        k = nodes.size() - 2;
        f = 1.0;
        return;
      }
      auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
      k = static_cast<std::size_t>(it - nodes.begin()) - 1;
      f = (v - nodes[k]) / (nodes[k + 1] - nodes[k]);
    };
    std::size_t ip, ia;
    double fp, fa;
    bracket(prev_nodes, theta, ip, fp);
    bracket(alloc_nodes, a, ia, fa);
    const bool one_a = alloc_nodes.size() == 1;
    for (int dp = 0; dp < 2; ++dp) {
      double wp = dp == 0 ? 1.0 - fp : fp;
      if (wp == 0.0) continue;
      for (int da = 0; da < (one_a ? 1 : 2); ++da) {
        double wa = one_a ? 1.0 : (da == 0 ? 1.0 - fa : fa);
        if (wa == 0.0) continue;
        const double* r = raw_row(ip + dp, ia + da);
        for (std::size_t j = 0; j < n_next; ++j) out[j] += wp * wa * r[j];
      }
    }
  }

  // Lower end of the support shift for affine kernels.
  double shift(double theta, double a) const { return c1 * theta + c2 * a; }

  void weights(const PeriodGrid& next, double theta, double a, Weights& out) const {
    if (kind == Kind::AffineUniform) {
      double s = shift(theta, a);
      hat_integrals(next, s, s + width, out.first, out.w);
      double tot = 0.0;
      for (double v : out.w) tot += v;
      for (double& v : out.w) v /= tot;
      return;
    }
    std::vector<double> r;
    row(theta, a, r);
    out.first = 0;
    out.w.assign(n_next, 0.0);
    double tot = 0.0;
    for (std::size_t j = 0; j < n_next; ++j) {
      out.w[j] = next.tw[j] * r[j];
      tot += out.w[j];
    }
    for (double& v : out.w) v /= tot;
  }

  double cdf(const PeriodGrid& next, double x, double theta, double a) const {
    if (kind == Kind::AffineUniform) {
      double s = shift(theta, a);
      return std::clamp((x - s) / width, 0.0, 1.0);
    }
    std::vector<double> r;
    row(theta, a, r);
    double tot = next.integrate(r);
    return std::clamp(next.integrate_to(r, x) / tot, 0.0, 1.0);
  }

  double density(const PeriodGrid& next, double x, double theta, double a) const {
    if (kind == Kind::AffineUniform) {
      double s = shift(theta, a);
      return (x >= s && x <= s + width) ? 1.0 / width : 0.0;
    }
    if (x < next.lo || x > next.hi) return 0.0;
    std::vector<double> r;
    row(theta, a, r);
    return next.interp(r, x) / next.integrate(r);
  }

  // Weights v with  sum_j v_j g(x_j) ~ -int g(x) dF(x|theta,a)/dtheta dx,
  // the one-step impulse response of the next state to the current state.
  void impulse(const PeriodGrid& next, double theta, double a, Weights& out) const {
    if (kind == Kind::AffineUniform) {
      weights(next, theta, a, out);
      for (double& v : out.w) v *= c1;
      return;
    }
    if (!fd_fallback) throw DerivativeError("tabular kernel has no state derivative and finite differences are disabled");
    double e = 0.5 * (prev_nodes[1] - prev_nodes[0]);
    double tp = std::min(theta + e, prev_nodes.back());
    double tm = std::max(theta - e, prev_nodes.front());
    std::vector<double> rp, rm;
    row(tp, a, rp);
    row(tm, a, rm);
    double sp = next.integrate(rp), sm = next.integrate(rm);
    out.first = 0;
    out.w.assign(n_next, 0.0);
    double cp = 0.0, cm = 0.0;
    for (std::size_t j = 0; j < n_next; ++j) {
      if (j > 0) {
        double d = 0.5 * (next.x[j] - next.x[j - 1]);
        cp += d * (rp[j - 1] + rp[j]);
        cm += d * (rm[j - 1] + rm[j]);
      }
      double dF = (cp / sp - cm / sm) / (tp - tm);
      out.w[j] = -next.tw[j] * dF;
    }
  }

  // Inverse-CDF draw given a uniform u in [0,1).
  double sample(const PeriodGrid& next, double theta, double a, double u) const {
    if (kind == Kind::AffineUniform) return shift(theta, a) + width * u;
    std::vector<double> r;
    row(theta, a, r);
    double target = u * next.integrate(r);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < next.size(); ++i) {
      double h = next.x[i + 1] - next.x[i];
      double cell = 0.5 * h * (r[i] + r[i + 1]);
      if (acc + cell >= target && cell > 0.0) {
        // Solve r_i s + (r_{i+1}-r_i) s^2/(2h) = target - acc for s in [0,h].
        double need = target - acc;
        double slope = (r[i + 1] - r[i]) / h;
        double s;
        if (std::abs(slope) < 1e-14) {
          s = need / r[i];
        } else {
          double disc = r[i] * r[i] + 2.0 * slope * need;
          s = (-r[i] + std::sqrt(std::max(disc, 0.0))) / slope;
        }
        return next.x[i] + std::clamp(s, 0.0, h);
      }
      acc += cell;
    }
    return next.hi;
  }
};

}  // namespace dynmech
