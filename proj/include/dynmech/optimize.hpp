#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"
#include "mechanism.hpp"
#include "value.hpp"

namespace dynmech {

// Relaxed principal objective: expected total surplus over the truncated horizon minus
// the information rent (1 - F_1) times the envelope of the agent's utility.
// Period 1 is split exactly at eta(1): states at or below it stop, states above continue.
inline double relaxed_objective(const Environment& env, const Mechanism& mech, const std::vector<double>& eta_in) {
  const int T = env.T;
  std::vector<double> eta = eta_in;
  if (eta.size() < static_cast<std::size_t>(T)) eta.resize(T, env.grid(T).hi);
  eta[T - 1] = env.grid(T).hi;
  const PeriodGrid& g1 = env.grid(1);

  // Period-1 evaluation points: nodes plus eta(1) when it is interior.
  std::vector<double> pts = g1.x;
  const double e1 = eta[0];
  bool split = T > 1 && e1 > g1.lo && e1 < g1.hi;
  if (split) {
    pts.push_back(e1);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  }

  // S[t] and R[t]: continuation surplus and envelope tables of period t, indexed by the
  // previous-period evaluation point (slice) and node.
  Table S_next, R_next;
  Weights w, v;
  for (int t = T; t >= 2; --t) {
    const PeriodGrid& g = env.grid(t);
    const std::vector<double>& prev = (t == 2) ? pts : env.grid(t - 1).x;
    const bool mem = mech.alloc[t - 1].memory;
    const std::size_t S = mem ? prev.size() : 1;
    Table Sc(S, std::vector<double>(g.size())), Rc = Sc;
    const PeriodGrid* gn = t < T ? &env.grid(t + 1) : nullptr;
    const double dt = env.disc(t);
    const Poly2& up = env.principal.u[t - 1];
    const Poly2& ua = env.agent.u[t - 1];
    for (std::size_t m = 0; m < S; ++m) {
      Memo memo = mem ? Memo::at(prev[m]) : Memo::none();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.x[i];
        const double a = mech.allocation(env, t, x, memo);
        double s = dt * (up(x, a) + ua(x, a));
        double r = dt * env.agent.d_theta(t, x, a);
        if (gn && x > eta[t - 1]) {
          const std::size_t ns = mech.alloc[t].memory ? i : 0;
          env.weights(t, x, a, w);
          env.impulse(t, x, a, v);
          s += w.dot(S_next[ns]);
          r += v.dot(R_next[ns]);
        }
        Sc[m][i] = s;
        Rc[m][i] = r;
      }
    }
    S_next = std::move(Sc);
    R_next = std::move(Rc);
  }

  auto value_at = [&](std::size_t k, bool cont, double& s, double& r) {
    const double x = pts[k];
    const double a = mech.allocation(env, 1, x, Memo::none());
    s = env.disc(1) * (env.principal.value(1, x, a) + env.agent.value(1, x, a));
    r = env.disc(1) * env.agent.d_theta(1, x, a);
    if (cont && T > 1) {
      const std::size_t ns = mech.alloc[1].memory ? k : 0;
      env.weights(1, x, a, w);
      env.impulse(1, x, a, v);
      s += w.dot(S_next[ns]);
      r += v.dot(R_next[ns]);
    }
  };
  auto integrand = [&](std::size_t k, bool cont) {
    double s, r;
    value_at(k, cont, s, r);
    const double x = pts[k];
    return g1.interp(env.init_density, x) * s - (1.0 - env.initial_cdf(x)) * r;
  };
  const bool any_cont = T > 1 && e1 < g1.hi;
  std::vector<double> f_stop(pts.size()), f_cont(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!any_cont || pts[k] <= e1) f_stop[k] = integrand(k, false);
    if (any_cont && pts[k] >= e1) f_cont[k] = integrand(k, true);
  }
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const bool cont = any_cont && pts[k] >= e1;
    const auto& f = cont ? f_cont : f_stop;
    total += 0.5 * (pts[k + 1] - pts[k]) * (f[k] + f[k + 1]);
  }
  if (!std::isfinite(total)) throw NonFiniteError("relaxed objective is not finite");
  return total;
}

// Per-period affine allocation family a_t = slope * theta + memory * prev + intercept.
struct AffineFamily {
  std::vector<char> memory;  // per period
  std::vector<double> lo, hi;

  std::size_t dim() const {
    std::size_t d = 0;
    for (std::size_t t = 0; t < memory.size(); ++t) d += memory[t] ? 3 : 2;
    return d;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (std::size_t t = 0; t < memory.size(); ++t) {
      std::string k = std::to_string(t + 1);
      n.push_back("slope_" + k);
      if (memory[t]) n.push_back("memory_" + k);
      n.push_back("intercept_" + k);
    }
    return n;
  }

  std::vector<StateFn> rules(const std::vector<double>& p) const {
    std::vector<StateFn> out;
    std::size_t k = 0;
    for (std::size_t t = 0; t < memory.size(); ++t) {
      Poly2 poly;
      poly.terms.push_back({p[k++], 1, 0});
      if (memory[t]) poly.terms.push_back({p[k++], 0, 1});
      poly.terms.push_back({p[k++], 0, 0});
      out.push_back(StateFn::polynomial(poly, memory[t] != 0));
    }
    return out;
  }

  Mechanism mechanism(const std::vector<double>& p) const { return with_zero_payments(rules(p)); }
};

inline AffineFamily affine_family(int T, bool memory, double lo = -10.0, double hi = 10.0) {
  AffineFamily f;
  f.memory.assign(T, 0);
  for (int t = 1; t < T; ++t) f.memory[t] = memory ? 1 : 0;
  f.lo.assign(f.dim(), lo);
  f.hi.assign(f.dim(), hi);
  return f;
}

struct OptimizerConfig {
  std::uint64_t seed = 7;
  int starts = 8;
  int max_sweeps = 60;
  double xtol = 1e-6;
  double ftol = 1e-12;
};

struct OptimizerResult {
  std::vector<double> params;
  double value = -std::numeric_limits<double>::infinity();
  double grad_norm = 0.0;
  std::vector<double> restart_values;
  std::vector<std::vector<double>> restart_params;
  std::size_t evaluations = 0;
};

// Golden-section maximization of f on [a, b].
inline double golden_max(const std::function<double(double)>& f, double a, double b, double xtol, double& fbest) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > xtol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  double x = fc >= fd ? c : d;
  fbest = std::max(fc, fd);
  return x;
}

inline double central_grad_norm(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                double h = 1e-5) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double x0 = x[k];
    x[k] = x0 + h;
    double fp = f(x);
    x[k] = x0 - h;
    double fm = f(x);
    x[k] = x0;
    double g = (fp - fm) / (2.0 * h);
    s += g * g;
  }
  return std::sqrt(s);
}

// Golden-section line searches starting from the coordinate directions; after each
// sweep the net displacement replaces the direction that gained most (direction-set
// update), which keeps coordinate sweeps from zig-zagging on correlated parameters.
inline OptimizerResult maximize(const std::function<double(const std::vector<double>&)>& f0,
                                const std::vector<double>& lo, const std::vector<double>& hi,
                                const OptimizerConfig& cfg = {}) {
  OptimizerResult res;
  const std::size_t n = lo.size();
  std::size_t evals = 0;
  auto f = [&](const std::vector<double>& x) {
    ++evals;
    double v = f0(x);
    if (!std::isfinite(v)) throw NonFiniteError("objective is not finite at a probed point");
    return v;
  };
  std::mt19937_64 rng(cfg.seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  double width = 0.0;
  for (std::size_t k = 0; k < n; ++k) width = std::max(width, hi[k] - lo[k]);

  // Maximize along unit direction d from x; returns the gain and updates x, fx, h.
  auto line_search = [&](std::vector<double>& x, double& fx, const std::vector<double>& d, double& h) {
    double tlo = -std::numeric_limits<double>::infinity(), thi = -tlo;
    for (std::size_t k = 0; k < n; ++k) {
      if (d[k] > 0.0) {
        tlo = std::max(tlo, (lo[k] - x[k]) / d[k]);
        thi = std::min(thi, (hi[k] - x[k]) / d[k]);
      } else if (d[k] < 0.0) {
        tlo = std::max(tlo, (hi[k] - x[k]) / d[k]);
        thi = std::min(thi, (lo[k] - x[k]) / d[k]);
      }
    }
    auto ray = [&](double t) {
      std::vector<double> y = x;
      for (std::size_t k = 0; k < n; ++k) y[k] = std::clamp(x[k] + t * d[k], lo[k], hi[k]);
      return f(y);
    };
    double gain = 0.0, best_t = 0.0;
    for (int grow = 0; grow < 40; ++grow) {
      double a = std::max(tlo, -h), b = std::min(thi, h);
      if (!(b > a)) break;
      double fb;
      double t = golden_max(ray, a, b, cfg.xtol, fb);
      if (fb > fx + gain) {
        gain = fb - fx;
        best_t = t;
      }
      bool at_edge = (t - a < 0.01 * (b - a) && a > tlo) || (b - t < 0.01 * (b - a) && b < thi);
      if (!at_edge) break;
      h *= 2.0;
    }
    if (gain > 0.0) {
      for (std::size_t k = 0; k < n; ++k) x[k] = std::clamp(x[k] + best_t * d[k], lo[k], hi[k]);
      fx += gain;
    }
    h = std::max(4.0 * std::abs(best_t), 1e3 * cfg.xtol);
    return gain;
  };

  for (int s = 0; s < cfg.starts; ++s) {
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * unit();
    double fx = f(x);
    std::vector<std::vector<double>> dirs(n, std::vector<double>(n, 0.0));
    std::vector<double> steps(n, 0.5 * width);
    for (std::size_t k = 0; k < n; ++k) dirs[k][k] = 1.0;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      const std::vector<double> x_old = x;
      const double f_old = fx;
      std::size_t big = 0;
      double big_gain = -1.0;
      for (std::size_t k = 0; k < n; ++k) {
        double g = line_search(x, fx, dirs[k], steps[k]);
        if (g > big_gain) {
          big_gain = g;
          big = k;
        }
      }
      std::vector<double> d(n);
      double dn = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        d[k] = x[k] - x_old[k];
        dn += d[k] * d[k];
      }
      dn = std::sqrt(dn);
      if (dn > 0.0) {
        for (double& v : d) v /= dn;
        double h = 2.0 * dn;
        line_search(x, fx, d, h);
        if (n > 1) {
          dirs.erase(dirs.begin() + static_cast<std::ptrdiff_t>(big));
          steps.erase(steps.begin() + static_cast<std::ptrdiff_t>(big));
          dirs.push_back(d);
          steps.push_back(h);
        }
      }
      if (fx - f_old <= cfg.ftol * std::max(1.0, std::abs(fx))) break;
    }
    res.restart_values.push_back(fx);
    res.restart_params.push_back(x);
    if (fx > res.value) {
      res.value = fx;
      res.params = x;
    }
  }
  res.grad_norm = central_grad_norm(f, res.params);
  res.evaluations = evals;
  return res;
}

struct AllocationOptimum {
  OptimizerResult opt;
  std::vector<double> eta;
  Mechanism mech;
};

inline AllocationOptimum optimize_allocation(const Environment& env, const AffineFamily& fam,
                                             const std::vector<double>& eta, const OptimizerConfig& cfg = {}) {
  if (fam.dim() > 16) throw SchemaError("allocation family has more than 16 parameters");
  auto obj = [&](const std::vector<double>& p) { return relaxed_objective(env, fam.mechanism(p), eta); };
  AllocationOptimum out;
  out.opt = maximize(obj, fam.lo, fam.hi, cfg);
  out.eta = eta;
  out.mech = fam.mechanism(out.opt.params);
  return out;
}

struct RPReport {
  double ex_ante = 0.0;
  double bottom = 0.0;  // interim payoff at the bottom state of period 1
  bool pass = true;
};

inline RPReport rp_check(const Environment& env, const ValueSolution& sol, double tol = 1e-9) {
  RPReport r;
  r.ex_ante = sol.ex_ante;
  r.bottom = sol.at(1).V[0][0];
  (void)env;
  r.pass = r.ex_ante >= -tol;
  return r;
}

// Truthful forced-horizon payoffs non-decreasing in the state for every horizon.
inline ValidationReport monotone_payoff_check(const Environment& env, const Mechanism& mech, double slack = 1e-9) {
  ValidationReport r;
  r.name = "monotone_payoff";
  for (int tau = 1; tau <= env.T; ++tau) {
    auto D = horizon_payoff(env, mech, tau);
    for (int t = 1; t <= tau; ++t)
      for (std::size_t m = 0; m < D[t - 1].size(); ++m)
        for (std::size_t i = 0; i + 1 < D[t - 1][m].size(); ++i) {
          double d = D[t - 1][m][i] - D[t - 1][m][i + 1];
          if (d > slack) {
            std::ostringstream os;
            os << "tau=" << tau << " t=" << t << " slice=" << m << " node=" << i;
            r.flag(d, os.str());
          }
        }
  }
  return r;
}

inline StateFn shifted(const StateFn& f, double c) {
  StateFn g = f;
  if (g.kind == StateFn::Kind::Poly) {
    g.poly.terms.push_back({c, 0, 0});
  } else {
    for (auto& row : g.table)
      for (double& v : row) v += c;
  }
  return g;
}

// Shifts the period-1 continuing and stopping payments by one common constant so that
// the bottom state's value is zero; the stop region and incentives are unchanged.
inline Mechanism force_bottom_zero(const Environment& env, const Mechanism& mech, const ValueSolution& sol,
                                   double* shift = nullptr) {
  const double c = -sol.at(1).V[0][0] / env.disc(1);
  Mechanism out = mech;
  out.pay.phi[0] = shifted(mech.pay.phi[0], c);
  out.pay.xi[0] = shifted(mech.pay.xi[0], c);
  if (shift) *shift = c;
  return out;
}

}  // namespace dynmech
