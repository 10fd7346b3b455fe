#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "mechanism.hpp"

namespace dynmech {

struct ValidationReport {
  std::string name;
  bool pass = true;
  double worst = 0.0;
  std::string where;
  std::vector<std::string> violations;

  void flag(double magnitude, const std::string& loc) {
    pass = false;
    if (violations.size() < 50) violations.push_back(loc);
    if (magnitude > worst || where.empty()) {
      worst = std::max(worst, magnitude);
      where = loc;
    }
  }
};

// F_{t+1}(x_j | theta, a) at every node x_j of grid t+1.
inline std::vector<double> cdf_on_grid(const Environment& env, int t, double theta, double a) {
  const TransitionKernel& k = env.kernel(t);
  const PeriodGrid& gn = env.grid(t + 1);
  std::vector<double> F(gn.size());
  if (k.kind == TransitionKernel::Kind::AffineUniform) {
    for (std::size_t j = 0; j < gn.size(); ++j) F[j] = k.cdf(gn, gn.x[j], theta, a);
    return F;
  }
  std::vector<double> r;
  k.row(theta, a, r);
  auto c = gn.cumulative(r);
  for (std::size_t j = 0; j < gn.size(); ++j) F[j] = std::clamp(c[j] / c.back(), 0.0, 1.0);
  return F;
}

inline ValidationReport check_full_support(const Environment& env) {
  ValidationReport r;
  r.name = "full_support";
  const PeriodGrid& g1 = env.grid(1);
  for (std::size_t i = 1; i + 1 < g1.size(); ++i)
    if (!(env.init_density[i] > 0.0)) {
      std::ostringstream os;
      os << "t=1 node=" << i;
      r.flag(1.0, os.str());
    }
  for (int t = 1; t < env.T; ++t) {
    const TransitionKernel& k = env.kernel(t);
    if (k.kind == TransitionKernel::Kind::AffineUniform) {
      if (!(k.width > 0.0)) r.flag(1.0, "t=" + std::to_string(t + 1) + " zero-width kernel");
      continue;
    }
    for (std::size_t ip = 0; ip < k.prev_nodes.size(); ++ip)
      for (std::size_t ia = 0; ia < k.alloc_nodes.size(); ++ia) {
        const double* row = k.raw_row(ip, ia);
        for (std::size_t j = 1; j + 1 < k.n_next; ++j)
          if (!(row[j] > 0.0)) {
            std::ostringstream os;
            os << "t=" << t + 1 << " node=" << j << " prev=" << ip << " alloc=" << ia;
            r.flag(1.0, os.str());
          }
      }
  }
  return r;
}

// First-order stochastic dominance of next-state laws along adjacent nodes.
inline ValidationReport check_fosd(const Environment& env, const Mechanism& mech, double tol = 1e-10) {
  ValidationReport r;
  r.name = "fosd";
  for (int t = 1; t < env.T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t S = mech.slices(env, t);
    for (std::size_t m = 0; m < S; ++m) {
      Memo memo = mech.memo(env, t, m);
      std::vector<double> lo = cdf_on_grid(env, t, g.x[0], mech.allocation(env, t, g.x[0], memo));
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        std::vector<double> hi = cdf_on_grid(env, t, g.x[i + 1], mech.allocation(env, t, g.x[i + 1], memo));
        for (std::size_t j = 0; j < hi.size(); ++j) {
          double d = hi[j] - lo[j];
          if (d > tol) {
            std::ostringstream os;
            os << "t=" << t << " slice=" << m << " node=" << i << " x=" << env.grid(t + 1).x[j];
            r.flag(d, os.str());
          }
        }
        lo = std::move(hi);
      }
    }
  }
  return r;
}

// Bounded difference quotients of the agent's utility in the state.
inline ValidationReport check_lipschitz(const Environment& env, const Mechanism& mech) {
  ValidationReport r;
  r.name = "lipschitz";
  for (int t = 1; t <= env.T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const Interval& ar = env.alloc_range[t - 1];
    std::vector<double> allocs = {ar.lo, 0.5 * (ar.lo + ar.hi), ar.hi};
    for (std::size_t m = 0; m < mech.slices(env, t); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (double x : g.x) allocs.push_back(mech.allocation(env, t, x, memo));
    }
    for (double a : allocs)
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        double q = std::abs(env.agent.value(t, g.x[i + 1], a) - env.agent.value(t, g.x[i], a)) / (g.x[i + 1] - g.x[i]);
        if (!std::isfinite(q) || q > env.lipschitz_bound) {
          std::ostringstream os;
          os << "t=" << t << " node=" << i << " a=" << a << " quotient=" << q;
          r.flag(std::isfinite(q) ? q : 1e300, os.str());
        }
      }
  }
  return r;
}

// Supplied state derivatives against central differences at every node.
inline ValidationReport check_utility_derivatives(const Environment& env, double tol = 1e-6) {
  ValidationReport r;
  r.name = "utility_derivatives";
  const double h = 1e-5;
  for (const UtilitySpec* u : {&env.principal, &env.agent})
    for (int t = 1; t <= env.T; ++t) {
      const auto& d = u->du.at(t - 1);
      if (!d) continue;
      const Interval& ar = env.alloc_range[t - 1];
      for (double a : {ar.lo, 0.5 * (ar.lo + ar.hi), ar.hi})
        for (double x : env.grid(t).x) {
          double fd = (u->value(t, x + h, a) - u->value(t, x - h, a)) / (2.0 * h);
          double e = std::abs(fd - (*d)(x, a));
          if (e > tol * std::max(1.0, std::abs(fd))) {
            std::ostringstream os;
            os << "participant=" << u->participant << " t=" << t << " theta=" << x << " a=" << a;
            r.flag(e, os.str());
          }
        }
    }
  return r;
}

inline ValidationReport check_quadrature_closure(const Environment& env, const Mechanism& mech, double tol = 1e-12) {
  ValidationReport r;
  r.name = "quadrature_closure";
  Weights w;
  for (int t = 1; t < env.T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const Interval& ar = env.alloc_range[t - 1];
    for (std::size_t m = 0; m < mech.slices(env, t); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (double x : g.x)
        for (double a : {mech.allocation(env, t, x, memo), ar.lo, ar.hi}) {
          env.weights(t, x, a, w);
          double e = std::abs(w.sum() - 1.0);
          bool neg = std::any_of(w.w.begin(), w.w.end(), [](double v) { return v < 0.0; });
          if (e > tol || neg) {
            std::ostringstream os;
            os << "t=" << t << " theta=" << x << " a=" << a;
            r.flag(neg ? 1.0 : e, os.str());
          }
        }
    }
  }
  return r;
}

inline ValidationReport check_initial_density(const Environment& env, double tol = 1e-12) {
  ValidationReport r;
  r.name = "initial_density";
  double e = std::abs(env.grid(1).integrate(env.init_density) - 1.0);
  if (e > tol) r.flag(e, "t=1");
  return r;
}

// Allocation rule stays within its declared range before clamping.
inline ValidationReport check_allocation_range(const Environment& env, const Mechanism& mech, double tol = 1e-9) {
  ValidationReport r;
  r.name = "allocation_range";
  for (int t = 1; t <= env.T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const Interval& ar = env.alloc_range[t - 1];
    for (std::size_t m = 0; m < mech.slices(env, t); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double a = mech.alloc[t - 1].eval(g, g.x[i], memo);
        double e = std::max(ar.lo - a, a - ar.hi);
        if (e > tol || !std::isfinite(a)) {
          std::ostringstream os;
          os << "t=" << t << " slice=" << m << " node=" << i << " a=" << a;
          r.flag(std::isfinite(e) ? e : 1e300, os.str());
        }
      }
    }
  }
  return r;
}

inline ValidationReport check_finite(const std::string& name, const std::vector<Table>& tables) {
  ValidationReport r;
  r.name = name;
  for (std::size_t t = 0; t < tables.size(); ++t)
    for (std::size_t m = 0; m < tables[t].size(); ++m)
      for (std::size_t i = 0; i < tables[t][m].size(); ++i)
        if (!std::isfinite(tables[t][m][i])) {
          std::ostringstream os;
          os << "t=" << t + 1 << " slice=" << m << " node=" << i;
          r.flag(1.0, os.str());
        }
  return r;
}

}  // namespace dynmech
