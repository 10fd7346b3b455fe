#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"
#include "mechanism.hpp"
#include "validate.hpp"

namespace dynmech {

struct ValueOptions {
  double tie = 1e-9;
  bool strict_literal = false;  // continuation branch without the period-t flow
  bool strict = false;          // raise AssumptionError when single crossing fails
};

struct PeriodValues {
  Table V, J, C, L, mu, mu_bar, Q;
  std::vector<std::vector<char>> stop;
  std::vector<double> eta_slice;   // per slice; NaN when the stop set is not down-closed
  std::vector<char> never_stop;    // per slice
  bool down_closed = true;
  double eta = 0.0;                // NaN if slices disagree or a slice is not down-closed
};

struct ValueSolution {
  std::vector<PeriodValues> p;  // p[t-1]
  std::vector<double> eta;
  bool threshold = true;
  double mfpt = 0.0;
  double ex_ante = 0.0;
  ValueOptions opts;

  const PeriodValues& at(int t) const { return p.at(t - 1); }
};

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Interim payoff of stopping now: disc^t [u1 + xi] + rho(t).
inline double stop_payoff(const Environment& env, const Mechanism& mech, int t, double theta,
                          const Memo& m = Memo::none()) {
  double a = mech.allocation(env, t, theta, m);
  return env.disc(t) * (env.agent.value(t, theta, a) + mech.xi(env, t, theta, m)) + mech.rho(t);
}

// Sentinel below the grid used when a period never stops.
inline double never_stop_eta(const PeriodGrid& g) { return g.lo - g.step(); }

inline ValueSolution solve_value_tables(const Environment& env, const Mechanism& mech, const ValueOptions& opts) {
  mech.check(env);
  const int T = env.T;
  ValueSolution sol;
  sol.opts = opts;
  sol.p.resize(T);
  Weights w;
  for (int t = T; t >= 1; --t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t S = mech.slices(env, t), n = g.size();
    PeriodValues& pv = sol.p[t - 1];
    for (Table* tab : {&pv.V, &pv.J, &pv.C, &pv.L, &pv.mu, &pv.mu_bar, &pv.Q}) tab->assign(S, std::vector<double>(n, 0.0));
    pv.stop.assign(S, std::vector<char>(n, 0));
    const double dt = env.disc(t);
    for (std::size_t m = 0; m < S; ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < n; ++i) {
        const double th = g.x[i];
        const double a = mech.allocation(env, t, th, memo);
        const double u = env.agent.value(t, th, a);
        const double xi = mech.xi(env, t, th, memo);
        const double J = dt * (u + xi) + mech.rho(t);
        pv.J[m][i] = J;
        if (t == T) {
          pv.V[m][i] = J;
          pv.C[m][i] = pv.L[m][i] = pv.mu[m][i] = pv.mu_bar[m][i] = nan_value();
          pv.Q[m][i] = 0.0;
          pv.stop[m][i] = 1;
          continue;
        }
        const PeriodValues& nx = sol.p[t];
        const std::size_t ns = mech.next_slice(t, i);
        env.weights(t, th, a, w);
        const double EV = w.dot(nx.V[ns]);
        const double EJ = w.dot(nx.J[ns]);
        const double EQ = w.dot(nx.Q[ns]);
        const double phi = mech.phi(env, t, th, memo);
        const double C = opts.strict_literal ? EV : dt * (u + phi) + EV;
        const double L = EJ + dt * (phi - xi);
        pv.C[m][i] = C;
        pv.L[m][i] = L;
        pv.mu_bar[m][i] = L + EQ;
        pv.Q[m][i] = std::max(0.0, L - mech.rho(t) + EQ);
        pv.mu[m][i] = C - J;
        pv.stop[m][i] = (C - J <= opts.tie) ? 1 : 0;
        pv.V[m][i] = std::max(J, C);
      }
    }
    pv.eta_slice.assign(S, 0.0);
    pv.never_stop.assign(S, 0);
    pv.down_closed = true;
    for (std::size_t m = 0; m < S; ++m) {
      std::size_t k = 0;
      while (k < n && pv.stop[m][k]) ++k;
      bool closed = true;
      for (std::size_t i = k; i < n; ++i)
        if (pv.stop[m][i]) closed = false;
      if (!closed) {
        pv.down_closed = false;
        pv.eta_slice[m] = nan_value();
      } else if (k == 0) {
        pv.never_stop[m] = 1;
        pv.eta_slice[m] = never_stop_eta(g);
      } else {
        pv.eta_slice[m] = g.x[k - 1];
      }
    }
    pv.eta = pv.eta_slice[0];
    for (double e : pv.eta_slice)
      if (!(e == pv.eta)) pv.eta = nan_value();
  }
  sol.eta.resize(T);
  sol.threshold = true;
  for (int t = 1; t <= T; ++t) {
    sol.eta[t - 1] = sol.p[t - 1].eta;
    if (std::isnan(sol.eta[t - 1])) sol.threshold = false;
  }
  sol.ex_ante = env.grid(1).integrate([&] {
    std::vector<double> f(env.grid(1).size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = env.init_density[i] * sol.p[0].V[0][i];
    return f;
  }());
  return sol;
}

// Stop masses per period under a threshold rule, with the survival measure
// carried as a piecewise-linear density and each period split exactly at eta(t).
struct PassageResult {
  std::vector<double> stop_mass;
  std::vector<double> alive_mass;
  double mean = 0.0;
};

inline PassageResult first_passage(const Environment& env, const Mechanism& mech, const std::vector<double>& eta_in) {
  const int T = env.T;
  std::vector<double> eta = eta_in;
  if (eta.size() == static_cast<std::size_t>(T - 1)) eta.push_back(env.grid(T).hi);
  PassageResult r;
  r.stop_mass.assign(T, 0.0);
  r.alive_mass.assign(T, 0.0);
  Table d(1, env.init_density);
  Weights w;
  for (int t = 1; t <= T; ++t) {
    const PeriodGrid& g = env.grid(t);
    double alive = 0.0;
    for (const auto& row : d) alive += g.integrate(row);
    r.alive_mass[t - 1] = alive;
    if (t == T) {
      r.stop_mass[t - 1] = alive;
      break;
    }
    const double e = eta.at(t - 1);
    double stopped = 0.0;
    for (const auto& row : d) stopped += g.integrate_to(row, e);
    r.stop_mass[t - 1] = stopped;

    const PeriodGrid& gn = env.grid(t + 1);
    const std::size_t Sn = mech.slices(env, t + 1);
    Table M(Sn, std::vector<double>(gn.size(), 0.0));
    std::vector<double> pts;
    if (e < g.lo) {
      pts = g.x;
    } else if (e < g.hi) {
      pts.push_back(e);
      for (double x : g.x)
        if (x > e) pts.push_back(x);
    }
    std::vector<double> pw(pts.size(), 0.0);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      pw[k] += 0.5 * (pts[k + 1] - pts[k]);
      pw[k + 1] += 0.5 * (pts[k + 1] - pts[k]);
    }
    for (std::size_t m = 0; m < d.size(); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        double dv = g.interp(d[m], pts[k]);
        if (dv == 0.0 || pw[k] == 0.0) continue;
        double a = mech.allocation(env, t, pts[k], memo);
        env.weights(t, pts[k], a, w);
        std::size_t ns = mech.next_slice(t, g.nearest(pts[k]));
        for (std::size_t j = 0; j < w.w.size(); ++j) M[ns][w.first + j] += pw[k] * dv * w.w[j];
      }
    }
    for (auto& row : M)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] /= gn.tw[j];
    d = std::move(M);
  }
  for (int t = 1; t <= T; ++t) r.mean += t * r.stop_mass[t - 1];
  return r;
}

inline double mean_first_passage(const Environment& env, const Mechanism& mech, const std::vector<double>& eta) {
  return first_passage(env, mech, eta).mean;
}

// Expected stopping time under a node-wise stop region (no exact splitting).
inline double mean_first_passage_regions(const Environment& env, const Mechanism& mech,
                                         const std::vector<std::vector<std::vector<char>>>& stop) {
  const int T = env.T;
  Table mass(1, std::vector<double>(env.grid(1).size()));
  for (std::size_t i = 0; i < mass[0].size(); ++i) mass[0][i] = env.grid(1).tw[i] * env.init_density[i];
  Weights w;
  double mean = 0.0;
  for (int t = 1; t <= T; ++t) {
    const PeriodGrid& g = env.grid(t);
    if (t == T) {
      for (const auto& row : mass)
        for (double v : row) mean += t * v;
      break;
    }
    Table nxt(mech.slices(env, t + 1), std::vector<double>(env.grid(t + 1).size(), 0.0));
    for (std::size_t m = 0; m < mass.size(); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (mass[m][i] == 0.0) continue;
        if (stop[t - 1][m][i]) {
          mean += t * mass[m][i];
          continue;
        }
        double a = mech.allocation(env, t, g.x[i], memo);
        env.weights(t, g.x[i], a, w);
        std::size_t ns = mech.next_slice(t, i);
        for (std::size_t j = 0; j < w.w.size(); ++j) nxt[ns][w.first + j] += mass[m][i] * w.w[j];
      }
    }
    mass = std::move(nxt);
  }
  return mean;
}

inline ValueSolution solve_value(const Environment& env, const Mechanism& mech, const ValueOptions& opts = {});

// L_t(theta, theta_hat) on nodes: E^{theta, alpha(theta_hat)}[disc^{t+1}(u1+xi)+rho(t+1)] + disc^t[phi-xi](theta_hat).
inline double marginal_value(const Environment& env, const Mechanism& mech, const ValueSolution& sol, int t,
                             std::size_t slice, std::size_t i, std::size_t k) {
  if (t < 1 || t >= env.T) throw IndexError("marginal value is defined for periods 1..T-1");
  const PeriodGrid& g = env.grid(t);
  Memo memo = mech.memo(env, t, slice);
  double a = mech.allocation(env, t, g.x[k], memo);
  Weights w;
  env.weights(t, g.x[i], a, w);
  double EJ = w.dot(sol.at(t + 1).J[mech.next_slice(t, k)]);
  return EJ + env.disc(t) * (mech.phi(env, t, g.x[k], memo) - mech.xi(env, t, g.x[k], memo));
}

struct ContinuingValues {
  std::vector<Table> mu, mu_bar;
  double identity_gap = 0.0;  // max |mu - (mu_bar - rho(t))|
};

inline ContinuingValues continuing_values(const Environment& env, const Mechanism& mech, const ValueSolution& sol) {
  ContinuingValues cv;
  for (int t = 1; t <= env.T; ++t) {
    cv.mu.push_back(sol.at(t).mu);
    cv.mu_bar.push_back(sol.at(t).mu_bar);
    if (t == env.T) continue;
    for (std::size_t m = 0; m < sol.at(t).mu.size(); ++m)
      for (std::size_t i = 0; i < sol.at(t).mu[m].size(); ++i)
        cv.identity_gap = std::max(cv.identity_gap,
                                   std::abs(sol.at(t).mu[m][i] - (sol.at(t).mu_bar[m][i] - mech.rho(t))));
  }
  return cv;
}

// Non-decreasing difference chi_t = Z(t+1) - Z(t) = L_t - rho(t+1); also scans mu_bar.
struct SingleCrossingReport {
  ValidationReport chi;
  ValidationReport mu_bar;
  bool pass() const { return chi.pass; }
};

inline SingleCrossingReport check_single_crossing(const Environment& env, const Mechanism& mech,
                                                  const ValueSolution& sol, double slack = 1e-9) {
  SingleCrossingReport r;
  r.chi.name = "single_crossing";
  r.mu_bar.name = "continuing_value_monotone";
  for (int t = 1; t < env.T; ++t) {
    const PeriodValues& pv = sol.at(t);
    const PeriodGrid& g = env.grid(t);
    for (std::size_t m = 0; m < pv.L.size(); ++m) {
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        double d = (pv.L[m][i] - mech.rho(t + 1)) - (pv.L[m][i + 1] - mech.rho(t + 1));
        std::ostringstream loc;
        loc << "t=" << t << " slice=" << m << " node=" << i;
        if (d > slack) r.chi.flag(d, loc.str());
        double e = pv.mu_bar[m][i] - pv.mu_bar[m][i + 1];
        if (e > slack) r.mu_bar.flag(e, loc.str());
      }
    }
  }
  return r;
}

inline ValueSolution solve_value(const Environment& env, const Mechanism& mech, const ValueOptions& opts) {
  ValueSolution sol = solve_value_tables(env, mech, opts);
  if (opts.strict) {
    auto sc = check_single_crossing(env, mech, sol);
    if (!sc.pass()) throw AssumptionError("single crossing fails at " + sc.chi.where);
  }
  if (sol.threshold) {
    sol.mfpt = mean_first_passage(env, mech, sol.eta);
  } else {
    std::vector<std::vector<std::vector<char>>> st;
    for (const auto& pv : sol.p) st.push_back(pv.stop);
    sol.mfpt = mean_first_passage_regions(env, mech, st);
  }
  return sol;
}

inline std::vector<double> extract_threshold(const Environment& env, const ValueSolution& sol) {
  std::vector<double> eta(env.T);
  for (int t = 1; t <= env.T; ++t) {
    const PeriodValues& pv = sol.at(t);
    const PeriodGrid& g = env.grid(t);
    for (std::size_t m = 0; m < pv.stop.size(); ++m) {
      const auto& s = pv.stop[m];
      std::size_t k = 0;
      while (k < s.size() && s[k]) ++k;
      for (std::size_t i = k; i < s.size(); ++i)
        if (s[i]) {
          std::ostringstream os;
          os << "stop region of period " << t << " (slice " << m << ") has a gap: node " << k
             << " continues but node " << i << " (theta=" << g.x[i] << ") stops";
          throw NotThresholdError(os.str());
        }
    }
    if (std::isnan(pv.eta)) throw NotThresholdError("threshold of period " + std::to_string(t) + " depends on the previous report");
    eta[t - 1] = pv.eta;
  }
  eta.back() = env.grid(env.T).hi;
  return eta;
}

// Truthful payoff from period t with the stop forced at tau: tables for t = 1..tau.
inline std::vector<Table> horizon_payoff(const Environment& env, const Mechanism& mech, int tau) {
  std::vector<Table> D(tau);
  Weights w;
  for (int t = tau; t >= 1; --t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t S = mech.slices(env, t);
    D[t - 1].assign(S, std::vector<double>(g.size(), 0.0));
    for (std::size_t m = 0; m < S; ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double th = g.x[i];
        double a = mech.allocation(env, t, th, memo);
        double u = env.agent.value(t, th, a);
        if (t == tau) {
          D[t - 1][m][i] = env.disc(t) * (u + mech.xi(env, t, th, memo)) + mech.rho(t);
        } else {
          env.weights(t, th, a, w);
          D[t - 1][m][i] = env.disc(t) * (u + mech.phi(env, t, th, memo)) + w.dot(D[t][mech.next_slice(t, i)]);
        }
      }
    }
  }
  return D;
}

struct RepresentationReport {
  std::vector<double> gap_by_tau;  // max interim gap per horizon
  std::vector<double> exante_gap_by_tau;
  double worst = 0.0;
  bool pass = true;
};

// Both sides of the marginal-value telescoping identity for each fixed horizon.
inline RepresentationReport payoff_representation_check(const Environment& env, const Mechanism& mech,
                                                        const ValueSolution& sol, double tol = 1e-6) {
  RepresentationReport rep;
  Weights w;
  const PeriodGrid& g1 = env.grid(1);
  for (int tau = 1; tau <= env.T; ++tau) {
    auto D = horizon_payoff(env, mech, tau);
    std::vector<Table> R(tau);
    double gap = 0.0;
    for (int t = tau; t >= 1; --t) {
      const PeriodGrid& g = env.grid(t);
      const std::size_t S = mech.slices(env, t);
      R[t - 1].assign(S, std::vector<double>(g.size(), 0.0));
      for (std::size_t m = 0; m < S; ++m) {
        Memo memo = mech.memo(env, t, m);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (t < tau) {
            double a = mech.allocation(env, t, g.x[i], memo);
            env.weights(t, g.x[i], a, w);
            R[t - 1][m][i] = sol.at(t).L[m][i] - mech.rho(t) + w.dot(R[t][mech.next_slice(t, i)]);
          }
          double rhs = R[t - 1][m][i] + sol.at(t).J[m][i];
          gap = std::max(gap, std::abs(D[t - 1][m][i] - rhs));
        }
      }
    }
    // Ex ante: stopping "at period 0" is worth 0, so the period-0 increment is E[J_1(1)].
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) {
      double p = g1.tw[i] * env.init_density[i];
      lhs += p * D[0][0][i];
      rhs += p * (R[0][0][i] + (sol.at(1).J[0][i] - 0.0));
    }
    rep.gap_by_tau.push_back(gap);
    rep.exante_gap_by_tau.push_back(std::abs(lhs - rhs));
    rep.worst = std::max({rep.worst, gap, std::abs(lhs - rhs)});
  }
  rep.pass = rep.worst <= tol;
  return rep;
}

}  // namespace dynmech
