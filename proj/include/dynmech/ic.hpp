#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"
#include "mechanism.hpp"
#include "value.hpp"

namespace dynmech {

struct ICEntry {
  int period = 0;
  std::string branch;  // "stop", "continue" or "raw"
  double gap = 0.0;
  double theta = 0.0;
  double theta_hat = 0.0;
  std::size_t slice = 0;
};

struct ICPeriod {
  ICEntry stop, cont, raw;
};

struct ICReport {
  double tol = 1e-3;
  std::vector<ICPeriod> periods;
  std::vector<ICEntry> violations;  // capped list of pairs above tolerance
  double worst = 0.0;               // worst branch-wise gap
  double worst_raw = 0.0;
  bool pass = true;                 // branch-wise verdict
  bool pass_raw = true;             // max-of-branches verdict
  bool verdicts_differ = false;
  std::vector<Table> heat;          // [t-1][theta][theta_hat], max over slices and branches
};

struct ICOptions {
  double tol = 1e-3;
  bool heat_map = false;
  std::size_t max_violations = 200;
};

// Deviation payoffs at true node i and report node k, slice m of period t:
// stop branch  d^t[u(x_i, a_k) + xi_k] + rho(t)
// continue     d^t[u(x_i, a_k) + phi_k] + E^{x_i, a_k}[V_{t+1}]
inline ICReport one_shot_check(const Environment& env, const Mechanism& mech, const ValueSolution& sol,
                               const ICOptions& o = {}) {
  ICReport r;
  r.tol = o.tol;
  const int T = env.T;
  Weights w;
  for (int t = 1; t <= T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t n = g.size();
    const double dt = env.disc(t);
    const PeriodValues& pv = sol.at(t);
    ICPeriod P;
    P.stop.period = P.cont.period = P.raw.period = t;
    P.stop.branch = "stop";
    P.cont.branch = "continue";
    P.raw.branch = "raw";
    Table heat;
    if (o.heat_map) heat.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t m = 0; m < mech.slices(env, t); ++m) {
      Memo memo = mech.memo(env, t, m);
      std::vector<double> a(n), xi(n), phi(n);
      for (std::size_t k = 0; k < n; ++k) {
        a[k] = mech.allocation(env, t, g.x[k], memo);
        xi[k] = mech.xi(env, t, g.x[k], memo);
        phi[k] = mech.phi(env, t, g.x[k], memo);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double US0 = pv.J[m][i];
        double UC0 = -std::numeric_limits<double>::infinity();
        if (t < T) {
          env.weights(t, g.x[i], a[i], w);
          UC0 = dt * (env.agent.value(t, g.x[i], a[i]) + phi[i]) + w.dot(sol.at(t + 1).V[mech.next_slice(t, i)]);
        }
        const double V0 = std::max(US0, UC0);
        for (std::size_t k = 0; k < n; ++k) {
          if (k == i) continue;
          const double u = env.agent.value(t, g.x[i], a[k]);
          const double US = dt * (u + xi[k]) + mech.rho(t);
          double UC = -std::numeric_limits<double>::infinity();
          if (t < T) {
            env.weights(t, g.x[i], a[k], w);
            UC = dt * (u + phi[k]) + w.dot(sol.at(t + 1).V[mech.next_slice(t, k)]);
          }
          const double gS = US - US0;
          const double gC = t < T ? UC - UC0 : 0.0;
          const double gR = std::max(US, UC) - V0;
          auto upd = [&](ICEntry& e, double gap) {
            if (gap > e.gap) {
              e.gap = gap;
              e.theta = g.x[i];
              e.theta_hat = g.x[k];
              e.slice = m;
            }
          };
          upd(P.stop, gS);
          upd(P.cont, gC);
          upd(P.raw, gR);
          if (o.heat_map) heat[i][k] = std::max({heat[i][k], gS, gC});
          if (std::max(gS, gC) > o.tol && r.violations.size() < o.max_violations)
            r.violations.push_back({t, gS >= gC ? "stop" : "continue", std::max(gS, gC), g.x[i], g.x[k], m});
        }
      }
    }
    r.worst = std::max({r.worst, P.stop.gap, P.cont.gap});
    r.worst_raw = std::max(r.worst_raw, P.raw.gap);
    r.periods.push_back(P);
    if (o.heat_map) r.heat.push_back(std::move(heat));
  }
  r.pass = r.worst <= o.tol;
  r.pass_raw = r.worst_raw <= o.tol;
  r.verdicts_differ = r.pass != r.pass_raw;
  return r;
}

struct OracleReport {
  double best_ex_ante = 0.0;      // best payoff over all pure Markov report/stop strategies
  double truthful_ex_ante = 0.0;  // E[V_1] under truthful reporting and optimal stopping
  double interim_gain = 0.0;      // max over (t, slice, node) of best minus truthful value
  bool profitable = false;
  std::vector<Table> W;           // best deviation values
};

inline void check_oracle_budget(const Environment& env) {
  if (env.T > 3) throw BudgetError("exhaustive deviation search is limited to T <= 3");
  for (const auto& g : env.grids)
    if (g.size() > 9) throw BudgetError("exhaustive deviation search is limited to 9 nodes per grid");
}

// The agent's deviation problem solved exactly: at every (previous report, state) the
// agent picks any report node and whether to stop. Every pure Markov strategy is feasible,
// and the ex-ante objective separates across states, so this is the exhaustive optimum.
inline OracleReport brute_force_deviation_oracle(const Environment& env, const Mechanism& mech,
                                                 const ValueSolution& sol, double tol = 1e-9) {
  check_oracle_budget(env);
  OracleReport rep;
  const int T = env.T;
  rep.W.resize(T);
  Weights w;
  for (int t = T; t >= 1; --t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t n = g.size();
    Table Wt(mech.slices(env, t), std::vector<double>(n, 0.0));
    for (std::size_t m = 0; m < Wt.size(); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
          double a = mech.allocation(env, t, g.x[k], memo);
          double u = env.agent.value(t, g.x[i], a);
          best = std::max(best, env.disc(t) * (u + mech.xi(env, t, g.x[k], memo)) + mech.rho(t));
          if (t < T) {
            env.weights(t, g.x[i], a, w);
            double c = env.disc(t) * (u + mech.phi(env, t, g.x[k], memo)) + w.dot(rep.W[t][mech.next_slice(t, k)]);
            best = std::max(best, c);
          }
        }
        Wt[m][i] = best;
        rep.interim_gain = std::max(rep.interim_gain, best - sol.at(t).V[m][i]);
      }
    }
    rep.W[t - 1] = std::move(Wt);
  }
  const PeriodGrid& g1 = env.grid(1);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    double p = g1.tw[i] * env.init_density[i];
    rep.best_ex_ante += p * rep.W[0][0][i];
    rep.truthful_ex_ante += p * sol.at(1).V[0][i];
  }
  rep.profitable = rep.interim_gain > tol;
  return rep;
}

// Literal enumeration of report maps and stop sets for tiny memoryless instances.
// Returns the best ex-ante payoff; used to cross-check the deviation oracle.
inline double enumerate_strategies(const Environment& env, const Mechanism& mech) {
  if (env.T > 2) throw BudgetError("literal enumeration is limited to T <= 2");
  for (int t = 1; t <= env.T; ++t) {
    if (env.grid(t).size() > 3) throw BudgetError("literal enumeration is limited to 3 nodes per grid");
    if (mech.memory(t)) throw BudgetError("literal enumeration needs memoryless rules");
  }
  const int T = env.T;
  std::vector<std::size_t> n(T);
  std::vector<std::size_t> count(T);
  for (int t = 1; t <= T; ++t) {
    n[t - 1] = env.grid(t).size();
    std::size_t c = 1;
    for (std::size_t i = 0; i < n[t - 1]; ++i) c *= n[t - 1] * 2;
    count[t - 1] = c;
  }
  // Strategy code per period: for each node, (report index, stop flag).
  auto decode = [&](int t, std::size_t code, std::vector<std::size_t>& rep, std::vector<char>& stop) {
    const std::size_t nn = n[t - 1];
    rep.assign(nn, 0);
    stop.assign(nn, 0);
    for (std::size_t i = 0; i < nn; ++i) {
      std::size_t d = code % (nn * 2);
      code /= nn * 2;
      rep[i] = d / 2;
      stop[i] = static_cast<char>(d % 2);
    }
    if (t == T) std::fill(stop.begin(), stop.end(), 1);
  };
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> r1, r2;
  std::vector<char> s1, s2;
  Weights w;
  const PeriodGrid& g1 = env.grid(1);
  const std::size_t c2 = T == 2 ? count[1] : 1;
  for (std::size_t a = 0; a < count[0]; ++a) {
    decode(1, a, r1, s1);
    for (std::size_t b = 0; b < c2; ++b) {
      if (T == 2) decode(2, b, r2, s2);
      double total = 0.0;
      for (std::size_t i = 0; i < g1.size(); ++i) {
        double p = g1.tw[i] * env.init_density[i];
        double x = g1.x[i], xr = g1.x[r1[i]];
        double al = mech.allocation(env, 1, xr, Memo::none());
        double u = env.agent.value(1, x, al);
        double v;
        if (s1[i]) {
          v = env.disc(1) * (u + mech.xi(env, 1, xr, Memo::none())) + mech.rho(1);
        } else {
          v = env.disc(1) * (u + mech.phi(env, 1, xr, Memo::none()));
          const PeriodGrid& g2 = env.grid(2);
          env.weights(1, x, al, w);
          for (std::size_t j = 0; j < w.w.size(); ++j) {
            std::size_t jj = w.first + j;
            double y = g2.x[jj], yr = g2.x[r2[jj]];
            double a2 = mech.allocation(env, 2, yr, Memo::none());
            v += w.w[j] * (env.disc(2) * (env.agent.value(2, y, a2) + mech.xi(env, 2, yr, Memo::none())) + mech.rho(2));
          }
        }
        total += p * v;
      }
      best = std::max(best, total);
    }
  }
  return best;
}

}  // namespace dynmech
