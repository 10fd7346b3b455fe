#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"
#include "mechanism.hpp"
#include "validate.hpp"

namespace dynmech {

// Envelope derivatives gamma_t(tau, .) and expected impulse responses G_{t,s}.
struct EnvelopeTable {
  int T = 0;
  // contrib[t-1][s-t][slice][node]: expected d/dtheta_t of the period-s flow, s >= t
  std::vector<std::vector<Table>> contrib;
  // impulse[t-1][s-t][slice][node]: expected product of one-step impulse responses
  std::vector<std::vector<Table>> impulse;

  Table gamma(int t, int tau) const {
    Table g = contrib.at(t - 1).at(0);
    for (int s = t + 1; s <= tau; ++s) {
      const Table& c = contrib[t - 1][s - t];
      for (std::size_t m = 0; m < g.size(); ++m)
        for (std::size_t i = 0; i < g[m].size(); ++i) g[m][i] += c[m][i];
    }
    return g;
  }
};

inline Table zero_table(const Environment& env, const Mechanism& mech, int t) {
  return Table(mech.slices(env, t), std::vector<double>(env.grid(t).size(), 0.0));
}

// One step back along the chain: out[m][i] = sum_j v_j(x_i, alpha_k(x_i)) in[next_slice(i)][j],
// with v the impulse weights (or the plain transition weights when plain is set).
inline Table pull_back(const Environment& env, const Mechanism& mech, int k, const Table& in, bool plain) {
  Table out = zero_table(env, mech, k);
  const PeriodGrid& g = env.grid(k);
  Weights w;
  for (std::size_t m = 0; m < out.size(); ++m) {
    Memo memo = mech.memo(env, k, m);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double a = mech.allocation(env, k, g.x[i], memo);
      if (plain)
        env.weights(k, g.x[i], a, w);
      else
        env.impulse(k, g.x[i], a, w);
      out[m][i] = w.dot(in[mech.next_slice(k, i)]);
    }
  }
  return out;
}

inline EnvelopeTable envelope_gamma(const Environment& env, const Mechanism& mech) {
  EnvelopeTable e;
  e.T = env.T;
  e.contrib.resize(env.T);
  e.impulse.resize(env.T);
  for (int t = 1; t <= env.T; ++t) {
    e.contrib[t - 1].resize(env.T - t + 1);
    e.impulse[t - 1].resize(env.T - t + 1);
  }
  for (int s = 1; s <= env.T; ++s) {
    Table base = zero_table(env, mech, s);
    Table one = base;
    const PeriodGrid& g = env.grid(s);
    for (std::size_t m = 0; m < base.size(); ++m) {
      Memo memo = mech.memo(env, s, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double a = mech.allocation(env, s, g.x[i], memo);
        base[m][i] = env.disc(s) * env.agent.d_theta(s, g.x[i], a);
        one[m][i] = 1.0;
      }
    }
    e.contrib[s - 1][0] = base;
    e.impulse[s - 1][0] = one;
    for (int k = s - 1; k >= 1; --k) {
      e.contrib[k - 1][s - k] = pull_back(env, mech, k, e.contrib[k][s - k - 1], false);
      e.impulse[k - 1][s - k] = pull_back(env, mech, k, e.impulse[k][s - k - 1], false);
    }
  }
  return e;
}

// Nested path sum over explicit node paths t -> t+1 -> ... -> s of the product of
// one-step impulse weights times the period-s flow derivative. Independent of the
// backward tables; exponential in the horizon, so small instances only.
inline double envelope_by_paths(const Environment& env, const Mechanism& mech, int t, int tau, std::size_t slice,
                                std::size_t node) {
  if (tau - t > 2) throw BudgetError("path enumeration is limited to two transitions");
  std::function<double(int, std::size_t, std::size_t, int)> walk = [&](int k, std::size_t m, std::size_t i,
                                                                          int s) -> double {
    const PeriodGrid& g = env.grid(k);
    double a = mech.allocation(env, k, g.x[i], mech.memo(env, k, m));
    if (k == s) return env.disc(s) * env.agent.d_theta(s, g.x[i], a);
    Weights v;
    env.impulse(k, g.x[i], a, v);
    double total = 0.0;
    for (std::size_t j = 0; j < v.w.size(); ++j)
      if (v.w[j] != 0.0) total += v.w[j] * walk(k + 1, mech.next_slice(k, i), v.first + j, s);
    return total;
  };
  double g = 0.0;
  for (int s = t; s <= tau; ++s) g += walk(t, slice, node, s);
  return g;
}

enum class PotentialRule { Trapezoid, Endpoint };

struct PotentialTable {
  std::vector<Table> beta;      // stop-branch potential, per period
  std::vector<Table> beta_bar;  // continue-branch potential
  std::vector<Table> horizon;   // maximizing horizon of beta_bar at each node
  std::vector<double> anchor;
  PotentialRule rule = PotentialRule::Trapezoid;

  const Table& S(int t) const { return beta.at(t - 1); }
  const Table& Sbar(int t) const { return beta_bar.at(t - 1); }
};

inline std::vector<double> default_anchors(const Environment& env) {
  std::vector<double> a;
  for (int t = 1; t <= env.T; ++t) a.push_back(env.grid(t).lo);
  return a;
}

inline PotentialTable potentials(const Environment& env, const Mechanism& mech, const EnvelopeTable& e,
                                 std::vector<double> anchor = {}, PotentialRule rule = PotentialRule::Trapezoid) {
  if (anchor.empty()) anchor = default_anchors(env);
  if (anchor.size() != static_cast<std::size_t>(env.T)) throw SchemaError("one anchor per period is required");
  PotentialTable p;
  p.anchor = anchor;
  p.rule = rule;
  for (int t = 1; t <= env.T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const double eps = anchor[t - 1];
    if (!g.contains(eps)) throw SchemaError("anchor for period " + std::to_string(t) + " lies outside its grid");
    std::vector<Table> gam;
    for (int tau = t; tau <= env.T; ++tau) gam.push_back(e.gamma(t, tau));
    Table b = zero_table(env, mech, t), bb = b, hz = b;
    for (std::size_t m = 0; m < b.size(); ++m) {
      if (rule == PotentialRule::Endpoint) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          b[m][i] = (g.x[i] - eps) * gam[0][m][i];
          bb[m][i] = b[m][i];
          hz[m][i] = t;
          for (std::size_t k = 1; k < gam.size(); ++k) {
            double v = (g.x[i] - eps) * gam[k][m][i];
            if (v > bb[m][i]) {
              bb[m][i] = v;
              hz[m][i] = t + static_cast<double>(k);
            }
          }
        }
        continue;
      }
      // Sup over horizons is taken on integrals from the grid bottom and then shifted
      // to vanish at the anchor, so that moving the anchor only moves a constant.
      std::vector<std::vector<double>> I;
      double at_eps_bar = -std::numeric_limits<double>::infinity();
      for (const Table& gt : gam) {
        I.push_back(g.cumulative(gt[m]));
        at_eps_bar = std::max(at_eps_bar, g.integrate_to(gt[m], eps));
      }
      double at_eps = g.integrate_to(gam[0][m], eps);
      for (std::size_t i = 0; i < g.size(); ++i) {
        b[m][i] = I[0][i] - at_eps;
        double best = I[0][i];
        hz[m][i] = t;
        for (std::size_t k = 1; k < I.size(); ++k)
          if (I[k][i] > best) {
            best = I[k][i];
            hz[m][i] = t + static_cast<double>(k);
          }
        bb[m][i] = best - at_eps_bar;
      }
    }
    if (t == env.T) bb = b;
    p.beta.push_back(std::move(b));
    p.beta_bar.push_back(std::move(bb));
    p.horizon.push_back(std::move(hz));
  }
  return p;
}

// Continuing and stopping payments from the potentials; rho is left at zero.
inline Mechanism construct_phi_xi(const Environment& env, const Mechanism& alloc, const PotentialTable& p,
                                  bool strict_literal = false) {
  Mechanism out = alloc;
  const int T = env.T;
  out.pay.phi.assign(T, StateFn::constant(0.0));
  out.pay.xi.assign(T, StateFn::constant(0.0));
  out.pay.rho.assign(T, 0.0);
  Weights w;
  for (int t = 1; t <= T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const double inv = 1.0 / env.disc(t);
    const double inv_xi = strict_literal ? 1.0 / env.delta : inv;
    Table phi = zero_table(env, alloc, t), xi = phi;
    for (std::size_t m = 0; m < phi.size(); ++m) {
      Memo memo = alloc.memo(env, t, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double a = alloc.allocation(env, t, g.x[i], memo);
        double u = env.agent.value(t, g.x[i], a);
        xi[m][i] = inv_xi * p.S(t)[m][i] - u;
        if (t == T) {
          phi[m][i] = xi[m][i];
          continue;
        }
        env.weights(t, g.x[i], a, w);
        double eb = w.dot(p.Sbar(t + 1)[alloc.next_slice(t, i)]);
        phi[m][i] = inv * p.Sbar(t)[m][i] - inv * eb - u;
      }
    }
    bool mem = alloc.memory(t);
    std::vector<double> prev = mem ? env.grid(t - 1).x : std::vector<double>{};
    out.pay.phi[t - 1] = StateFn::tabular(std::move(phi), mem, prev);
    out.pay.xi[t - 1] = StateFn::tabular(std::move(xi), mem, prev);
  }
  return out;
}

// Law of (slice, node) at periods t+1..T for the truthful process started at an
// arbitrary state theta in period t; masses [tau-t-1][slice][node].
inline std::vector<Table> propagate_from(const Environment& env, const Mechanism& mech, int t, double theta,
                                         const Memo& memo = Memo::none()) {
  std::vector<Table> out;
  if (t >= env.T) return out;
  const PeriodGrid& g = env.grid(t);
  double a = mech.allocation(env, t, theta, memo);
  Weights w;
  env.weights(t, theta, a, w);
  Table d = zero_table(env, mech, t + 1);
  if (mech.memory(t + 1)) {
    auto [k, f] = g.locate(theta);
    for (std::size_t j = 0; j < w.w.size(); ++j) {
      d[k][w.first + j] += (1.0 - f) * w.w[j];
      d[k + 1][w.first + j] += f * w.w[j];
    }
  } else {
    for (std::size_t j = 0; j < w.w.size(); ++j) d[0][w.first + j] += w.w[j];
  }
  out.push_back(d);
  for (int k = t + 1; k < env.T; ++k) {
    const PeriodGrid& gk = env.grid(k);
    Table nx = zero_table(env, mech, k + 1);
    for (std::size_t m = 0; m < d.size(); ++m) {
      Memo mm = mech.memo(env, k, m);
      for (std::size_t i = 0; i < gk.size(); ++i) {
        if (d[m][i] == 0.0) continue;
        double ak = mech.allocation(env, k, gk.x[i], mm);
        env.weights(k, gk.x[i], ak, w);
        std::size_t ns = mech.next_slice(k, i);
        for (std::size_t j = 0; j < w.w.size(); ++j) nx[ns][w.first + j] += d[m][i] * w.w[j];
      }
    }
    d = std::move(nx);
    out.push_back(d);
  }
  return out;
}

inline double table_dot(const Table& mass, const Table& f) {
  double s = 0.0;
  for (std::size_t m = 0; m < mass.size(); ++m)
    for (std::size_t i = 0; i < mass[m].size(); ++i) s += mass[m][i] * f[m][i];
  return s;
}

inline Table potential_gap(const PotentialTable& p, int t) {
  Table d = p.Sbar(t);
  for (std::size_t m = 0; m < d.size(); ++m)
    for (std::size_t i = 0; i < d[m].size(); ++i) d[m][i] -= p.S(t)[m][i];
  return d;
}

// sup over tau in t+1..T of E[(beta_bar - beta)(theta_tau) - r_tau | theta_t = theta].
inline double future_gap_sup(const Environment& env, const Mechanism& mech, const PotentialTable& p, int t,
                             double theta, const std::vector<double>& r) {
  auto law = propagate_from(env, mech, t, theta);
  double best = -std::numeric_limits<double>::infinity();
  for (int tau = t + 1; tau <= env.T; ++tau)
    best = std::max(best, table_dot(law[tau - t - 1], potential_gap(p, tau)) - r[tau - 1]);
  return best;
}

inline double gap_at(const Environment& env, const PotentialTable& p, int t, double theta) {
  const Table d = potential_gap(p, t);
  return env.grid(t).interp(d[0], theta);
}

inline std::vector<double> construct_rho(const Environment& env, const Mechanism& mech, const PotentialTable& p,
                                         const std::vector<double>& eta) {
  if (eta.size() + 1 < static_cast<std::size_t>(env.T)) throw SchemaError("threshold vector is too short");
  std::vector<double> rho(env.T, 0.0);
  for (int t = env.T - 1; t >= 1; --t) {
    if (mech.memory(t))
      throw MemoryError("posted price for period " + std::to_string(t) + " needs a previous report");
    const PeriodGrid& g = env.grid(t);
    double e = std::clamp(eta[t - 1], g.lo, g.hi);
    rho[t - 1] = gap_at(env, p, t, e) - future_gap_sup(env, mech, p, t, e, rho);
  }
  return rho;
}

struct Synthesis {
  EnvelopeTable envelope;
  PotentialTable potentials;
  Mechanism mech;
};

struct SynthesisOptions {
  std::vector<double> anchors;
  std::vector<double> eta;
  PotentialRule rule = PotentialRule::Trapezoid;
  bool strict_literal = false;
};

inline Synthesis synthesize(const Environment& env, const Mechanism& alloc, const SynthesisOptions& o) {
  Synthesis s;
  s.envelope = envelope_gamma(env, alloc);
  s.potentials = potentials(env, alloc, s.envelope, o.anchors, o.rule);
  s.mech = construct_phi_xi(env, alloc, s.potentials, o.strict_literal);
  std::vector<double> eta = o.eta;
  if (eta.empty())
    for (int t = 1; t <= env.T; ++t) eta.push_back(env.grid(t).lo);
  s.mech.pay.rho = construct_rho(env, s.mech, s.potentials, eta);
  return s;
}

// Expected truthful value from period t with the stop forced at tau, for arbitrary
// per-period flow and stop terms; tables for t = 1..tau.
inline std::vector<Table> forced_horizon(
    const Environment& env, const Mechanism& mech, int tau,
    const std::function<double(int, double, double, const Memo&)>& flow,
    const std::function<double(int, double, double, const Memo&)>& stop) {
  std::vector<Table> D(tau);
  Weights w;
  for (int t = tau; t >= 1; --t) {
    const PeriodGrid& g = env.grid(t);
    D[t - 1] = zero_table(env, mech, t);
    for (std::size_t m = 0; m < D[t - 1].size(); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double a = mech.allocation(env, t, g.x[i], memo);
        if (t == tau) {
          D[t - 1][m][i] = stop(t, g.x[i], a, memo);
        } else {
          env.weights(t, g.x[i], a, w);
          D[t - 1][m][i] = flow(t, g.x[i], a, memo) + w.dot(D[t][mech.next_slice(t, i)]);
        }
      }
    }
  }
  return D;
}

// Expected payment stream sum_{s<tau} d^s phi_s + d^tau xi_tau + rho(tau), per period and horizon.
inline std::vector<Table> payment_stream(const Environment& env, const Mechanism& mech, int tau) {
  return forced_horizon(
      env, mech, tau,
      [&](int t, double x, double, const Memo& m) { return env.disc(t) * mech.phi(env, t, x, m); },
      [&](int t, double x, double, const Memo& m) { return env.disc(t) * mech.xi(env, t, x, m) + mech.rho(t); });
}

struct EquivalenceReport {
  std::vector<double> C;             // per horizon: stream difference at period 1 (state-constant)
  std::vector<double> spread;        // per horizon: worst within-slice spread of the difference
  std::vector<double> rho_diff;      // rho_a - rho_b per period
  double worst_spread = 0.0;
  bool state_constant = true;
  bool rho_zero_at_T = true;
};

inline EquivalenceReport revenue_equivalence(const Environment& env, const Mechanism& alloc,
                                             const SynthesisOptions& a, const SynthesisOptions& b,
                                             double tol = 1e-6) {
  Synthesis sa = synthesize(env, alloc, a);
  Synthesis sb = synthesize(env, alloc, b);
  EquivalenceReport r;
  for (int tau = 1; tau <= env.T; ++tau) {
    auto Pa = payment_stream(env, sa.mech, tau);
    auto Pb = payment_stream(env, sb.mech, tau);
    double spread = 0.0;
    for (int t = 1; t <= tau; ++t)
      for (std::size_t m = 0; m < Pa[t - 1].size(); ++m) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < Pa[t - 1][m].size(); ++i) {
          double d = Pa[t - 1][m][i] - Pb[t - 1][m][i];
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
        spread = std::max(spread, hi - lo);
      }
    r.C.push_back(Pa[0][0][0] - Pb[0][0][0]);
    r.spread.push_back(spread);
    r.worst_spread = std::max(r.worst_spread, spread);
  }
  for (int t = 1; t <= env.T; ++t) r.rho_diff.push_back(sa.mech.rho(t) - sb.mech.rho(t));
  r.state_constant = r.worst_spread <= tol;
  r.rho_zero_at_T = r.rho_diff.back() == 0.0;
  return r;
}

struct SufficiencyReport {
  ValidationReport stop_branch;
  ValidationReport continue_branch;
  ValidationReport ordering;
  double worst_slack = 0.0;
  bool pass() const { return stop_branch.pass && continue_branch.pass && ordering.pass; }
};

// Potential differences against length functions over every node pair.
inline SufficiencyReport verify_sufficiency(const Environment& env, const Mechanism& mech, const PotentialTable& p,
                                            double tol = 1e-6) {
  SufficiencyReport r;
  r.stop_branch.name = "potential_vs_stop_length";
  r.continue_branch.name = "potential_vs_continue_length";
  r.ordering.name = "potential_ordering";
  const int T = env.T;
  // H[tau][t-1]: truthful expected sum of utilities plus the terminal payment at tau.
  std::vector<std::vector<Table>> H(T + 1);
  for (int tau = 1; tau <= T; ++tau)
    H[tau] = forced_horizon(
        env, mech, tau, [&](int t, double x, double a, const Memo&) { return env.disc(t) * env.agent.value(t, x, a); },
        [&](int t, double x, double a, const Memo& m) {
          return env.disc(t) * (env.agent.value(t, x, a) + mech.xi(env, t, x, m));
        });
  auto note = [](ValidationReport& rep, double slack, int t, std::size_t m, std::size_t i, std::size_t k,
                 double tol_) {
    if (slack < -tol_) {
      std::ostringstream os;
      os << "t=" << t << " slice=" << m << " theta=" << i << " theta_hat=" << k;
      rep.flag(-slack, os.str());
    }
  };
  double worst = std::numeric_limits<double>::infinity();
  Weights w;
  for (int t = 1; t <= T; ++t) {
    const PeriodGrid& g = env.grid(t);
    const std::size_t n = g.size();
    const double dt = env.disc(t);
    for (std::size_t m = 0; m < mech.slices(env, t); ++m) {
      Memo memo = mech.memo(env, t, m);
      for (std::size_t k = 0; k < n; ++k) {
        const double ak = mech.allocation(env, t, g.x[k], memo);
        const double uk = env.agent.value(t, g.x[k], ak);
        const double xik = mech.xi(env, t, g.x[k], memo);
        const std::size_t nsk = t < T ? mech.next_slice(t, k) : 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double ui = env.agent.value(t, g.x[i], ak);
          double lS = dt * (uk - ui);
          double sS = lS - (p.S(t)[m][k] - p.S(t)[m][i]);
          note(r.stop_branch, sS, t, m, i, k, tol);
          worst = std::min(worst, sS);
          double best = dt * (uk + xik) - dt * (ui + xik);
          if (t < T) {
            env.weights(t, g.x[i], ak, w);
            for (int tau = t + 1; tau <= T; ++tau) {
              double cross = dt * ui + w.dot(H[tau][t][nsk]);
              best = std::max(best, H[tau][t - 1][m][k] - cross);
            }
          }
          double sB = best - (p.Sbar(t)[m][k] - p.Sbar(t)[m][i]);
          note(r.continue_branch, sB, t, m, i, k, tol);
          worst = std::min(worst, sB);
        }
        double o = p.Sbar(t)[m][k] - p.S(t)[m][k];
        if (o < -tol || (t == T && std::abs(o) > tol)) {
          std::ostringstream os;
          os << "t=" << t << " slice=" << m << " node=" << k;
          r.ordering.flag(std::abs(o), os.str());
        }
      }
    }
  }
  r.worst_slack = worst;
  return r;
}

struct MembershipResult {
  bool member = true;
  int failed_period = 0;
  std::string reason;
  std::vector<double> eta;
  std::vector<double> row_min, row_max;  // range of the posted-price-free row per period
};

// Root of D_t(theta) = (beta_bar - beta)(theta) - r_t - sup_tau E[...] in every period.
inline MembershipResult regular_set_membership(const Environment& env, const Mechanism& mech,
                                               const PotentialTable& p, const std::vector<double>& r,
                                               double xtol = 1e-9) {
  MembershipResult res;
  const int T = env.T;
  if (r.size() != static_cast<std::size_t>(T)) throw SchemaError("posted-price vector must have one entry per period");
  res.eta.assign(T, 0.0);
  res.row_min.assign(T, 0.0);
  res.row_max.assign(T, 0.0);
  res.eta[T - 1] = env.grid(T).hi;
  if (r[T - 1] != 0.0) {
    res.member = false;
    res.failed_period = T;
    res.reason = "final posted price must be zero";
    return res;
  }
  for (int t = 1; t < T; ++t) {
    if (mech.memory(t)) throw MemoryError("membership at period " + std::to_string(t) + " needs a previous report");
    const PeriodGrid& g = env.grid(t);
    auto D = [&](double th) { return gap_at(env, p, t, th) - r[t - 1] - future_gap_sup(env, mech, p, t, th, r); };
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = D(g.x[i]);
    res.row_min[t - 1] = *std::min_element(d.begin(), d.end()) + r[t - 1];
    res.row_max[t - 1] = *std::max_element(d.begin(), d.end()) + r[t - 1];
    bool found = false;
    for (std::size_t i = 0; i < g.size() && !found; ++i) {
      if (d[i] == 0.0) {
        res.eta[t - 1] = g.x[i];
        found = true;
      } else if (i + 1 < g.size() && (d[i] < 0.0) != (d[i + 1] < 0.0) && d[i + 1] != 0.0) {
        double a = g.x[i], b = g.x[i + 1], fa = d[i];
        while (b - a > xtol) {
          double c = 0.5 * (a + b);
          double fc = D(c);
          if (fc == 0.0) {
            a = b = c;
            break;
          }
          if ((fc < 0.0) == (fa < 0.0)) {
            a = c;
            fa = fc;
          } else {
            b = c;
          }
        }
        res.eta[t - 1] = 0.5 * (a + b);
        found = true;
      }
    }
    if (!found) {
      res.member = false;
      res.failed_period = t;
      std::ostringstream os;
      os << "no root in period " << t << ": posted price is "
         << (r[t - 1] > res.row_max[t - 1] ? "above the row maximum" : "below the row minimum");
      res.reason = os.str();
      return res;
    }
  }
  return res;
}

}  // namespace dynmech
