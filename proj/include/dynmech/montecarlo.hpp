#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "environment.hpp"
#include "mechanism.hpp"

namespace dynmech {

struct Trajectory {
  std::vector<double> states, reports, allocations, payments;
  int tau = 0;
  double agent = 0.0;
  double principal = 0.0;
};

// Independent stream per (seed, path index).
inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline double unit_draw(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double sample_initial(const Environment& env, double u) {
  const PeriodGrid& g = env.grid(1);
  const std::vector<double>& r = env.init_density;
  double target = u * g.integrate(r);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    double h = g.x[i + 1] - g.x[i];
    double cell = 0.5 * h * (r[i] + r[i + 1]);
    if (acc + cell >= target && cell > 0.0) {
      double need = target - acc, slope = (r[i + 1] - r[i]) / h, s;
      if (std::abs(slope) < 1e-14)
        s = need / r[i];
      else
        s = (-r[i] + std::sqrt(std::max(r[i] * r[i] + 2.0 * slope * need, 0.0))) / slope;
      return g.x[i] + std::clamp(s, 0.0, h);
    }
    acc += cell;
  }
  return g.hi;
}

inline Trajectory sample_trajectory(const Environment& env, const Mechanism& mech, const ReportingStrategy& strategy,
                                    const StoppingPolicy& stop, std::uint64_t seed, std::uint64_t index = 0) {
  auto rng = path_stream(seed, index);
  Trajectory tr;
  double theta = sample_initial(env, unit_draw(rng));
  Memo memo = Memo::none();
  for (int t = 1; t <= env.T; ++t) {
    const double report = compose_report(env, strategy, t, theta);
    Memo m = mech.memory(t) ? memo : Memo::none();
    const double a = mech.allocation(env, t, report, m);
    const double dt = env.disc(t);
    const double u1 = env.agent.value(t, theta, a), u0 = env.principal.value(t, theta, a);
    std::size_t slice = 0;
    if (m.present) slice = env.grid(t - 1).nearest(m.value);
    tr.states.push_back(theta);
    tr.reports.push_back(report);
    tr.allocations.push_back(a);
    if (stop.stops(env, t, theta, slice)) {
      const double xi = mech.xi(env, t, report, m);
      tr.payments.push_back(xi);
      tr.tau = t;
      tr.agent += dt * (u1 + xi) + mech.rho(t);
      tr.principal += dt * (u0 - xi) - mech.rho(t);
      break;
    }
    const double phi = mech.phi(env, t, report, m);
    tr.payments.push_back(phi);
    tr.agent += dt * (u1 + phi);
    tr.principal += dt * (u0 - phi);
    const PeriodGrid& gn = env.grid(t + 1);
    double next = env.kernel(t).sample(gn, theta, a, unit_draw(rng));
    memo = Memo::at(report);
    const std::size_t k = env.grid(t).nearest(report);
    if (std::abs(env.grid(t).x[k] - report) <= 1e-12 * std::max(1.0, std::abs(report))) memo.index = static_cast<int>(k);
    theta = next;
  }
  return tr;
}

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct MCStats {
  std::size_t paths = 0;
  std::uint64_t seed = 0;
  Moments agent, principal, tau;
};

// Sample means and standard errors; paths are drawn and reduced in index order.
inline MCStats monte_carlo(const Environment& env, const Mechanism& mech, const StoppingPolicy& stop,
                           std::size_t paths, std::uint64_t seed,
                           const ReportingStrategy& strategy = ReportingStrategy::truthful()) {
  MCStats s;
  s.paths = paths;
  s.seed = seed;
  double sa = 0, sa2 = 0, sp = 0, sp2 = 0, st = 0, st2 = 0;
  for (std::size_t p = 0; p < paths; ++p) {
    Trajectory tr = sample_trajectory(env, mech, strategy, stop, seed, p);
    sa += tr.agent;
    sa2 += tr.agent * tr.agent;
    sp += tr.principal;
    sp2 += tr.principal * tr.principal;
    st += tr.tau;
    st2 += static_cast<double>(tr.tau) * tr.tau;
  }
  const double n = static_cast<double>(paths);
  auto mom = [n](double s1, double s2) {
    Moments m;
    m.mean = s1 / n;
    double var = n > 1 ? std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0)) : 0.0;
    m.stderr_ = std::sqrt(var / n);
    return m;
  };
  s.agent = mom(sa, sa2);
  s.principal = mom(sp, sp2);
  s.tau = mom(st, st2);
  return s;
}

}  // namespace dynmech
