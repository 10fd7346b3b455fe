#pragma once

#include <random>

#include <dynmech/dynmech.hpp>

namespace fixtures {

using namespace dynmech;

// Two-period seller-buyer setup: u0 = -a^2/2 + theta, u1 = (1 + theta) a,
// next = theta/2 + a/2 + U[0,1], theta_1 ~ U[0,1], no discounting.
inline EnvironmentSpec seller_buyer_spec(std::size_t nodes = 201) {
  EnvironmentSpec s;
  s.T = 2;
  s.delta = 1.0;
  s.nodes = nodes;
  s.first = {0.0, 1.0};
  KernelSpec k;
  k.c1 = 0.5;
  k.c2 = 0.5;
  k.width = 1.0;
  s.kernels = {k};
  s.alloc_range = {{0.0, 6.0}, {0.0, 8.0}};
  Poly2 u0{{-0.5, 0, 2}, {1.0, 1, 0}};
  Poly2 u1{{1.0, 0, 1}, {1.0, 1, 1}};
  s.principal.participant = 0;
  s.principal.u = {u0, u0};
  s.agent.participant = 1;
  s.agent.u = {u1, u1};
  return s;
}

inline Environment seller_buyer(std::size_t nodes = 201) { return build_environment(seller_buyer_spec(nodes)); }

inline std::vector<StateFn> alpha_star() {
  return {StateFn::polynomial(Poly2{{10.0 / 3.0, 1, 0}, {4.0 / 3.0, 0, 0}}),
          StateFn::polynomial(Poly2{{1.0, 1, 0}, {0.5, 0, 1}, {0.5, 0, 0}}, true)};
}

inline SynthesisOptions zero_anchors(double eta1 = 0.0, PotentialRule rule = PotentialRule::Trapezoid) {
  SynthesisOptions o;
  o.anchors = {0.0, 0.0};
  o.eta = {eta1};
  o.rule = rule;
  return o;
}

inline Synthesis synthesized(const Environment& env, double eta1 = 0.0,
                             PotentialRule rule = PotentialRule::Trapezoid) {
  return synthesize(env, with_zero_payments(alpha_star()), zero_anchors(eta1, rule));
}

enum class Payments { Zero, Monotone, Synthesized, Random };

struct Instance {
  Environment env;
  Mechanism mech;
  Payments kind = Payments::Zero;
};

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
}

// Small FOSD-respecting environment: non-negative state and allocation feedback,
// increasing affine allocations, agent utility non-decreasing in the state.
inline Instance random_instance(std::mt19937_64& g, int T, std::size_t n, Payments kind) {
  EnvironmentSpec s;
  s.T = T;
  s.delta = uniform(g, 0.6, 1.0);
  s.nodes = n;
  s.first = {0.0, 1.0};
  for (int t = 1; t < T; ++t) {
    KernelSpec k;
    k.c1 = uniform(g, 0.0, 0.8);
    k.c2 = uniform(g, 0.0, 0.4);
    k.width = uniform(g, 0.5, 1.5);
    s.kernels.push_back(k);
  }
  s.principal.participant = 0;
  s.agent.participant = 1;
  std::vector<StateFn> alloc;
  for (int t = 1; t <= T; ++t) {
    s.alloc_range.push_back({0.0, 20.0});
    double b = uniform(g, 0.0, 1.0), c = uniform(g, 0.0, 1.0), d = uniform(g, 0.0, 0.5);
    s.agent.u.push_back(Poly2{{b, 0, 1}, {c, 1, 1}, {d, 1, 0}});
    s.principal.u.push_back(Poly2{{-0.5, 0, 2}, {1.0, 1, 0}});
    alloc.push_back(StateFn::polynomial(Poly2{{uniform(g, 0.0, 2.0), 1, 0}, {uniform(g, 0.0, 1.0), 0, 0}}));
  }
  if (g() % 2) {
    s.init.kind = InitialDensitySpec::Kind::Table;
    for (std::size_t i = 0; i < n; ++i) s.init.values.push_back(uniform(g, 0.2, 1.0));
  }
  Instance inst;
  inst.kind = kind;
  inst.env = build_environment(s);
  Mechanism m = with_zero_payments(alloc);
  if (kind == Payments::Zero) {
    for (int t = 1; t < T; ++t) m.pay.rho[t - 1] = uniform(g, -1.0, 1.0);
  } else if (kind == Payments::Monotone) {
    // phi = xi, non-decreasing in the report: stopping and continuing flows agree.
    for (int t = 1; t <= T; ++t) {
      Poly2 p{{uniform(g, 0.0, 1.0), 1, 0}, {uniform(g, -1.0, 1.0), 0, 0}};
      m.pay.phi[t - 1] = StateFn::polynomial(p);
      m.pay.xi[t - 1] = StateFn::polynomial(p);
      if (t < T) m.pay.rho[t - 1] = uniform(g, -1.0, 1.0);
    }
  } else if (kind == Payments::Synthesized) {
    SynthesisOptions o;
    for (int t = 1; t < T; ++t) {
      const PeriodGrid& gt = inst.env.grid(t);
      o.eta.push_back(uniform(g, gt.lo, gt.hi));
    }
    m = synthesize(inst.env, m, o).mech;
  } else {
    for (int t = 1; t <= T; ++t) {
      m.pay.phi[t - 1] = StateFn::polynomial(Poly2{{uniform(g, -2.0, 2.0), 1, 0}, {uniform(g, -1.0, 1.0), 0, 0}});
      m.pay.xi[t - 1] = StateFn::polynomial(Poly2{{uniform(g, -2.0, 2.0), 1, 0}, {uniform(g, -1.0, 1.0), 0, 0}});
      if (t < T) m.pay.rho[t - 1] = uniform(g, -1.0, 1.0);
    }
  }
  inst.mech = m;
  return inst;
}

}  // namespace fixtures
