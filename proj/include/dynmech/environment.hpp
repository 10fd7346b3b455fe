#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "poly.hpp"

namespace dynmech {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Per-period polynomial utility in (state, allocation) for one participant.
struct UtilitySpec {
  int participant = 1;
  std::vector<Poly2> u;
  std::vector<std::optional<Poly2>> du;  // closed-form state derivative, if supplied
  std::vector<Poly2> du_poly;            // derivative of u, filled by prepare()

  void prepare() {
    du.resize(u.size());
    du_poly.clear();
    for (const auto& p : u) du_poly.push_back(p.d_dx());
  }

  double value(int t, double theta, double a) const { return u.at(t - 1)(theta, a); }
  double d_theta(int t, double theta, double a) const {
    const auto& d = du.at(t - 1);
    if (d) return (*d)(theta, a);
    if (du_poly.size() == u.size()) return du_poly[t - 1](theta, a);
    return u.at(t - 1).d_dx()(theta, a);
  }
};

struct Environment {
  int T = 1;
  double delta = 1.0;
  std::vector<PeriodGrid> grids;
  std::vector<TransitionKernel> kernels;  // kernels[t-1] moves t -> t+1
  std::vector<double> init_density;       // nodal values on grid 1, trapezoid mass 1
  std::vector<Interval> alloc_range;
  UtilitySpec principal;
  UtilitySpec agent;
  double lipschitz_bound = 1e3;

  double disc(int t) const { return std::pow(delta, t); }
  const PeriodGrid& grid(int t) const { return grids.at(t - 1); }
  const TransitionKernel& kernel(int t) const {
    if (t < 1 || t >= T) throw IndexError("no transition kernel out of period " + std::to_string(t));
    return kernels[t - 1];
  }

  void weights(int t, double theta, double a, Weights& out) const {
    kernel(t).weights(grid(t + 1), theta, a, out);
  }
  void impulse(int t, double theta, double a, Weights& out) const {
    kernel(t).impulse(grid(t + 1), theta, a, out);
  }

  double initial_cdf(double theta) const { return grid(1).integrate_to(init_density, theta); }
  double initial_pdf(double theta) const { return grid(1).interp(init_density, theta); }
};

// Raw description of an environment before grids are materialized.
struct KernelSpec {
  TransitionKernel::Kind kind = TransitionKernel::Kind::AffineUniform;
  double c1 = 0.0, c2 = 0.0, width = 1.0;
  // tabular only
  std::vector<double> alloc_nodes;
  std::vector<double> table;  // [prev][alloc][next]
  Interval next_bounds;
  std::size_t next_nodes = 0;
};

struct InitialDensitySpec {
  enum class Kind { Uniform, Table, Polynomial } kind = Kind::Uniform;
  std::vector<double> values;  // table or polynomial coefficients (ascending powers)
};

struct EnvironmentSpec {
  int T = 1;
  double delta = 1.0;
  std::size_t nodes = 201;
  Interval first;                                  // period-1 state interval
  std::vector<std::optional<Interval>> bounds;     // explicit bounds for periods 2..T
  std::vector<KernelSpec> kernels;
  std::vector<Interval> alloc_range;
  UtilitySpec principal;
  UtilitySpec agent;
  InitialDensitySpec init;
  double lipschitz_bound = 1e3;
  double widen = 0.01;
};

// Reachable-support envelope of c1*theta + c2*a + [0,w] over the boxes.
inline Interval affine_envelope(const KernelSpec& k, const Interval& th, const Interval& a) {
  double s_lo = std::min(k.c1 * th.lo, k.c1 * th.hi) + std::min(k.c2 * a.lo, k.c2 * a.hi);
  double s_hi = std::max(k.c1 * th.lo, k.c1 * th.hi) + std::max(k.c2 * a.lo, k.c2 * a.hi);
  return {s_lo, s_hi + k.width};
}

inline Environment build_environment(const EnvironmentSpec& spec) {
  if (spec.T < 1) throw DegenerateError("horizon must be at least 1");
  if (!(spec.delta > 0.0 && spec.delta <= 1.0)) throw DegenerateError("discount must lie in (0, 1]");
  const auto T = static_cast<std::size_t>(spec.T);
  if (spec.kernels.size() != T - 1)
    throw SchemaError("expected " + std::to_string(T - 1) + " kernels, got " + std::to_string(spec.kernels.size()));
  if (spec.alloc_range.size() != T) throw SchemaError("allocation range must be given for every period");
  if (spec.agent.u.size() != T || spec.principal.u.size() != T)
    throw SchemaError("utilities must be given for every period");
  for (const auto& r : spec.alloc_range)
    if (r.lo > r.hi) throw SchemaError("allocation range has lo > hi");

  Environment env;
  env.T = spec.T;
  env.delta = spec.delta;
  env.alloc_range = spec.alloc_range;
  env.principal = spec.principal;
  env.agent = spec.agent;
  env.principal.prepare();
  env.agent.prepare();
  env.lipschitz_bound = spec.lipschitz_bound;

  env.grids.push_back(make_grid(1, spec.first.lo, spec.first.hi, spec.nodes));
  for (std::size_t t = 1; t < T; ++t) {
    const KernelSpec& ks = spec.kernels[t - 1];
    const PeriodGrid prev = env.grids.back();
    std::optional<Interval> given = t - 1 < spec.bounds.size() ? spec.bounds[t - 1] : std::nullopt;
    if (ks.kind == TransitionKernel::Kind::AffineUniform) {
      if (!(ks.width > 0.0)) throw DegenerateError("affine-uniform kernel needs width > 0");
      Interval env_iv = affine_envelope(ks, {prev.lo, prev.hi}, spec.alloc_range[t - 1]);
      Interval iv;
      if (given) {
        if (given->lo > env_iv.lo || given->hi < env_iv.hi)
          throw SupportError("grid for period " + std::to_string(t + 1) + " [" + std::to_string(given->lo) + ", " +
                             std::to_string(given->hi) + "] does not cover reachable support [" +
                             std::to_string(env_iv.lo) + ", " + std::to_string(env_iv.hi) + "]");
        iv = *given;
      } else {
        double pad = spec.widen * (env_iv.hi - env_iv.lo);
        iv = {env_iv.lo - pad, env_iv.hi + pad};
      }
      env.grids.push_back(make_grid(static_cast<int>(t + 1), iv.lo, iv.hi, spec.nodes));
      env.kernels.push_back(TransitionKernel::affine(ks.c1, ks.c2, ks.width));
    } else {
      std::size_t nn = ks.next_nodes ? ks.next_nodes : spec.nodes;
      env.grids.push_back(make_grid(static_cast<int>(t + 1), ks.next_bounds.lo, ks.next_bounds.hi, nn));
      env.kernels.push_back(TransitionKernel::tabular(prev, ks.alloc_nodes, ks.table, env.grids.back()));
    }
  }

  const PeriodGrid& g1 = env.grids.front();
  std::vector<double> d(g1.size(), 1.0);
  switch (spec.init.kind) {
    case InitialDensitySpec::Kind::Uniform:
      break;
    case InitialDensitySpec::Kind::Table:
      if (spec.init.values.size() != g1.size()) throw SchemaError("initial density table must match grid 1 size");
      d = spec.init.values;
      break;
    case InitialDensitySpec::Kind::Polynomial:
      for (std::size_t i = 0; i < g1.size(); ++i) {
        double s = 0.0, p = 1.0;
        for (double c : spec.init.values) {
          s += c * p;
          p *= g1.x[i];
        }
        d[i] = s;
      }
      break;
  }
  for (double v : d)
    if (!std::isfinite(v) || v < 0.0) throw SchemaError("initial density must be finite and nonnegative");
  double mass = g1.integrate(d);
  if (!(mass > 0.0)) throw DegenerateError("initial density has no mass");
  for (double& v : d) v /= mass;
  env.init_density = std::move(d);
  return env;
}

// F_{t+1}(x | theta_prev, a_prev).
inline double kernel_cdf(const Environment& env, int t, double x, double theta_prev, double a_prev) {
  return env.kernel(t).cdf(env.grid(t + 1), x, theta_prev, a_prev);
}

}  // namespace dynmech
