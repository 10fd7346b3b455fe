#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"
#include "poly.hpp"

namespace dynmech {

using Table = std::vector<std::vector<double>>;  // [memory slice][node]

// Previous report carried into a period whose rules use one-period memory.
struct Memo {
  bool present = false;
  int index = -1;  // node on the previous grid, or -1 when off-grid
  double value = 0.0;

  static Memo none() { return {}; }
  static Memo node(int i, double v) { return {true, i, v}; }
  static Memo at(double v) { return {true, -1, v}; }
};

// A per-period rule evaluated at a report: polynomial in (report, previous report)
// or a nodal table with linear interpolation in the report.
struct StateFn {
  enum class Kind { Poly, Table };
  Kind kind = Kind::Poly;
  Poly2 poly;
  dynmech::Table table;
  std::vector<double> prev_nodes;  // previous-period nodes of the table's slices
  bool memory = false;

  static StateFn constant(double c) {
    StateFn f;
    f.poly = Poly2::constant(c);
    return f;
  }
  static StateFn polynomial(Poly2 p, bool memory = false) {
    StateFn f;
    f.poly = std::move(p);
    f.memory = memory;
    return f;
  }
  static StateFn tabular(dynmech::Table t, bool memory = false, std::vector<double> prev_nodes = {}) {
    StateFn f;
    f.kind = Kind::Table;
    f.table = std::move(t);
    f.memory = memory;
    f.prev_nodes = std::move(prev_nodes);
    return f;
  }

  double eval(const PeriodGrid& g, double report, const Memo& m) const {
    if (memory && !m.present)
      throw MemoryError("rule for period " + std::to_string(g.period) + " reads the previous report but none was given");
    if (kind == Kind::Poly) return poly(report, memory ? m.value : 0.0);
    if (!memory) return g.interp(table.at(0), report);
    if (m.index >= 0) return g.interp(table.at(static_cast<std::size_t>(m.index)), report);
    if (prev_nodes.size() != table.size())
      throw MemoryError("tabular rule with memory needs an on-grid previous report");
    // Off-grid previous report: linear in the previous report between slices.
    auto it = std::upper_bound(prev_nodes.begin(), prev_nodes.end(), m.value);
    std::size_t k = it == prev_nodes.begin() ? 0 : static_cast<std::size_t>(it - prev_nodes.begin()) - 1;
    k = std::min(k, prev_nodes.size() - 2);
    double f = std::clamp((m.value - prev_nodes[k]) / (prev_nodes[k + 1] - prev_nodes[k]), 0.0, 1.0);
    return (1.0 - f) * g.interp(table[k], report) + f * g.interp(table[k + 1], report);
  }
};

struct PaymentRules {
  std::vector<StateFn> phi;  // paid in periods where the agent continues
  std::vector<StateFn> xi;   // paid in the stopping period
  std::vector<double> rho;   // posted price by stopping time, rho(T) = 0
};

struct Mechanism {
  std::vector<StateFn> alloc;
  PaymentRules pay;

  int horizon() const { return static_cast<int>(alloc.size()); }

  bool memory(int t) const {
    if (t <= 1) return false;
    return alloc.at(t - 1).memory || pay.phi.at(t - 1).memory || pay.xi.at(t - 1).memory;
  }

  std::size_t slices(const Environment& env, int t) const { return memory(t) ? env.grid(t - 1).size() : 1; }

  Memo memo(const Environment& env, int t, std::size_t slice) const {
    if (!memory(t)) return Memo::none();
    return Memo::node(static_cast<int>(slice), env.grid(t - 1).x[slice]);
  }

  // Memory slice used at t+1 after reporting node k at t.
  std::size_t next_slice(int t, std::size_t k) const { return memory(t + 1) ? k : 0; }

  double allocation(const Environment& env, int t, double report, const Memo& m) const {
    double a = alloc.at(t - 1).eval(env.grid(t), report, m);
    const Interval& r = env.alloc_range.at(t - 1);
    return std::clamp(a, r.lo, r.hi);
  }
  double phi(const Environment& env, int t, double report, const Memo& m) const {
    return pay.phi.at(t - 1).eval(env.grid(t), report, m);
  }
  double xi(const Environment& env, int t, double report, const Memo& m) const {
    return pay.xi.at(t - 1).eval(env.grid(t), report, m);
  }
  double rho(int t) const { return pay.rho.at(t - 1); }

  void check(const Environment& env) const {
    const auto T = static_cast<std::size_t>(env.T);
    if (alloc.size() != T || pay.phi.size() != T || pay.xi.size() != T || pay.rho.size() != T)
      throw SchemaError("mechanism period count does not match the horizon");
    if (pay.rho.back() != 0.0) throw AssumptionError("posted price at the final period must be exactly 0");
    if (alloc.front().memory || pay.phi.front().memory || pay.xi.front().memory)
      throw MemoryError("period-1 rules cannot read a previous report");
  }
};

// (allocation, continuing payment, stopping payment) at a report.
inline std::tuple<double, double, double> eval_mechanism(const Environment& env, const Mechanism& mech, int t,
                                                         double report, const Memo& m = Memo::none()) {
  return {mech.allocation(env, t, report, m), mech.phi(env, t, report, m), mech.xi(env, t, report, m)};
}

// Mechanism with zero payments around an allocation rule.
inline Mechanism with_zero_payments(std::vector<StateFn> alloc) {
  Mechanism m;
  const std::size_t T = alloc.size();
  m.alloc = std::move(alloc);
  m.pay.phi.assign(T, StateFn::constant(0.0));
  m.pay.xi.assign(T, StateFn::constant(0.0));
  m.pay.rho.assign(T, 0.0);
  return m;
}

struct ReportingStrategy {
  enum class Kind { Truthful, OneShot, Arbitrary };
  Kind kind = Kind::Truthful;
  int period = 0;
  std::function<double(double)> map;
  std::vector<std::function<double(double)>> maps;

  static ReportingStrategy truthful() { return {}; }
  static ReportingStrategy one_shot(int t, std::function<double(double)> f) {
    ReportingStrategy s;
    s.kind = Kind::OneShot;
    s.period = t;
    s.map = std::move(f);
    return s;
  }
  static ReportingStrategy arbitrary(std::vector<std::function<double(double)>> fs) {
    ReportingStrategy s;
    s.kind = Kind::Arbitrary;
    s.maps = std::move(fs);
    return s;
  }
};

inline double compose_report(const Environment& env, const ReportingStrategy& s, int t, double theta) {
  double r = theta;
  if (s.kind == ReportingStrategy::Kind::OneShot && t == s.period) r = s.map(theta);
  if (s.kind == ReportingStrategy::Kind::Arbitrary && t - 1 < static_cast<int>(s.maps.size()) && s.maps[t - 1])
    r = s.maps[t - 1](theta);
  const PeriodGrid& g = env.grid(t);
  return std::clamp(r, g.lo, g.hi);
}

struct StoppingPolicy {
  enum class Kind { Threshold, Regions };
  Kind kind = Kind::Threshold;
  std::vector<double> eta;                        // stop at t iff theta_t <= eta[t-1]
  std::vector<std::vector<std::vector<char>>> regions;  // [t-1][slice][node]

  static StoppingPolicy threshold(const Environment& env, std::vector<double> eta) {
    if (eta.size() == static_cast<std::size_t>(env.T - 1)) eta.push_back(env.grid(env.T).hi);
    if (eta.size() != static_cast<std::size_t>(env.T)) throw SchemaError("threshold vector has wrong length");
    eta.back() = env.grid(env.T).hi;
    StoppingPolicy p;
    p.eta = std::move(eta);
    return p;
  }
  static StoppingPolicy from_regions(std::vector<std::vector<std::vector<char>>> r) {
    StoppingPolicy p;
    p.kind = Kind::Regions;
    p.regions = std::move(r);
    return p;
  }

  bool stops(const Environment& env, int t, double theta, std::size_t slice = 0) const {
    if (t == env.T) return true;
    if (kind == Kind::Threshold) return theta <= eta.at(t - 1);
    const auto& row = regions.at(t - 1).at(std::min(slice, regions[t - 1].size() - 1));
    return row.at(env.grid(t).nearest(theta)) != 0;
  }
};

}  // namespace dynmech
