#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "environment.hpp"
#include "errors.hpp"
#include "mechanism.hpp"
#include "synth.hpp"

namespace dynmech {

using json = nlohmann::json;

// Reals may be written as JSON numbers or as strings holding a decimal or "p/q".
inline double parse_real(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw SchemaError(what + ": expected a number");
  const std::string s = j.get<std::string>();
  auto to_d = [&](const std::string& part) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      throw SchemaError(what + ": cannot parse '" + s + "'");
    }
    if (used != part.size()) throw SchemaError(what + ": cannot parse '" + s + "'");
    return v;
  };
  auto slash = s.find('/');
  if (slash == std::string::npos) return to_d(s);
  double q = to_d(s.substr(slash + 1));
  if (q == 0.0) throw SchemaError(what + ": zero denominator");
  return to_d(s.substr(0, slash)) / q;
}

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing '" + key + "'");
  return j.at(key);
}

inline std::vector<double> parse_reals(const json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + ": expected an array");
  std::vector<double> v;
  for (const auto& e : j) v.push_back(parse_real(e, what));
  return v;
}

inline Interval parse_interval(const json& j, const std::string& what) {
  if (j.is_array() && j.size() == 2) return {parse_real(j[0], what), parse_real(j[1], what)};
  return {parse_real(need(j, "lo", what), what), parse_real(need(j, "hi", what), what)};
}

inline Poly2 parse_poly(const json& j, const std::string& what) {
  const json& terms = j.is_object() ? need(j, "terms", what) : j;
  if (!terms.is_array()) throw SchemaError(what + ": terms must be an array");
  Poly2 p;
  for (const auto& t : terms) {
    if (!t.is_array() || t.size() < 2 || t.size() > 3) throw SchemaError(what + ": term must be [coef, i] or [coef, i, j]");
    Poly2::Term term;
    term.c = parse_real(t[0], what);
    term.i = t[1].get<int>();
    term.j = t.size() == 3 ? t[2].get<int>() : 0;
    if (term.i < 0 || term.j < 0) throw SchemaError(what + ": negative exponent");
    p.terms.push_back(term);
  }
  return p;
}

inline UtilitySpec parse_utility(const json& j, int participant, int T, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != T) throw SchemaError(what + ": one utility per period is required");
  UtilitySpec u;
  u.participant = participant;
  for (int t = 0; t < T; ++t) {
    const std::string w = what + "[" + std::to_string(t) + "]";
    u.u.push_back(parse_poly(j[t], w));
    if (j[t].is_object() && j[t].contains("d_theta"))
      u.du.push_back(parse_poly(j[t]["d_theta"], w + ".d_theta"));
    else
      u.du.push_back(std::nullopt);
  }
  return u;
}

inline KernelSpec parse_kernel(const json& j, const std::string& what) {
  KernelSpec k;
  const std::string kind = need(j, "kind", what).get<std::string>();
  if (kind == "affine_uniform") {
    k.kind = TransitionKernel::Kind::AffineUniform;
    k.c1 = parse_real(need(j, "c1", what), what);
    k.c2 = parse_real(need(j, "c2", what), what);
    k.width = parse_real(need(j, "width", what), what);
  } else if (kind == "tabular") {
    k.kind = TransitionKernel::Kind::Tabular;
    k.alloc_nodes = parse_reals(need(j, "alloc_nodes", what), what);
    const json& tab = need(j, "table", what);
    if (!tab.is_array()) throw SchemaError(what + ": table must be nested arrays [prev][alloc][next]");
    for (const auto& a : tab)
      for (const auto& b : a)
        for (const auto& c : b) k.table.push_back(parse_real(c, what));
    k.next_bounds = parse_interval(need(j, "next_bounds", what), what);
    k.next_nodes = need(j, "next_nodes", what).get<std::size_t>();
  } else {
    throw SchemaError(what + ": unknown kernel kind '" + kind + "'");
  }
  return k;
}

inline StateFn parse_rule(const json& j, const std::string& what) {
  bool memory = j.is_object() && j.value("memory", false);
  if (j.is_object() && j.contains("table")) {
    Table t;
    const json& tab = j["table"];
    if (!tab.is_array() || tab.empty()) throw SchemaError(what + ": table must be a non-empty array");
    if (tab[0].is_array()) {
      for (const auto& row : tab) t.push_back(parse_reals(row, what));
    } else {
      t.push_back(parse_reals(tab, what));
    }
    return StateFn::tabular(std::move(t), memory);
  }
  if (j.is_number() || j.is_string()) return StateFn::constant(parse_real(j, what));
  return StateFn::polynomial(parse_poly(j, what), memory);
}

struct SolverSettings {
  double tie = 1e-9;
  bool strict_literal = false;
  bool strict = false;
  double ic_tolerance = 1e-3;
  std::uint64_t optimizer_seed = 7;
  int optimizer_starts = 8;
  double param_lo = -10.0, param_hi = 10.0;
  bool family_memory = true;
  json reference = json::object();  // named reference parameter sets for comparison
};

struct Scenario {
  json raw;
  EnvironmentSpec env;
  bool has_mechanism = false;
  std::vector<StateFn> alloc;
  bool synthesize_payments = true;
  PaymentRules payments;
  SynthesisOptions synthesis;
  SolverSettings solver;
  std::size_t paths = 100000;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::vector<std::string> formats = {"csv", "json"};
};

inline Scenario parse_scenario(const json& j) {
  Scenario s;
  s.raw = j;
  const json& e = need(j, "environment", "scenario");
  const std::string W = "environment";
  s.env.T = need(e, "T", W).get<int>();
  if (s.env.T < 1) throw DegenerateError("horizon must be at least 1");
  s.env.delta = parse_real(need(e, "delta", W), W + ".delta");
  s.env.nodes = e.value("nodes", std::size_t{201});
  s.env.first = parse_interval(need(e, "state", W), W + ".state");
  if (e.contains("bounds")) {
    for (const auto& b : e["bounds"]) {
      if (b.is_null())
        s.env.bounds.push_back(std::nullopt);
      else
        s.env.bounds.push_back(parse_interval(b, W + ".bounds"));
    }
  }
  if (e.contains("kernels"))
    for (std::size_t k = 0; k < e["kernels"].size(); ++k)
      s.env.kernels.push_back(parse_kernel(e["kernels"][k], W + ".kernels[" + std::to_string(k) + "]"));
  for (const auto& r : need(e, "alloc_range", W)) s.env.alloc_range.push_back(parse_interval(r, W + ".alloc_range"));
  const json& u = need(e, "utilities", W);
  s.env.principal = parse_utility(need(u, "principal", W), 0, s.env.T, W + ".utilities.principal");
  s.env.agent = parse_utility(need(u, "agent", W), 1, s.env.T, W + ".utilities.agent");
  if (e.contains("initial")) {
    const json& in = e["initial"];
    const std::string kind = need(in, "kind", W + ".initial").get<std::string>();
    if (kind == "uniform") {
      s.env.init.kind = InitialDensitySpec::Kind::Uniform;
    } else if (kind == "table") {
      s.env.init.kind = InitialDensitySpec::Kind::Table;
      s.env.init.values = parse_reals(need(in, "values", W), W + ".initial.values");
    } else if (kind == "polynomial") {
      s.env.init.kind = InitialDensitySpec::Kind::Polynomial;
      s.env.init.values = parse_reals(need(in, "coefficients", W), W + ".initial.coefficients");
    } else {
      throw SchemaError(W + ".initial: unknown kind '" + kind + "'");
    }
  }
  if (e.contains("lipschitz_bound")) s.env.lipschitz_bound = parse_real(e["lipschitz_bound"], W + ".lipschitz_bound");
  if (e.contains("widen")) s.env.widen = parse_real(e["widen"], W + ".widen");

  if (j.contains("mechanism")) {
    const json& m = j["mechanism"];
    s.has_mechanism = true;
    const json& al = need(m, "allocation", "mechanism");
    if (!al.is_array() || static_cast<int>(al.size()) != s.env.T)
      throw SchemaError("mechanism.allocation: one rule per period is required");
    for (std::size_t t = 0; t < al.size(); ++t)
      s.alloc.push_back(parse_rule(al[t], "mechanism.allocation[" + std::to_string(t) + "]"));
    const json pay = m.value("payments", json("synthesize"));
    if (pay.is_string()) {
      if (pay.get<std::string>() != "synthesize") throw SchemaError("mechanism.payments: expected 'synthesize' or an object");
      s.synthesize_payments = true;
    } else {
      s.synthesize_payments = false;
      for (const auto& r : need(pay, "phi", "mechanism.payments")) s.payments.phi.push_back(parse_rule(r, "mechanism.payments.phi"));
      for (const auto& r : need(pay, "xi", "mechanism.payments")) s.payments.xi.push_back(parse_rule(r, "mechanism.payments.xi"));
      s.payments.rho = parse_reals(need(pay, "rho", "mechanism.payments"), "mechanism.payments.rho");
    }
  }
  if (j.contains("synthesis")) {
    const json& y = j["synthesis"];
    if (y.contains("anchors")) s.synthesis.anchors = parse_reals(y["anchors"], "synthesis.anchors");
    if (y.contains("eta")) s.synthesis.eta = parse_reals(y["eta"], "synthesis.eta");
    const std::string rule = y.value("rule", std::string("trapezoid"));
    if (rule == "trapezoid")
      s.synthesis.rule = PotentialRule::Trapezoid;
    else if (rule == "endpoint")
      s.synthesis.rule = PotentialRule::Endpoint;
    else
      throw SchemaError("synthesis.rule: expected 'trapezoid' or 'endpoint'");
  }
  if (j.contains("solver")) {
    const json& v = j["solver"];
    if (v.contains("nodes")) s.env.nodes = v["nodes"].get<std::size_t>();
    if (v.contains("tie")) s.solver.tie = parse_real(v["tie"], "solver.tie");
    s.solver.strict_literal = v.value("strict_literal", false);
    s.solver.strict = v.value("strict", false);
    if (v.contains("ic_tolerance")) s.solver.ic_tolerance = parse_real(v["ic_tolerance"], "solver.ic_tolerance");
    if (v.contains("optimizer")) {
      const json& o = v["optimizer"];
      s.solver.optimizer_seed = o.value("seed", std::uint64_t{7});
      s.solver.optimizer_starts = o.value("starts", 8);
      if (o.contains("bounds")) {
        Interval b = parse_interval(o["bounds"], "solver.optimizer.bounds");
        s.solver.param_lo = b.lo;
        s.solver.param_hi = b.hi;
      }
      s.solver.family_memory = o.value("memory", true);
    }
    if (v.contains("reference")) s.solver.reference = v["reference"];
  }
  s.synthesis.strict_literal = s.solver.strict_literal;
  if (j.contains("simulation")) {
    const json& m = j["simulation"];
    s.paths = m.value("paths", std::size_t{100000});
    s.seed = m.value("seed", std::uint64_t{1});
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    s.out_dir = o.value("directory", std::string("out"));
    if (o.contains("formats")) s.formats = o["formats"].get<std::vector<std::string>>();
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw SchemaError(std::string("scenario is not valid JSON: ") + ex.what());
  }
  try {
    return parse_scenario(j);
  } catch (const json::exception& ex) {
    throw SchemaError(std::string("scenario has a wrongly typed field: ") + ex.what());
  }
}

// FNV-1a over the canonical dump (object keys sorted).
inline std::string config_digest(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline Mechanism scenario_mechanism(const Scenario& s, const Environment& env) {
  if (!s.has_mechanism) throw SchemaError("scenario has no mechanism block");
  Mechanism m;
  if (s.synthesize_payments) {
    m = with_zero_payments(s.alloc);
  } else {
    m.alloc = s.alloc;
    m.pay = s.payments;
  }
  auto bind = [&](std::vector<StateFn>& fs) {
    for (std::size_t t = 1; t < fs.size(); ++t)
      if (fs[t].kind == StateFn::Kind::Table && fs[t].memory) fs[t].prev_nodes = env.grid(static_cast<int>(t)).x;
  };
  bind(m.alloc);
  bind(m.pay.phi);
  bind(m.pay.xi);
  return m;
}

}  // namespace dynmech
