#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dynmech.hpp"

namespace dynmech::cli {

inline constexpr const char* kVersion = "1.0.0";

enum Exit : int { Ok = 0, Failed = 1, Invalid = 2, NotIC = 3, Config = 4 };

struct Args {
  std::string command;
  std::string scenario;
  std::string out;
  std::optional<std::size_t> grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::vector<std::string> eta;
  bool strict_literal = false;
  std::string format;
  bool timing = false;
  bool heat = false;
};

// Everything a command needs, built once from the scenario plus flag overrides.
struct Run {
  Args args;
  Scenario sc;
  Environment env;
  std::filesystem::path out;
  json report = json::object();

  bool want(const char* fmt) const {
    if (!args.format.empty()) return args.format == fmt;
    for (const auto& f : sc.formats)
      if (f == fmt) return true;
    return false;
  }
  ValueOptions value_options() const {
    ValueOptions o;
    o.tie = sc.solver.tie;
    o.strict_literal = sc.solver.strict_literal;
    o.strict = sc.solver.strict;
    return o;
  }
  std::vector<double> eta_override() const {
    std::vector<double> v;
    for (const auto& e : args.eta) v.push_back(parse_real(json(e), "--eta"));
    return v;
  }
};

inline Run prepare(const Args& a) {
  Run r;
  r.args = a;
  r.sc = load_scenario(a.scenario);
  if (a.grid) {
    if (*a.grid < 3) throw SchemaError("--grid needs at least 3 nodes");
    r.sc.env.nodes = *a.grid;
  }
  if (a.seed) r.sc.seed = *a.seed;
  if (a.paths) r.sc.paths = *a.paths;
  if (a.strict_literal) {
    r.sc.solver.strict_literal = true;
    r.sc.synthesis.strict_literal = true;
  }
  if (!a.eta.empty() && a.command != "optimize") r.sc.synthesis.eta = r.eta_override();
  r.out = a.out.empty() ? std::filesystem::path(r.sc.out_dir) : std::filesystem::path(a.out);
  r.env = build_environment(r.sc.env);
  r.report["command"] = a.command;
  r.report["config_digest"] = config_digest(r.sc.raw);
  r.report["tool_version"] = kVersion;
  json ov = json::object();
  if (a.grid) ov["grid"] = *a.grid;
  if (a.seed) ov["seed"] = *a.seed;
  if (a.paths) ov["paths"] = *a.paths;
  if (!a.eta.empty()) ov["eta"] = a.eta;
  if (a.strict_literal) ov["strict_literal"] = true;
  r.report["overrides"] = ov;
  r.report["modules"] = json::object();
  return r;
}

inline Mechanism mechanism(const Run& r, std::optional<Synthesis>* synth = nullptr) {
  Mechanism m = scenario_mechanism(r.sc, r.env);
  if (!r.sc.synthesize_payments) {
    m.check(r.env);
    return m;
  }
  Synthesis s = synthesize(r.env, m, r.sc.synthesis);
  if (synth) *synth = s;
  return s.mech;
}

inline json eta_json(const std::vector<double>& eta) {
  json j = json::array();
  for (double e : eta) j.push_back(e);
  return j;
}

inline void write_values(const Run& r, const Mechanism& m, const ValueSolution& sol) {
  if (!r.want("csv")) return;
  for (int t = 1; t <= r.env.T; ++t)
    write_text(r.out / ("values_t" + std::to_string(t) + ".csv"), values_csv(r.env, m, sol, t));
}

inline void write_potentials(const Run& r, const Synthesis& s) {
  if (!r.want("csv")) return;
  for (int t = 1; t <= r.env.T; ++t)
    write_text(r.out / ("potentials_t" + std::to_string(t) + ".csv"), potentials_csv(r.env, s, t));
}

inline int cmd_validate(Run& r, std::ostream& out) {
  std::vector<ValidationReport> reps;
  reps.push_back(check_initial_density(r.env));
  reps.push_back(check_full_support(r.env));
  reps.push_back(check_utility_derivatives(r.env));
  if (r.sc.has_mechanism) {
    Mechanism alloc = scenario_mechanism(r.sc, r.env);
    reps.push_back(check_allocation_range(r.env, alloc));
    reps.push_back(check_fosd(r.env, alloc));
    reps.push_back(check_lipschitz(r.env, alloc));
    reps.push_back(check_quadrature_closure(r.env, alloc));
    Mechanism m = mechanism(r);
    ValueOptions vo = r.value_options();
    vo.strict = false;
    SingleCrossingReport sc = check_single_crossing(r.env, m, solve_value_tables(r.env, m, vo));
    reps.push_back(sc.chi);
    reps.push_back(sc.mu_bar);
  }
  bool ok = true;
  json js = json::array();
  for (const auto& v : reps) {
    out << (v.pass ? "PASS " : "FAIL ") << v.name;
    if (!v.pass) out << "  worst " << fmt_real(v.worst) << " at " << v.where;
    out << "\n";
    ok = ok && v.pass;
    js.push_back(to_json(v));
  }
  r.report["modules"]["validation"] = js;
  r.report["verdict"] = ok ? "PASS" : "FAIL";
  return ok ? Ok : Invalid;
}

inline int cmd_solve(Run& r, std::ostream& out) {
  Mechanism m = mechanism(r);
  ValueSolution sol = solve_value(r.env, m, r.value_options());
  write_values(r, m, sol);
  json j;
  j["eta"] = eta_json(sol.eta);
  j["mean_first_passage"] = sol.mfpt;
  j["ex_ante_agent"] = sol.ex_ante;
  j["bottom_value"] = sol.at(1).V[0][0];
  j["threshold"] = sol.threshold;
  r.report["modules"]["valsolve"] = j;
  out << "V1(bottom) = " << fmt_real(sol.at(1).V[0][0]) << "\n";
  out << "E[V1] = " << fmt_real(sol.ex_ante) << "\n";
  out << "eta =";
  for (double e : sol.eta) out << " " << fmt_real(e);
  out << "\nmean first passage = " << fmt_real(sol.mfpt) << "\n";
  return Ok;
}

inline ICReport run_ic(Run& r, const Mechanism& m, const ValueSolution& sol, std::ostream& out) {
  ICOptions o;
  o.tol = r.sc.solver.ic_tolerance;
  o.heat_map = r.args.heat || r.args.command == "report";
  ICReport ic = one_shot_check(r.env, m, sol, o);
  if (r.want("json")) write_json(r.out / "ic_report.json", to_json(ic));
  if (o.heat_map && r.want("csv"))
    for (int t = 1; t <= r.env.T; ++t)
      write_text(r.out / ("ic_heat_t" + std::to_string(t) + ".csv"), heat_csv(r.env, ic, t));
  for (const auto& p : ic.periods)
    out << "period " << p.stop.period << ": stop gap " << fmt_real(p.stop.gap) << ", continue gap "
        << fmt_real(p.cont.gap) << ", raw gap " << fmt_real(p.raw.gap) << "\n";
  out << "IC " << (ic.pass ? "PASS" : "FAIL") << " (worst " << fmt_real(ic.worst) << ", tolerance " << fmt_real(ic.tol)
      << ")";
  if (ic.verdicts_differ) out << "; branch-wise and raw verdicts differ";
  out << "\n";
  r.report["modules"]["icver"] = {{"pass", ic.pass}, {"worst_gap", ic.worst}, {"raw_pass", ic.pass_raw},
                                  {"raw_worst_gap", ic.worst_raw}, {"verdicts_differ", ic.verdicts_differ}};
  return ic;
}

inline int cmd_verify_ic(Run& r, std::ostream& out) {
  Mechanism m = mechanism(r);
  ValueSolution sol = solve_value(r.env, m, r.value_options());
  return run_ic(r, m, sol, out).pass ? Ok : NotIC;
}

inline int cmd_synthesize(Run& r, std::ostream& out) {
  if (!r.sc.has_mechanism) throw SchemaError("synthesize needs a mechanism block with allocation rules");
  Mechanism alloc = scenario_mechanism(r.sc, r.env);
  Synthesis s = synthesize(r.env, alloc, r.sc.synthesis);
  write_potentials(r, s);
  ValueSolution sol = solve_value(r.env, s.mech, r.value_options());
  write_values(r, s.mech, sol);
  json j;
  j["rho"] = s.mech.pay.rho;
  j["anchors"] = s.potentials.anchor;
  j["rule"] = s.potentials.rule == PotentialRule::Trapezoid ? "trapezoid" : "endpoint";
  j["bottom_value"] = sol.at(1).V[0][0];
  j["eta"] = eta_json(sol.eta);
  r.report["modules"]["paysynth"] = j;
  out << "rho =";
  for (double v : s.mech.pay.rho) out << " " << fmt_real(v);
  out << "\nV1(bottom) = " << fmt_real(sol.at(1).V[0][0]) << "\n";
  return run_ic(r, s.mech, sol, out).pass ? Ok : NotIC;
}

inline int cmd_optimize(Run& r, std::ostream& out) {
  std::vector<double> etas = r.eta_override();
  if (etas.empty()) etas = r.sc.synthesis.eta.empty() ? std::vector<double>{r.env.grid(1).lo} : r.sc.synthesis.eta;
  if (r.env.T > 2 && r.args.eta.size() > 0)
    throw SchemaError("--eta sweeps the period-1 threshold only; give later thresholds in the scenario");
  AffineFamily fam = affine_family(r.env.T, r.sc.solver.family_memory, r.sc.solver.param_lo, r.sc.solver.param_hi);
  OptimizerConfig cfg;
  cfg.seed = r.sc.solver.optimizer_seed;
  cfg.starts = r.sc.solver.optimizer_starts;
  const auto names = fam.names();

  json runs = json::array();
  std::optional<AllocationOptimum> best;
  std::ostringstream cmp;
  cmp << "eta,parameter,estimate,reference,abs_error\n";
  for (double e1 : etas) {
    std::vector<double> eta = {e1};
    for (int t = 2; t < r.env.T; ++t)
      eta.push_back(t - 1 < static_cast<int>(r.sc.synthesis.eta.size()) ? r.sc.synthesis.eta[t - 1] : r.env.grid(t).lo);
    AllocationOptimum a = optimize_allocation(r.env, fam, eta, cfg);
    const double tau = mean_first_passage(r.env, a.mech, eta);
    json j = to_json(a.opt, names);
    j["eta"] = eta_json(eta);
    j["mean_first_passage"] = tau;

    // Payments for the optimized rule, re-anchored so the bottom state earns zero.
    SynthesisOptions so = r.sc.synthesis;
    so.eta = eta;
    Synthesis s = synthesize(r.env, a.mech, so);
    ValueSolution sol = solve_value(r.env, s.mech, r.value_options());
    double shift = 0.0;
    Mechanism forced = force_bottom_zero(r.env, s.mech, sol, &shift);
    ValueSolution sol2 = solve_value(r.env, forced, r.value_options());
    RPReport rp = rp_check(r.env, sol2);
    j["bottom_shift"] = shift;
    j["rp"] = {{"pass", rp.pass}, {"ex_ante", rp.ex_ante}, {"bottom", rp.bottom}};

    std::ostringstream key;
    key << "eta=" << fmt_real(e1);
    if (r.sc.solver.reference.contains(key.str())) {
      const json& ref = r.sc.solver.reference[key.str()];
      for (std::size_t k = 0; k < names.size(); ++k) {
        if (!ref.contains(names[k])) continue;
        double v = parse_real(ref[names[k]], "solver.reference");
        cmp << fmt_real(e1) << "," << names[k] << "," << fmt_real(a.opt.params[k]) << "," << fmt_real(v) << ","
            << fmt_real(std::abs(a.opt.params[k] - v)) << "\n";
      }
    }
    out << "eta(1) = " << fmt_real(e1) << ": value " << fmt_real(a.opt.value) << ", mean first passage "
        << fmt_real(tau) << "\n ";
    for (std::size_t k = 0; k < names.size(); ++k) out << " " << names[k] << "=" << fmt_real(a.opt.params[k]);
    out << "\n";
    runs.push_back(j);
    if (!best || a.opt.value > best->opt.value) best = a;
  }
  json rep;
  rep["runs"] = runs;
  rep["best"] = to_json(best->opt, names);
  rep["best"]["eta"] = eta_json(best->eta);
  rep["optimizer"] = {{"seed", cfg.seed}, {"starts", cfg.starts}, {"max_sweeps", cfg.max_sweeps}, {"xtol", cfg.xtol}};
  if (r.want("json")) write_json(r.out / "optimizer_report.json", rep);
  if (r.want("csv")) write_text(r.out / "reference_comparison.csv", cmp.str());
  r.report["modules"]["optmech"] = {{"best_value", best->opt.value}, {"best_eta", eta_json(best->eta)}};
  return Ok;
}

inline int cmd_simulate(Run& r, std::ostream& out) {
  Mechanism m = mechanism(r);
  ValueSolution sol = solve_value(r.env, m, r.value_options());
  StoppingPolicy stop;
  if (sol.threshold) {
    stop = StoppingPolicy::threshold(r.env, sol.eta);
  } else {
    std::vector<std::vector<std::vector<char>>> st;
    for (const auto& pv : sol.p) st.push_back(pv.stop);
    stop = StoppingPolicy::from_regions(st);
  }
  MCStats mc = monte_carlo(r.env, m, stop, r.sc.paths, r.sc.seed);
  json j = to_json(mc);
  j["quadrature"] = {{"agent", sol.ex_ante}, {"tau", sol.mfpt}};
  const double za = mc.agent.stderr_ > 0 ? std::abs(mc.agent.mean - sol.ex_ante) / mc.agent.stderr_ : 0.0;
  const double zt = mc.tau.stderr_ > 0 ? std::abs(mc.tau.mean - sol.mfpt) / mc.tau.stderr_ : 0.0;
  j["agent_z"] = za;
  j["tau_z"] = zt;
  if (r.want("json")) write_json(r.out / "mc_stats.json", j);
  r.report["modules"]["montecarlo"] = j;
  out << "agent payoff " << fmt_real(mc.agent.mean) << " +- " << fmt_real(mc.agent.stderr_) << " (quadrature "
      << fmt_real(sol.ex_ante) << ")\n";
  out << "principal payoff " << fmt_real(mc.principal.mean) << " +- " << fmt_real(mc.principal.stderr_) << "\n";
  out << "stopping time " << fmt_real(mc.tau.mean) << " +- " << fmt_real(mc.tau.stderr_) << " (exact "
      << fmt_real(sol.mfpt) << ")\n";
  return Ok;
}

inline int cmd_report(Run& r, std::ostream& out) {
  std::optional<Synthesis> s;
  Mechanism m = mechanism(r, &s);
  ValueSolution sol = solve_value(r.env, m, r.value_options());
  write_values(r, m, sol);
  if (s) write_potentials(r, *s);
  if (r.want("csv")) {
    CsvWriter w({"period", "eta"});
    for (int t = 1; t <= r.env.T; ++t) w.row({static_cast<double>(t), sol.eta[t - 1]});
    write_text(r.out / "eta.csv", w.str());
  }
  r.report["modules"]["valsolve"] = {{"eta", eta_json(sol.eta)}, {"mean_first_passage", sol.mfpt},
                                     {"ex_ante_agent", sol.ex_ante}};
  return run_ic(r, m, sol, out).pass ? Ok : NotIC;
}

inline int dispatch(Run& r, std::ostream& out) {
  const std::string& c = r.args.command;
  if (c == "validate") return cmd_validate(r, out);
  if (c == "solve") return cmd_solve(r, out);
  if (c == "verify-ic") return cmd_verify_ic(r, out);
  if (c == "synthesize") return cmd_synthesize(r, out);
  if (c == "optimize") return cmd_optimize(r, out);
  if (c == "simulate") return cmd_simulate(r, out);
  if (c == "report") return cmd_report(r, out);
  throw SchemaError("unknown command '" + c + "'");
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Finite-horizon dynamic mechanisms with exit: solve, audit, synthesize, optimize."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Args a;
  auto common = [&a](CLI::App* s) {
    s->add_option("--scenario", a.scenario, "scenario file")->required();
    s->add_option("--out", a.out, "output directory");
    s->add_option("--grid", a.grid, "nodes per period grid");
    s->add_option("--seed", a.seed, "Monte Carlo seed");
    s->add_option("--paths", a.paths, "Monte Carlo paths");
    s->add_option("--eta", a.eta, "period thresholds (optimize: period-1 sweep)")->delimiter(',');
    s->add_flag("--strict-literal", a.strict_literal, "use the printed recursion and payment exponents");
    s->add_option("--format", a.format, "write only this format")->check(CLI::IsMember({"csv", "json"}));
    s->add_flag("--timing", a.timing, "record wall time in run_report.json");
    s->add_flag("--heat", a.heat, "write IC gap heat-map data");
  };
  for (const char* name : {"validate", "solve", "verify-ic", "synthesize", "optimize", "simulate", "report"}) {
    CLI::App* s = app.add_subcommand(name);
    common(s);
    s->callback([&a, name] { a.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return Config;
  }

  const auto t0 = std::chrono::steady_clock::now();
  int code = Ok;
  try {
    Run r = prepare(a);
    code = dispatch(r, out);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.report["exit_code"] = code;
    if (a.timing) r.report["wall_time_s"] = wall;
    if (r.want("json")) write_json(r.out / "run_report.json", r.report);
    err << a.command << ": " << wall << " s\n";
  } catch (const SupportError& e) {
    err << "SupportError: " << e.what() << "\n";
    code = Invalid;
  } catch (const DegenerateError& e) {
    err << "DegenerateError: " << e.what() << "\n";
    code = Invalid;
  } catch (const AssumptionError& e) {
    err << "AssumptionError: " << e.what() << "\n";
    code = Invalid;
  } catch (const NotThresholdError& e) {
    err << "NotThresholdError: " << e.what() << "\n";
    code = Invalid;
  } catch (const NonFiniteError& e) {
    err << "NonFiniteError: " << e.what() << "\n";
    code = Invalid;
  } catch (const SchemaError& e) {
    err << "SchemaError: " << e.what() << "\n";
    code = Config;
  } catch (const MemoryError& e) {
    err << "MemoryError: " << e.what() << "\n";
    code = Config;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = Failed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = Failed;
  }
  return code;
}

}  // namespace dynmech::cli
