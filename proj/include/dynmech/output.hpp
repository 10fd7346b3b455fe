#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ic.hpp"
#include "montecarlo.hpp"
#include "optimize.hpp"
#include "synth.hpp"
#include "validate.hpp"
#include "value.hpp"

namespace dynmech {

using json = nlohmann::json;

inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(15) << v;
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (std::size_t k = 0; k < header.size(); ++k) os_ << (k ? "," : "") << header[k];
    os_ << "\n";
  }
  void row(const std::vector<double>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) os_ << (k ? "," : "") << fmt_real(v[k]);
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

inline std::string values_csv(const Environment& env, const Mechanism& mech, const ValueSolution& sol, int t) {
  const bool mem = mech.memory(t);
  std::vector<std::string> h = {"node", "theta", "V", "J_stop", "C", "L", "mu", "mu_bar", "stop"};
  if (mem) h.insert(h.begin(), "prev");
  CsvWriter w(h);
  const PeriodGrid& g = env.grid(t);
  const PeriodValues& pv = sol.at(t);
  for (std::size_t m = 0; m < pv.V.size(); ++m)
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::vector<double> r = {static_cast<double>(i), g.x[i], pv.V[m][i], pv.J[m][i], pv.C[m][i],
                               pv.L[m][i], pv.mu[m][i], pv.mu_bar[m][i], static_cast<double>(pv.stop[m][i])};
      if (mem) r.insert(r.begin(), env.grid(t - 1).x[m]);
      w.row(r);
    }
  return w.str();
}

inline std::string potentials_csv(const Environment& env, const Synthesis& s, int t) {
  const bool mem = s.mech.memory(t);
  std::vector<std::string> h = {"node", "theta"};
  if (mem) h.insert(h.begin(), "prev");
  for (int tau = t; tau <= env.T; ++tau) h.push_back("gamma_h" + std::to_string(tau));
  for (const char* c : {"beta_stop", "beta_continue", "horizon", "phi", "xi"}) h.push_back(c);
  CsvWriter w(h);
  const PeriodGrid& g = env.grid(t);
  std::vector<Table> gam;
  for (int tau = t; tau <= env.T; ++tau) gam.push_back(s.envelope.gamma(t, tau));
  const PotentialTable& p = s.potentials;
  for (std::size_t m = 0; m < p.S(t).size(); ++m) {
    Memo memo = s.mech.memo(env, t, m);
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::vector<double> r = {static_cast<double>(i), g.x[i]};
      if (mem) r.insert(r.begin(), env.grid(t - 1).x[m]);
      for (const Table& gt : gam) r.push_back(gt[m][i]);
      r.push_back(p.S(t)[m][i]);
      r.push_back(p.Sbar(t)[m][i]);
      r.push_back(p.horizon[t - 1][m][i]);
      r.push_back(s.mech.phi(env, t, g.x[i], memo));
      r.push_back(s.mech.xi(env, t, g.x[i], memo));
      w.row(r);
    }
  }
  return w.str();
}

inline std::string heat_csv(const Environment& env, const ICReport& r, int t) {
  CsvWriter w({"theta", "theta_hat", "gap"});
  const PeriodGrid& g = env.grid(t);
  const Table& h = r.heat.at(t - 1);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t k = 0; k < g.size(); ++k) w.row({g.x[i], g.x[k], h[i][k]});
  return w.str();
}

inline json to_json(const ValidationReport& r) {
  return {{"name", r.name}, {"pass", r.pass}, {"worst", r.worst}, {"where", r.where}, {"violations", r.violations}};
}

inline json to_json(const ICEntry& e) {
  return {{"period", e.period}, {"branch", e.branch}, {"gap", e.gap}, {"theta", e.theta}, {"theta_hat", e.theta_hat}};
}

inline json to_json(const ICReport& r) {
  json per = json::array();
  for (const auto& p : r.periods) per.push_back({to_json(p.stop), to_json(p.cont), to_json(p.raw)});
  json v = json::array();
  for (const auto& e : r.violations) v.push_back(to_json(e));
  return {{"tolerance", r.tol},        {"pass", r.pass},         {"worst_gap", r.worst},
          {"raw_pass", r.pass_raw},    {"raw_worst_gap", r.worst_raw}, {"verdicts_differ", r.verdicts_differ},
          {"periods", per},            {"violations", v}};
}

inline json to_json(const MCStats& s) {
  auto m = [](const Moments& x) { return json{{"mean", x.mean}, {"stderr", x.stderr_}}; };
  return {{"paths", s.paths}, {"seed", s.seed}, {"agent", m(s.agent)}, {"principal", m(s.principal)}, {"tau", m(s.tau)}};
}

inline json to_json(const OptimizerResult& r, const std::vector<std::string>& names) {
  json p = json::object();
  for (std::size_t k = 0; k < r.params.size(); ++k) p[k < names.size() ? names[k] : std::to_string(k)] = r.params[k];
  return {{"params", p},
          {"value", r.value},
          {"grad_norm", r.grad_norm},
          {"restart_values", r.restart_values},
          {"evaluations", r.evaluations}};
}

}  // namespace dynmech
