// Acceptance run: one line per criterion, non-zero exit if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"

using namespace dynmech;

namespace {

struct Line {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

const std::string kScenario = std::string(DYNMECH_SCENARIOS) + "/seller_buyer_T2.json";

Environment scenario_env(std::size_t nodes) {
  Scenario s = load_scenario(kScenario);
  s.env.nodes = nodes;
  return build_environment(s.env);
}

Mechanism scenario_alloc(const Environment& env) { return scenario_mechanism(load_scenario(kScenario), env); }

OptimizerConfig scenario_optimizer() {
  Scenario s = load_scenario(kScenario);
  OptimizerConfig c;
  c.seed = s.solver.optimizer_seed;
  c.starts = s.solver.optimizer_starts;
  return c;
}

Line horizon_two() {
  auto t0 = std::chrono::steady_clock::now();
  Environment env = scenario_env(201);
  AllocationOptimum a = optimize_allocation(env, affine_family(2, true), {0.0}, scenario_optimizer());
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ref[] = {10.0 / 3.0, 4.0 / 3.0, 1.0, 0.5, 0.5};
  double err = 0.0;
  for (int k = 0; k < 5; ++k) err = std::max(err, std::abs(a.opt.params[k] - ref[k]));
  return {err <= 2e-2 && secs <= 120.0,
          "max |param - closed form| = " + num(err) + " (tol 2e-2), " + num(secs) + " s (limit 120 s)"};
}

Line horizon_one() {
  Environment env = scenario_env(201);
  AllocationOptimum a = optimize_allocation(env, affine_family(2, true), {1.0}, scenario_optimizer());
  double err = std::max(std::abs(a.opt.params[0] - 2.0), std::abs(a.opt.params[1]));
  return {err <= 2e-2, "slope " + num(a.opt.params[0]) + ", intercept " + num(a.opt.params[1]) +
                           ", max error " + num(err) + " (tol 2e-2)"};
}

Line passage() {
  Environment env = scenario_env(201);
  Mechanism m = scenario_alloc(env);
  double t0 = mean_first_passage(env, m, {0.0});
  double t1 = mean_first_passage(env, m, {1.0});
  double tq = mean_first_passage(env, m, {0.25});
  MCStats mc = monte_carlo(env, m, StoppingPolicy::threshold(env, {0.25}), 100000, 20240601);
  bool ok = std::abs(t0 - 2.0) <= 1e-12 && std::abs(t1 - 1.0) <= 1e-12 && std::abs(tq - 1.75) <= 1e-9 &&
            std::abs(mc.tau.mean - 1.75) <= 0.01;
  return {ok, "eta 0 -> 2 + " + num(t0 - 2.0) + ", eta 1 -> 1 + " + num(t1 - 1.0) + ", eta 0.25 -> " + num(tq) + " (|err| " +
                  num(std::abs(tq - 1.75)) + "), Monte Carlo " + num(mc.tau.mean)};
}

Line synthesized_ic() {
  double gap[2];
  const std::size_t sizes[2] = {201, 801};
  for (int k = 0; k < 2; ++k) {
    Environment env = scenario_env(sizes[k]);
    Synthesis s = synthesize(env, scenario_alloc(env), fixtures::zero_anchors(0.0));
    ValueSolution sol = solve_value(env, s.mech);
    ICReport r = one_shot_check(env, s.mech, sol);
    gap[k] = r.pass ? r.worst : std::max(r.worst, 1.0);
  }
  return {gap[0] <= 1e-3 && gap[1] <= 2.5e-4,
          "worst gap " + num(gap[0]) + " at 201 nodes (tol 1e-3), " + num(gap[1]) + " at 801 nodes (tol 2.5e-4)"};
}

Line oracle_agreement() {
  std::mt19937_64 g(501);
  int agree = 0, fails = 0;
  for (int k = 0; k < 50; ++k) {
    int T = 1 + static_cast<int>(g() % 3);
    std::size_t n = 3 + g() % 7;
    auto kind = static_cast<fixtures::Payments>(g() % 4);
    auto in = fixtures::random_instance(g, T, n, kind);
    ValueSolution sol = solve_value(in.env, in.mech);
    ICReport ic = one_shot_check(in.env, in.mech, sol);
    OracleReport o = brute_force_deviation_oracle(in.env, in.mech, sol, ic.tol);
    if (ic.pass_raw == !o.profitable) ++agree;
    if (!ic.pass_raw) ++fails;
  }
  return {agree == 50, std::to_string(agree) + "/50 verdicts agree (" + std::to_string(fails) + " non-IC instances)"};
}

Line telescoping() {
  Environment env = scenario_env(201);
  Synthesis s = synthesize(env, scenario_alloc(env), fixtures::zero_anchors(0.0));
  double worst = payoff_representation_check(env, s.mech, solve_value(env, s.mech)).worst;
  std::mt19937_64 g(602);
  double worst_rand = 0.0;
  for (int k = 0; k < 20; ++k) {
    int T = 1 + static_cast<int>(g() % 3);
    auto in = fixtures::random_instance(g, T, 5 + g() % 20, static_cast<fixtures::Payments>(g() % 4));
    worst_rand = std::max(worst_rand, payoff_representation_check(in.env, in.mech, solve_value(in.env, in.mech)).worst);
  }
  return {worst <= 1e-6 && worst_rand <= 1e-6,
          "bundled scenario gap " + num(worst) + ", 20 random instances gap " + num(worst_rand) + " (tol 1e-6)"};
}

Line envelope() {
  Environment env = scenario_env(201);
  Synthesis s = synthesize(env, scenario_alloc(env), fixtures::zero_anchors(0.0));
  double worst = 0.0;
  for (int tau = 1; tau <= env.T; ++tau) {
    auto U = horizon_payoff(env, s.mech, tau);
    for (int t = 1; t <= tau; ++t) {
      Table gam = s.envelope.gamma(t, tau);
      const PeriodGrid& g = env.grid(t);
      for (std::size_t m = 0; m < gam.size(); ++m)
        for (std::size_t i = 1; i + 1 < g.size(); ++i) {
          double fd = (U[t - 1][m][i + 1] - U[t - 1][m][i - 1]) / (g.x[i + 1] - g.x[i - 1]);
          worst = std::max(worst, std::abs(fd - gam[m][i]));
        }
    }
  }
  return {worst <= 1e-4, "max |gamma - central difference| = " + num(worst) + " (tol 1e-4)"};
}

Line revenue() {
  Environment env = scenario_env(201);
  SynthesisOptions a = fixtures::zero_anchors(0.0), b = fixtures::zero_anchors(0.0);
  b.anchors = {0.5, 1.0};
  EquivalenceReport r = revenue_equivalence(env, scenario_alloc(env), a, b);
  std::string cs;
  for (double c : r.C) cs += " " + num(c);
  return {r.state_constant && r.rho_zero_at_T,
          "worst state spread " + num(r.worst_spread) + " (tol 1e-6), C by horizon" + cs + ", rho difference at T " +
              num(r.rho_diff.back())};
}

Line bottom_surplus() {
  Environment env = scenario_env(201);
  Synthesis s = synthesize(env, scenario_alloc(env), fixtures::zero_anchors(0.0));
  double v = solve_value(env, s.mech).at(1).V[0][0];
  return {std::abs(v) <= 1e-3, "V1(bottom) = " + num(v) + " (tol 1e-3)"};
}

Line regular_set() {
  Environment env = scenario_env(201);
  Mechanism alloc = scenario_alloc(env);
  Synthesis s = synthesize(env, alloc, fixtures::zero_anchors(0.0));
  const PeriodGrid& g = env.grid(1);
  int members = 0;
  double worst = 0.0;
  for (int k = 0; k <= 20; ++k) {
    double eta = g.lo + (g.hi - g.lo) * k / 20.0;
    auto rho = construct_rho(env, s.mech, s.potentials, {eta});
    MembershipResult r = regular_set_membership(env, s.mech, s.potentials, rho);
    if (r.member && std::abs(r.eta[0] - eta) <= g.step()) ++members;
    if (r.member) worst = std::max(worst, std::abs(r.eta[0] - eta));
  }
  auto rho = construct_rho(env, s.mech, s.potentials, {g.hi});
  MembershipResult probe = regular_set_membership(env, s.mech, s.potentials, rho);
  rho[0] += 0.1;
  MembershipResult off = regular_set_membership(env, s.mech, s.potentials, rho);
  bool exceeded = rho[0] > off.row_max[0];
  // A T=3 instance for an interior period.
  std::mt19937_64 gen(1003);
  auto in = fixtures::random_instance(gen, 3, 21, fixtures::Payments::Zero);
  Synthesis s3 = synthesize(in.env, in.mech, {});
  auto r3 = construct_rho(in.env, s3.mech, s3.potentials, {in.env.grid(1).hi, in.env.grid(2).hi});
  r3[1] += 0.1;
  MembershipResult off3 = regular_set_membership(in.env, s3.mech, s3.potentials, r3);
  bool ok = members == 21 && probe.member && !off.member && exceeded && !off3.member && off3.failed_period == 2;
  return {ok, std::to_string(members) + "/21 sweep points MEMBER, worst |eta error| " + num(worst) + " (cell " +
                  num(g.step()) + "); +0.1 perturbation: " + (off.member ? "MEMBER" : "NOT-MEMBER") + " (T=2), " +
                  (off3.member ? "MEMBER" : "NOT-MEMBER at period " + std::to_string(off3.failed_period)) + " (T=3)"};
}

Line structure() {
  std::mt19937_64 g(1104);
  int ok = 0;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    int T = 2 + static_cast<int>(g() % 2);
    auto kind = g() % 2 ? fixtures::Payments::Zero : fixtures::Payments::Monotone;
    auto in = fixtures::random_instance(g, T, 5 + g() % 37, kind);
    ValueSolution sol = solve_value(in.env, in.mech);
    bool closed = true;
    for (const auto& p : sol.p) closed = closed && p.down_closed;
    SingleCrossingReport sc = check_single_crossing(in.env, in.mech, sol);
    double Lw = 0.0;
    for (int t = 1; t < T; ++t)
      for (const auto& row : sol.at(t).L)
        for (std::size_t i = 0; i + 1 < row.size(); ++i) Lw = std::max(Lw, row[i] - row[i + 1]);
    double id = continuing_values(in.env, in.mech, sol).identity_gap;
    double shift = 0.0;
    for (int t = 1; t < T; ++t) {
      Mechanism m2 = in.mech;
      m2.pay.rho[t - 1] += 0.25;
      ValueSolution s2 = solve_value(in.env, m2);
      for (std::size_t m = 0; m < sol.at(t).mu.size(); ++m)
        for (std::size_t i = 0; i < sol.at(t).mu[m].size(); ++i) {
          shift = std::max(shift, std::abs(s2.at(t).mu_bar[m][i] - sol.at(t).mu_bar[m][i]));
          shift = std::max(shift, std::abs(s2.at(t).mu[m][i] - (sol.at(t).mu[m][i] - 0.25)));
        }
    }
    worst = std::max({worst, Lw, id, shift});
    if (closed && sc.chi.pass && sc.mu_bar.pass && Lw <= 1e-9 && id <= 1e-9 && shift <= 1e-9) ++ok;
  }
  return {ok == 50, std::to_string(ok) + "/50 instances satisfy all invariants (worst residual " + num(worst) +
                        ", tol 1e-9)"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Line()>> criteria[] = {
      {"optimizer recovers the horizon-2 allocation", horizon_two},
      {"optimizer recovers the horizon-1 allocation", horizon_one},
      {"mean first passage time, exact and Monte Carlo", passage},
      {"synthesized mechanism is incentive compatible", synthesized_ic},
      {"one-shot check agrees with the deviation oracle", oracle_agreement},
      {"marginal-value telescoping identity", telescoping},
      {"envelope derivative matches finite differences", envelope},
      {"revenue equivalence across anchors", revenue},
      {"bottom state earns zero surplus", bottom_surplus},
      {"regular-set round trip", regular_set},
      {"structure invariants battery", structure},
  };
  int failed = 0, k = 0;
  for (const auto& [name, run] : criteria) {
    ++k;
    Line l;
    try {
      l = run();
    } catch (const std::exception& e) {
      l = {false, std::string("threw: ") + e.what()};
    }
    if (!l.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", l.pass ? "PASS" : "FAIL", k, name, l.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria pass\n", k - failed, k);
  return failed == 0 ? 0 : 1;
}
