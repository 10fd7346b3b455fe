#include <catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"

using namespace dynmech;
using Catch::Approx;

namespace {

Synthesis endpoint(const Environment& env, double eta = 0.0) {
  return fixtures::synthesized(env, eta, PotentialRule::Endpoint);
}

// E[f(theta2) | theta1] by Simpson quadrature
// over the uniform next state under the closed-form first-period allocation.
double expect_next(double theta1, const std::function<double(double)>& f) {
  double a1 = 10.0 / 3.0 * theta1 + 4.0 / 3.0;
  double lo = 0.5 * theta1 + 0.5 * a1;
  const int n = 2000;
  double h = 1.0 / n, s = f(lo) + f(lo + 1.0);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("stop payoff") {
  Environment env = fixtures::seller_buyer();
  Synthesis s = endpoint(env);
  // (1 + 0.5) * 3 - 3 + 0
  CHECK(stop_payoff(env, s.mech, 1, 0.5) == Approx(1.5).margin(1e-12));

  Mechanism zero = with_zero_payments({StateFn::constant(2.0), StateFn::constant(2.0)});
  zero.pay.xi[0] = StateFn::polynomial(Poly2{{-2.0, 0, 0}, {-2.0, 1, 0}});
  zero.pay.rho[0] = 0.7;
  for (double th : {0.0, 0.3, 1.0}) CHECK(stop_payoff(env, zero, 1, th) == Approx(0.7).margin(1e-15));

  ValueSolution sol = solve_value(env, s.mech);
  const PeriodValues& last = sol.at(2);
  for (std::size_t m = 0; m < last.V.size(); ++m) CHECK(last.V[m] == last.J[m]);
}

TEST_CASE("value recursion on the closed-form mechanism") {
  Environment env = fixtures::seller_buyer();
  Synthesis s = endpoint(env);
  ValueSolution sol = solve_value(env, s.mech);
  const PeriodValues& p1 = sol.at(1);
  // bottom state: stop payoff 0 against continuation 48/36 - 121/36 + 73/36 = 0
  CHECK(p1.J[0][0] == Approx(0.0).margin(1e-12));
  CHECK(std::abs(p1.C[0][0]) <= 1e-3);
  CHECK(std::abs(p1.V[0][0]) <= 1e-3);
  CHECK(p1.stop[0][0] == 1);
  std::size_t h = env.grid(1).nearest(0.5);
  CHECK(p1.J[0][h] == Approx(1.5).margin(1e-12));
  CHECK(p1.C[0][h] == Approx(2.25).margin(1e-3));
  CHECK(p1.stop[0][h] == 0);

  // the closed-form integral behind the bottom-state tie
  double e = expect_next(0.0, [](double x) { return x * (x + 0.5); });
  CHECK(e == Approx(73.0 / 36.0).epsilon(1e-12));
  CHECK(s.mech.phi(env, 1, 0.0, Memo::none()) == Approx(-121.0 / 36.0).margin(1e-3));
}

TEST_CASE("one-period value is the stop payoff") {
  EnvironmentSpec sp = fixtures::seller_buyer_spec(21);
  sp.T = 1;
  sp.kernels.clear();
  sp.alloc_range.resize(1);
  sp.agent.u.resize(1);
  sp.principal.u.resize(1);
  Environment env = build_environment(sp);
  Mechanism m = with_zero_payments({StateFn::polynomial(Poly2{{2.0, 1, 0}})});
  m.pay.xi[0] = StateFn::constant(-0.4);
  ValueSolution sol = solve_value(env, m);
  CHECK(sol.at(1).V == sol.at(1).J);
  for (char c : sol.at(1).stop[0]) CHECK(c == 1);
  CHECK(check_single_crossing(env, m, sol).pass());
  CHECK(sol.mfpt == Approx(1.0).margin(1e-12));
}

TEST_CASE("marginal value") {
  EnvironmentSpec sp = fixtures::seller_buyer_spec(21);
  sp.agent.u[1] = Poly2{};
  Environment env = build_environment(sp);
  Mechanism m = with_zero_payments(fixtures::alpha_star());
  m.pay.phi[0] = StateFn::polynomial(Poly2{{0.3, 1, 0}});
  m.pay.xi[0] = m.pay.phi[0];
  ValueSolution sol = solve_value(env, m);
  for (std::size_t i = 0; i < 21; i += 5)
    for (std::size_t k = 0; k < 21; k += 4) CHECK(marginal_value(env, m, sol, 1, 0, i, k) == Approx(0.0).margin(1e-15));
  CHECK_THROWS_AS(marginal_value(env, m, sol, 2, 0, 0, 0), IndexError);

  Environment six = fixtures::seller_buyer();
  Synthesis s = endpoint(six);
  ValueSolution ss = solve_value(six, s.mech);
  CHECK(std::abs(marginal_value(six, s.mech, ss, 1, 0, 0, 0)) <= 1e-3);
  for (std::size_t i = 0; i + 1 < six.grid(1).size(); ++i) CHECK(ss.at(1).L[0][i] <= ss.at(1).L[0][i + 1] + 1e-9);
}

TEST_CASE("continuing values") {
  Environment env = fixtures::seller_buyer(101);
  Synthesis s = endpoint(env);
  ValueSolution sol = solve_value(env, s.mech);
  ContinuingValues cv = continuing_values(env, s.mech, sol);
  CHECK(cv.identity_gap <= 1e-12);
  CHECK(std::abs(cv.mu[0][0][0]) <= 1e-3);
  const PeriodValues& p1 = sol.at(1);
  for (std::size_t i = 0; i < p1.V[0].size(); ++i)
    if (p1.J[0][i] > p1.C[0][i]) CHECK(cv.mu[0][0][i] <= 0.0);

  Mechanism up = s.mech;
  up.pay.rho[0] += 1.0;
  ContinuingValues cu = continuing_values(env, up, solve_value(env, up));
  for (std::size_t i = 0; i < p1.V[0].size(); ++i) {
    CHECK(cu.mu[0][0][i] == Approx(cv.mu[0][0][i] - 1.0).margin(1e-12));
    CHECK(cu.mu_bar[0][0][i] == cv.mu_bar[0][0][i]);
  }
}

TEST_CASE("single crossing") {
  Environment env = fixtures::seller_buyer(51);
  Synthesis s = endpoint(env);
  CHECK(check_single_crossing(env, s.mech, solve_value(env, s.mech)).pass());

  Mechanism bad = s.mech;
  bad.pay.xi[1] = StateFn::polynomial(Poly2{{1000.0, 0, 0}, {-1000.0, 1, 0}});
  ValueSolution sol = solve_value(env, bad);
  SingleCrossingReport r = check_single_crossing(env, bad, sol);
  CHECK_FALSE(r.pass());
  CHECK(r.chi.where.rfind("t=1 ", 0) == 0);
  ValueOptions strict;
  strict.strict = true;
  CHECK_THROWS_AS(solve_value(env, bad, strict), AssumptionError);
}

TEST_CASE("threshold extraction") {
  Environment env = fixtures::seller_buyer(51);
  Synthesis s = endpoint(env);
  ValueSolution sol = solve_value(env, s.mech);
  auto eta = extract_threshold(env, sol);
  CHECK(eta[0] == 0.0);
  CHECK(eta[1] == env.grid(2).hi);

  Mechanism all = with_zero_payments(fixtures::alpha_star());
  for (int t = 1; t <= 2; ++t) {
    all.pay.xi[t - 1] = StateFn::constant(1e3);
    all.pay.phi[t - 1] = StateFn::constant(-1e3);
  }
  auto top = extract_threshold(env, solve_value(env, all));
  CHECK(top[0] == env.grid(1).hi);
  CHECK(top[1] == env.grid(2).hi);

  ValueSolution holed = sol;
  auto& st = holed.p[0].stop[0];
  std::fill(st.begin(), st.end(), 0);
  st[0] = st[5] = 1;
  CHECK_THROWS_AS(extract_threshold(env, holed), NotThresholdError);
}

TEST_CASE("payoff representation") {
  Environment env = fixtures::seller_buyer();
  Synthesis s = endpoint(env);
  RepresentationReport r = payoff_representation_check(env, s.mech, solve_value(env, s.mech));
  CHECK(r.gap_by_tau[0] == 0.0);
  CHECK(r.worst <= 1e-6);
  CHECK(r.pass);

  std::mt19937_64 g(31);
  for (int k = 0; k < 5; ++k) {
    auto in = fixtures::random_instance(g, 3, 13, fixtures::Payments::Random);
    for (int t = 1; t <= 3; ++t) {
      std::vector<double> col(in.env.grid(t).size());
      for (double& v : col) v = fixtures::uniform(g, 0.0, 3.0);
      in.mech.alloc[t - 1] = StateFn::tabular({col});
      in.mech.pay.phi[t - 1] = StateFn::tabular({col});
    }
    RepresentationReport q = payoff_representation_check(in.env, in.mech, solve_value(in.env, in.mech));
    CHECK(q.worst <= 1e-6);
  }
}

TEST_CASE("mean first passage") {
  Environment env = fixtures::seller_buyer();
  Mechanism m = with_zero_payments(fixtures::alpha_star());
  CHECK(mean_first_passage(env, m, {0.0}) == Approx(2.0).margin(1e-12));
  CHECK(mean_first_passage(env, m, {1.0}) == Approx(1.0).margin(1e-12));
  CHECK(mean_first_passage(env, m, {0.25}) == Approx(1.75).margin(1e-9));
  // 1 * F(0.5) + 2 * (1 - F(0.5)) with F(0.5) = 1/4 under the density 2 theta
  EnvironmentSpec sp = fixtures::seller_buyer_spec(201);
  sp.init.kind = InitialDensitySpec::Kind::Polynomial;
  sp.init.values = {0.0, 2.0};
  Environment tilt = build_environment(sp);
  CHECK(mean_first_passage(tilt, m, {0.5}) == Approx(2.0 - 0.25).margin(1e-9));
}

TEST_CASE("structure properties on random instances") {
  std::mt19937_64 g(32);
  for (int k = 0; k < 20; ++k) {
    int T = 2 + static_cast<int>(g() % 2);
    auto kind = k % 2 ? fixtures::Payments::Zero : fixtures::Payments::Monotone;
    auto in = fixtures::random_instance(g, T, 7 + g() % 20, kind);
    ValueSolution sol = solve_value(in.env, in.mech);
    SingleCrossingReport sc = check_single_crossing(in.env, in.mech, sol);
    REQUIRE(sc.pass());
    CHECK(sc.mu_bar.pass);
    for (int t = 1; t <= T; ++t) {
      const PeriodValues& pv = sol.at(t);
      for (std::size_t m = 0; m < pv.V.size(); ++m) {
        bool seen_continue = false;
        for (std::size_t i = 0; i < pv.V[m].size(); ++i) {
          // Bellman consistency and the sign of the continuing value
          if (t == T) CHECK(pv.V[m][i] == pv.J[m][i]);
          else CHECK(pv.V[m][i] == std::max(pv.J[m][i], pv.C[m][i]));
          if (t < T) CHECK((pv.stop[m][i] != 0) == (pv.mu[m][i] <= 1e-9));
          if (!pv.stop[m][i]) seen_continue = true;
          else CHECK_FALSE(seen_continue);
        }
      }
    }
    ContinuingValues cv = continuing_values(in.env, in.mech, sol);
    CHECK(cv.identity_gap <= 1e-9);
    Mechanism shifted = in.mech;
    shifted.pay.rho[0] += 0.25;
    ContinuingValues cs = continuing_values(in.env, shifted, solve_value(in.env, shifted));
    for (std::size_t i = 0; i < cv.mu[0][0].size(); ++i) {
      CHECK(std::abs(cs.mu_bar[0][0][i] - cv.mu_bar[0][0][i]) <= 1e-9);
      CHECK(std::abs(cs.mu[0][0][i] - (cv.mu[0][0][i] - 0.25)) <= 1e-9);
    }
  }
}

TEST_CASE("simulated payoff agrees with the quadrature value") {
  Environment env = fixtures::seller_buyer();
  Synthesis s = fixtures::synthesized(env);
  ValueSolution sol = solve_value(env, s.mech);
  MCStats mc = monte_carlo(env, s.mech, StoppingPolicy::threshold(env, extract_threshold(env, sol)), 100000, 77);
  CHECK(std::abs(mc.agent.mean - sol.ex_ante) <= 3.0 * mc.agent.stderr_);
  CHECK(std::abs(mc.tau.mean - sol.mfpt) <= 3.0 * mc.tau.stderr_ + 1e-12);
}

TEST_CASE("literal continuation branch drops the current flow") {
  Environment env = fixtures::seller_buyer(51);
  Synthesis s = endpoint(env);
  ValueOptions lit;
  lit.strict_literal = true;
  ValueSolution a = solve_value(env, s.mech), b = solve_value(env, s.mech, lit);
  const PeriodGrid& g = env.grid(1);
  for (std::size_t i = 0; i < g.size(); i += 10) {
    double alloc = s.mech.allocation(env, 1, g.x[i], Memo::none());
    double flow = env.disc(1) * (env.agent.value(1, g.x[i], alloc) + s.mech.phi(env, 1, g.x[i], Memo::none()));
    CHECK(a.at(1).C[0][i] - b.at(1).C[0][i] == Approx(flow).margin(1e-12));
  }
}
