#include <catch_amalgamated.hpp>

#include "fixtures.hpp"

using namespace dynmech;
using Catch::Approx;

TEST_CASE("closed-form allocation rule") {
  Environment env = fixtures::seller_buyer();
  Mechanism m = with_zero_payments(fixtures::alpha_star());
  auto [a1, phi1, xi1] = eval_mechanism(env, m, 1, 0.5);
  CHECK(a1 == Approx(3.0).margin(1e-15));
  CHECK(phi1 == 0.0);
  CHECK(xi1 == 0.0);
  auto [a2, phi2, xi2] = eval_mechanism(env, m, 2, 0.5, Memo::at(0.0));
  CHECK(a2 == Approx(1.0).margin(1e-15));
}

TEST_CASE("tabular rule is exact at nodes and linear between them") {
  PeriodGrid g = make_grid(1, 0.0, 1.0, 5);
  StateFn f = StateFn::tabular({{0.1, 0.7, 0.3, 0.9, 0.2}});
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(f.eval(g, g.x[i], Memo::none()) == f.table[0][i]);
  CHECK(f.eval(g, 0.125, Memo::none()) == Approx(0.4));
  CHECK(f.eval(g, -1.0, Memo::none()) == 0.1);
  CHECK(f.eval(g, 2.0, Memo::none()) == 0.2);
}

TEST_CASE("tabular rule with memory") {
  PeriodGrid g = make_grid(2, 0.0, 1.0, 3);
  StateFn f = StateFn::tabular({{0.0, 1.0, 2.0}, {10.0, 11.0, 12.0}}, true, {0.0, 1.0});
  CHECK(f.eval(g, 0.5, Memo::node(1, 1.0)) == 11.0);
  CHECK(f.eval(g, 0.5, Memo::at(0.25)) == Approx(3.5));
  CHECK_THROWS_AS(f.eval(g, 0.5, Memo::none()), MemoryError);
  StateFn bare = StateFn::tabular({{0.0, 1.0, 2.0}, {10.0, 11.0, 12.0}}, true);
  CHECK_THROWS_AS(bare.eval(g, 0.5, Memo::at(0.25)), MemoryError);
}

TEST_CASE("allocation is clamped to its declared range") {
  Environment env = fixtures::seller_buyer(11);
  Mechanism m = with_zero_payments({StateFn::constant(9.0), StateFn::constant(-3.0)});
  CHECK(m.allocation(env, 1, 0.5, Memo::none()) == 6.0);
  CHECK(m.allocation(env, 2, 0.5, Memo::none()) == 0.0);
}

TEST_CASE("report composition") {
  Environment env = fixtures::seller_buyer(11);
  CHECK(compose_report(env, ReportingStrategy::truthful(), 1, 0.37) == 0.37);
  auto dev = ReportingStrategy::one_shot(1, [](double) { return 0.3; });
  CHECK(compose_report(env, dev, 1, 0.9) == 0.3);
  CHECK(compose_report(env, dev, 2, 0.9) == 0.9);
  // misreports are clamped into the state interval
  auto far = ReportingStrategy::one_shot(1, [](double) { return 7.0; });
  CHECK(compose_report(env, far, 1, 0.2) == 1.0);
  auto each = ReportingStrategy::arbitrary({[](double x) { return x / 2; }, {}});
  CHECK(compose_report(env, each, 1, 0.8) == 0.4);
  CHECK(compose_report(env, each, 2, 0.8) == 0.8);
}

TEST_CASE("mechanism contract") {
  Environment env = fixtures::seller_buyer(11);
  Mechanism m = with_zero_payments(fixtures::alpha_star());
  CHECK_NOTHROW(m.check(env));
  CHECK(m.memory(2));
  CHECK_FALSE(m.memory(1));
  CHECK(m.slices(env, 2) == 11);

  Mechanism bad = m;
  bad.pay.rho[1] = 0.5;
  CHECK_THROWS_AS(bad.check(env), AssumptionError);
  CHECK_THROWS_AS(solve_value(env, bad), AssumptionError);

  Mechanism early = m;
  early.alloc[0].memory = true;
  CHECK_THROWS_AS(early.check(env), MemoryError);

  Mechanism shortm = m;
  shortm.pay.xi.pop_back();
  CHECK_THROWS_AS(shortm.check(env), SchemaError);
}

TEST_CASE("threshold policies respect the state order") {
  Environment env = fixtures::seller_buyer(21);
  StoppingPolicy p = StoppingPolicy::threshold(env, {0.4});
  const PeriodGrid& g = env.grid(1);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i; j < g.size(); ++j)
      if (p.stops(env, 1, g.x[j])) CHECK(p.stops(env, 1, g.x[i]));
  CHECK(p.stops(env, 1, 0.4));
  CHECK_FALSE(p.stops(env, 1, 0.45));
  CHECK(p.stops(env, 2, 4.0));
  CHECK_THROWS_AS(StoppingPolicy::threshold(env, {0.1, 0.2, 0.3}), SchemaError);
}
