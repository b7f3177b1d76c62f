#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "jumpcalc/engine.hpp"
#include "jumpcalc/models.hpp"

using namespace jumpcalc;

namespace {

ProcessSpec decay_flow() {
  ProcessSpec::Init init;
  init.name = "decay";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [](StateView) { return 0.0; };
  init.flow = [](StateView s, MutStateView out) { out[0] = -s[0]; };
  init.kernel = JumpKernel::none();
  return ProcessSpec(std::move(init));
}

}  // namespace

TEST_CASE("SimConfig resolution and validation") {
  SimConfig c;
  c.horizon = 10.0;
  const auto r = c.resolved();
  CHECK(r.dt_grid == doctest::Approx(1e-3));
  CHECK(r.ode_step == doctest::Approx(2.5e-4));

  SimConfig bad = r;
  bad.ode_step = 2.0 * bad.dt_grid;
  CHECK_THROWS_AS(bad.resolved(), std::invalid_argument);
  bad = r;
  bad.horizon = -1.0;
  CHECK_THROWS_AS(bad.resolved(), std::invalid_argument);
}

TEST_CASE("event-count law: Poisson mean and variance within 4 SE") {
  const auto spec = models::poisson_counter(1.0);
  SimConfig cfg;
  cfg.horizon = 10.0;
  cfg.dt_grid = 10.0;
  cfg.seed = 12345;
  const std::uint64_t n = 100000;
  double sum = 0.0, sumsq = 0.0;
  Engine engine(spec);
  engine.set_accumulate_moments(false);
  const double x0 = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    cfg.path_index = i;
    const auto res = engine.run(StateView(&x0, 1), cfg);
    const double k = static_cast<double>(res.n_events);
    sum += k;
    sumsq += k * k;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // Poisson(10): mean 10 (SE ~ 0.01), variance 10 (SE ~ sqrt(210/n))
  CHECK(std::abs(mean - 10.0) <= 4.0 * std::sqrt(10.0 / n));
  CHECK(std::abs(var - 10.0) <= 4.0 * std::sqrt(210.0 / n));
}

TEST_CASE("pure flow solves the ODE to integrator accuracy") {
  const auto spec = decay_flow();
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.seed = 1;
  const double x0 = 1.0;
  const auto path = simulate(spec, StateView(&x0, 1), cfg);
  CHECK(path.events.empty());
  CHECK(path.state.back() == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(path.terminal == Terminal::Horizon);
}

TEST_CASE("halving ode_step improves a flow endpoint like a 4th-order method") {
  const auto spec = decay_flow();
  const double x0 = 1.0;
  auto run_with = [&](double h) {
    SimConfig cfg;
    cfg.horizon = 1.0;
    cfg.dt_grid = 1.0;
    cfg.ode_step = h;
    cfg.seed = 1;
    return simulate(spec, StateView(&x0, 1), cfg).state.back();
  };
  const double exact = std::exp(-1.0);
  const double e1 = std::abs(run_with(0.1) - exact);
  const double e2 = std::abs(run_with(0.05) - exact);
  const double e3 = std::abs(run_with(0.025) - exact);
  CHECK(e1 / e2 > 10.0);
  CHECK(e1 / e2 < 24.0);
  CHECK(e2 / e3 > 10.0);
  CHECK(e2 / e3 < 24.0);
}

TEST_CASE("reproducibility: identical inputs give bit-identical paths") {
  const auto spec = models::sis({100, 2.0, true});
  SimConfig cfg;
  cfg.horizon = 5.0;
  cfg.dt_grid = 0.1;
  cfg.seed = 777;
  cfg.path_index = 3;
  const double x0 = 0.5;
  const auto a = simulate(spec, StateView(&x0, 1), cfg);
  const auto b = simulate(spec, StateView(&x0, 1), cfg);
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.events.size() == b.events.size());
  CHECK(a.t == b.t);
  CHECK(a.state == b.state);
  CHECK(a.drift_integral == b.drift_integral);
  CHECK(a.qvar_integral == b.qvar_integral);
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].t == b.events[i].t);
    CHECK(a.events[i].u == b.events[i].u);
  }

  cfg.path_index = 4;
  const auto c = simulate(spec, StateView(&x0, 1), cfg);
  CHECK(c.events.size() != a.events.size());  // different stream
}

TEST_CASE("grid refinement does not move events (jump-only spec)") {
  const auto spec = models::sis({100, 2.0, true});
  const double x0 = 0.5;
  SimConfig coarse;
  coarse.horizon = 5.0;
  coarse.dt_grid = 0.5;
  coarse.ode_step = 0.01;
  coarse.seed = 99;
  SimConfig fine = coarse;
  fine.dt_grid = 0.25;
  const auto a = simulate(spec, StateView(&x0, 1), coarse);
  const auto b = simulate(spec, StateView(&x0, 1), fine);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].t == b.events[i].t);  // closed-form inversion: exact
    CHECK(a.events[i].u == b.events[i].u);
  }
}

TEST_CASE("grid refinement: clocked spec events stay within tolerance") {
  // a clocked spec goes through the bisection path; recording must not
  // change the event sequence beyond integration-partition noise
  const auto dev = models::sis_deviation_process({200, 0.9, true}, 0.1, true);
  const double x0[2] = {0.1, 0.1};
  SimConfig coarse;
  coarse.horizon = 0.5;
  coarse.dt_grid = 0.05;
  coarse.ode_step = 0.005;
  coarse.seed = 5;
  SimConfig fine = coarse;
  fine.dt_grid = 0.025;
  const auto a = simulate(dev, StateView(x0, 2), coarse);
  const auto b = simulate(dev, StateView(x0, 2), fine);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].t == doctest::Approx(b.events[i].t).epsilon(1e-6));
    CHECK(a.events[i].u == b.events[i].u);
  }
}

TEST_CASE("compensated path: Poisson counter and birth-death identities") {
  SimConfig cfg;
  cfg.horizon = 10.0;
  cfg.dt_grid = 0.5;
  cfg.seed = 31;
  const double x0 = 0.0;

  const auto poisson = models::poisson_counter(1.0);
  const auto path = simulate(poisson, StateView(&x0, 1), cfg);
  const auto stats = compensated_path(poisson, path);
  // M_t = N_t - t at every sample
  std::size_t events_so_far = 0;
  for (std::size_t i = 0; i < stats.t.size(); ++i) {
    if (stats.flag[i] == static_cast<std::uint8_t>(SampleFlag::EventPost))
      ++events_so_far;
    const double expect = static_cast<double>(events_so_far) - stats.t[i];
    CHECK(stats.martingale[i] == doctest::Approx(expect).epsilon(1e-9));
  }

  const auto bd = models::birth_death(2.0, 1.0);
  const auto bpath = simulate(bd, StateView(&x0, 1), cfg);
  const auto bstats = compensated_path(bd, bpath);
  for (std::size_t i = 0; i < bstats.t.size(); ++i) {
    CHECK(bstats.qvar[i] ==
          doctest::Approx(3.0 * bstats.t[i]).epsilon(1e-9));
    // qvar is nondecreasing
    if (i > 0) CHECK(bstats.qvar[i] >= bstats.qvar[i - 1]);
  }

  // pure flow: M identically zero
  const auto flow = decay_flow();
  const double one = 1.0;
  const auto fpath = simulate(flow, StateView(&one, 1), cfg);
  const auto fstats = compensated_path(flow, fpath);
  for (double m : fstats.martingale) CHECK(std::abs(m) < 1e-10);

  CHECK_THROWS_AS(compensated_path(bd, path), std::invalid_argument);
}

TEST_CASE("first passage") {
  // pure unit flow: level 2 reached at t = 2
  ProcessSpec::Init init;
  init.name = "unit_flow";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [](StateView) { return 0.0; };
  init.flow = [](StateView, MutStateView out) { out[0] = 1.0; };
  init.kernel = JumpKernel::none();
  const ProcessSpec unit{std::move(init)};
  SimConfig cfg;
  cfg.horizon = 5.0;
  cfg.dt_grid = 0.1;
  cfg.seed = 2;
  const double x0 = 0.0;
  const auto [hit, path] = first_passage(unit, StateView(&x0, 1), cfg, 2.0);
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(path.terminal == Terminal::StoppedByPredicate);

  // level at or below the start: immediate
  const double high = 3.0;
  const auto [hit0, p0] = first_passage(unit, StateView(&high, 1), cfg, 2.0);
  REQUIRE(hit0.has_value());
  CHECK(*hit0 == 0.0);

  // Poisson counter to level 3: Gamma(3,1) passage times, mean 3
  const auto poisson = models::poisson_counter(1.0);
  SimConfig pc;
  pc.horizon = 50.0;
  pc.dt_grid = 50.0;
  pc.seed = 8;
  const std::uint64_t n = 20000;
  double sum = 0.0;
  std::uint64_t hits = 0;
  const double zero = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    pc.path_index = i;
    const auto [h, _] = first_passage(poisson, StateView(&zero, 1), pc, 3.0);
    if (h) {
      sum += *h;
      ++hits;
    }
  }
  CHECK(hits == n);  // horizon 50 censors nothing in practice
  const double mean = sum / n;
  CHECK(std::abs(mean - 3.0) <= 4.0 * std::sqrt(3.0 / n));
}

TEST_CASE("truncation flags") {
  const auto yule = models::linear_birth(1.0);
  const double x0 = 1.0;
  SimConfig cfg;
  cfg.horizon = 50.0;
  cfg.dt_grid = 1.0;
  cfg.seed = 4;
  cfg.q_max = 50.0;
  auto path = simulate(yule, StateView(&x0, 1), cfg);
  CHECK(path.terminal == Terminal::TruncatedRate);

  cfg.q_max = 1e12;
  cfg.x_max = 30.0;
  path = simulate(yule, StateView(&x0, 1), cfg);
  CHECK(path.terminal == Terminal::TruncatedNorm);
}

TEST_CASE("jump bound contract") {
  ProcessSpec::Init init;
  init.name = "liar";
  init.dimension = 1;
  init.jump_bound = 1.0;  // claimed
  init.rate = [](StateView) { return 1.0; };
  init.kernel = JumpKernel::discrete(
      {{[](StateView) { return 1.0; }, {2.0}, nullptr}});  // actual jump: 2
  init.rate_constant_between_jumps = true;
  const ProcessSpec liar{std::move(init)};
  const double x0 = 0.0;
  SimConfig cfg;
  cfg.horizon = 10.0;
  cfg.dt_grid = 1.0;
  cfg.seed = 3;
  CHECK_THROWS_AS(simulate(liar, StateView(&x0, 1), cfg), ContractViolation);

  cfg.debug_checks = false;
  Engine engine(liar);
  const auto res = engine.run(StateView(&x0, 1), cfg);
  CHECK(res.jump_bound_violations > 0);
  CHECK(res.jump_bound_violations == res.n_events);
}

TEST_CASE("stop predicate ends the run at a grid or event sample") {
  const auto spec = decay_flow();
  const double x0 = 1.0;
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt_grid = 0.1;
  cfg.seed = 6;
  StopCondition stop;
  stop.predicate = [](double t, StateView) { return t >= 0.35; };
  const auto path = simulate(spec, StateView(&x0, 1), cfg, &stop);
  CHECK(path.terminal == Terminal::StoppedByPredicate);
  CHECK(path.t.back() == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("thinning cross-check agrees with hazard inversion in law") {
  const auto bd = models::birth_death(2.0, 1.0);
  const double x0 = 0.0;
  SimConfig cfg;
  cfg.horizon = 5.0;
  cfg.dt_grid = 5.0;
  cfg.seed = 2024;
  const std::uint64_t n = 5000;
  double mean_a = 0.0, mean_b = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    cfg.path_index = i;
    const auto pa = simulate(bd, StateView(&x0, 1), cfg);
    const auto pb = simulate_thinning(bd, StateView(&x0, 1), cfg, 3.0);
    const double xa = pa.state.back(), xb = pb.state.back();
    mean_a += xa;
    mean_b += xb;
    var_a += xa * xa;
    var_b += xb * xb;
  }
  mean_a /= n;
  mean_b /= n;
  var_a = var_a / n - mean_a * mean_a;
  var_b = var_b / n - mean_b * mean_b;
  // E X_T = t, Var X_T = 3t at t = 5
  const double se = std::sqrt(15.0 / n);
  CHECK(std::abs(mean_a - 5.0) <= 4.0 * se);
  CHECK(std::abs(mean_b - 5.0) <= 4.0 * se);
  CHECK(std::abs(mean_a - mean_b) <= 4.0 * se * std::sqrt(2.0));

  // bound violation is a contract error
  const auto yule = models::linear_birth(1.0);
  const double start = 3.0;
  CHECK_THROWS_AS(simulate_thinning(yule, StateView(&start, 1), cfg, 5.0),
                  ContractViolation);
}

TEST_CASE("non-finite states raise a simulation error") {
  ProcessSpec::Init init;
  init.name = "blowup";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [](StateView) { return 0.0; };
  init.flow = [](StateView s, MutStateView out) {
    out[0] = s[0] * s[0] * 1e150;  // finite-time blowup to inf
  };
  init.kernel = JumpKernel::none();
  const ProcessSpec spec{std::move(init)};
  const double x0 = 1.0;
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt_grid = 0.01;
  cfg.x_max = 1e300;  // let the state blow past the cap within one step
  cfg.seed = 1;
  CHECK_THROWS_AS(simulate(spec, StateView(&x0, 1), cfg), SimulationError);
}
