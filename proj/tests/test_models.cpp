#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "jumpcalc/engine.hpp"
#include "jumpcalc/models.hpp"
#include "oracles.hpp"

using namespace jumpcalc;
using namespace jumpcalc::models;

TEST_CASE("constructors match hand-coded closed forms at random states") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const auto poisson = poisson_counter(1.7);
  const auto bd = birth_death(2.0, 1.0);
  const auto yule = linear_birth(0.8);
  const auto sis_r = sis({100, 2.0, true});
  const auto sis_raw = sis({100, 2.0, false});

  for (int i = 0; i < 100; ++i) {
    const double x = u01(rng);
    const double big_x = std::floor(u01(rng) * 100.0);

    CHECK(poisson.drift(StateView(&x, 1))[0] == 1.7);
    CHECK(poisson.diffusivity(StateView(&x, 1))[0] == 1.7);

    CHECK(bd.drift(StateView(&x, 1))[0] == 1.0);
    CHECK(bd.diffusivity(StateView(&x, 1))[0] == 3.0);

    CHECK(yule.drift(StateView(&big_x, 1))[0] ==
          doctest::Approx(0.8 * big_x).epsilon(1e-15));
    CHECK(yule.diffusivity(StateView(&big_x, 1))[0] ==
          doctest::Approx(0.8 * big_x).epsilon(1e-15));

    CHECK(sis_r.drift(StateView(&x, 1))[0] ==
          doctest::Approx(sis_drift(2.0, x)).epsilon(1e-13));
    CHECK(sis_r.diffusivity(StateView(&x, 1))[0] ==
          doctest::Approx(sis_diffusivity(100, 2.0, x)).epsilon(1e-13));

    CHECK(sis_raw.drift(StateView(&big_x, 1))[0] ==
          doctest::Approx(2.0 * big_x * (100.0 - big_x) / 100.0 - big_x)
              .epsilon(1e-13));
  }
}

TEST_CASE("drift/diffusivity equal brute-force kernel sums") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u01(0.01, 0.99);
  const std::vector<ProcessSpec> specs{
      poisson_counter(2.0), birth_death(1.5, 0.5), linear_birth(1.0),
      sis({64, 1.5, true})};
  for (const auto& spec : specs) {
    for (int i = 0; i < 100; ++i) {
      const double x = u01(rng);
      const auto brute = oracles::brute_force_moments(spec, StateView(&x, 1));
      CHECK(spec.drift(StateView(&x, 1))[0] == brute.drift[0]);
      CHECK(spec.diffusivity(StateView(&x, 1))[0] == brute.sigma2[0]);
    }
  }
}

TEST_CASE("SIS raw and rescaled variants are consistent") {
  // power-of-two n: the scaling is exact in floating point
  const std::uint64_t n = 128;
  const auto raw = sis({n, 1.75, false});
  const auto resc = sis({n, 1.75, true});
  for (std::uint64_t big_x = 0; big_x <= n; big_x += 7) {
    const double bx = static_cast<double>(big_x);
    const double x = bx / static_cast<double>(n);
    CHECK(resc.drift(StateView(&x, 1))[0] ==
          raw.drift(StateView(&bx, 1))[0] / static_cast<double>(n));
  }
  // general n: equal to rounding
  const auto raw100 = sis({100, 2.0, false});
  const auto resc100 = sis({100, 2.0, true});
  for (std::uint64_t big_x = 0; big_x <= 100; big_x += 9) {
    const double bx = static_cast<double>(big_x);
    const double x = bx / 100.0;
    CHECK(resc100.drift(StateView(&x, 1))[0] ==
          doctest::Approx(raw100.drift(StateView(&bx, 1))[0] / 100.0)
              .epsilon(1e-13));
  }
}

TEST_CASE("SIS facts: boundary drift, absorption, sigma2 bound") {
  const auto s = sis({100, 1.0, true});
  const double x0 = 0.0, x1 = 1.0;
  CHECK(s.drift(StateView(&x0, 1))[0] == 0.0);
  CHECK(s.drift(StateView(&x1, 1))[0] == -1.0);
  CHECK(s.rate(0.0, StateView(&x0, 1)) == 0.0);  // absorbing

  // simulating from extinction produces no events
  SimConfig cfg;
  cfg.horizon = 5.0;
  cfg.dt_grid = 1.0;
  cfg.seed = 9;
  const auto path = simulate(s, StateView(&x0, 1), cfg);
  CHECK(path.events.empty());

  // sigma^2(x) <= (1+lambda) x / n
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u01(rng);
    CHECK(s.diffusivity(StateView(&x, 1))[0] <=
          (1.0 + 1.0) * x / 100.0 + 1e-15);
  }
}

TEST_CASE("deviation process drift identity") {
  const SisParams p{1000, 0.9, true};
  const double delta = p.delta();
  const auto dev = sis_deviation_process(p, 0.05, false);
  CHECK(dev.dimension() == 2);

  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.001, 0.2);
  for (int i = 0; i < 50; ++i) {
    const double s[2] = {u(rng), u(rng)};
    const auto mu = dev.drift(StateView(s, 2));
    const double y = s[0] - s[1];
    // mu(y) = mu(x) - f(phi) = -y (delta + lambda (x + phi))
    CHECK(mu[0] - mu[1] ==
          doctest::Approx(-y * (delta + p.lambda * (s[0] + s[1])))
              .epsilon(1e-10));
  }

  // y0 = 0 by construction: the pair starts at (x0, x0)
  SimConfig cfg;
  cfg.horizon = 0.01;
  cfg.dt_grid = 0.01;
  cfg.seed = 4;
  const double x0pair[2] = {0.05, 0.05};
  const auto path = simulate(dev, StateView(x0pair, 2), cfg);
  CHECK(path.state[0] == path.state[1]);
}

TEST_CASE("time-changed deviation process has mu(y) = -y") {
  const SisParams p{1000, 0.9, true};
  const auto dev = sis_deviation_process(p, 0.05, true);
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(0.001, 0.2);
  for (int i = 0; i < 50; ++i) {
    const double s[2] = {u(rng), u(rng)};
    const auto mu = dev.drift(StateView(s, 2));
    const double y = s[0] - s[1];
    if (std::abs(y) > 1e-12)
      CHECK(std::abs((mu[0] - mu[1]) / y + 1.0) < 1e-10);
    // sigma^2(y) <= (1+lambda)/(lambda n) after the time change
    const auto s2 = dev.diffusivity(StateView(s, 2));
    CHECK(s2[0] <=
          (1.0 + p.lambda) / (p.lambda * static_cast<double>(p.n)) + 1e-15);
  }
}

TEST_CASE("deviation process rejects critical lambda") {
  CHECK_THROWS_AS(sis_deviation_process({100, 1.0, true}, 0.1, false),
                  std::invalid_argument);
}

TEST_CASE("density dependent chain recovers SIS") {
  const std::uint64_t n = 500;
  const double lambda = 2.0;
  auto q_fn = [lambda](double x, int l) {
    if (l == 1) return std::max(lambda * x * (1.0 - x), 0.0);
    if (l == -1) return std::max(x, 0.0);
    return 0.0;
  };
  const double c_q = 9.0 / 8.0;  // sup of lambda x(1-x)+x at lambda=2
  const auto dd = density_dependent(q_fn, n, 1, c_q);
  const auto s = sis({n, lambda, true});
  CHECK(dd.jump_bound() == 1.0 / static_cast<double>(n));

  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u01(rng);
    CHECK(dd.drift(StateView(&x, 1))[0] ==
          doctest::Approx(s.drift(StateView(&x, 1))[0]).epsilon(1e-12));
    CHECK(dd.diffusivity(StateView(&x, 1))[0] ==
          doctest::Approx(s.diffusivity(StateView(&x, 1))[0]).epsilon(1e-12));
    // rho <= c_q r / n
    const double rho =
        dd.rate(0.0, StateView(&x, 1)) * dd.jump_bound() * dd.jump_bound();
    CHECK(rho <= c_q / static_cast<double>(n) * (1.0 + 1e-12));
  }
}

TEST_CASE("density dependent chain enforces the declared c_q") {
  auto q_fn = [](double x, int l) { return l == 1 ? x : 0.0; };
  const auto dd = density_dependent(q_fn, 100, 1, 0.5);  // violated at x > 0.5
  const double ok = 0.3, bad = 0.9;
  CHECK(dd.rate(0.0, StateView(&ok, 1)) == doctest::Approx(30.0));
  CHECK_THROWS_AS(dd.rate(0.0, StateView(&bad, 1)), ContractViolation);
}

TEST_CASE("fluid companion pairs a jump process with its drift flow") {
  const auto base = sis({200, 2.0, true});
  const auto pair = with_fluid_companion(base);
  CHECK(pair.dimension() == 2);
  CHECK(pair.rate_constant_between_jumps());

  const double s[2] = {0.3, 0.4};
  const auto mu = pair.drift(StateView(s, 2));
  CHECK(mu[0] == doctest::Approx(sis_drift(2.0, 0.3)).epsilon(1e-12));
  CHECK(mu[1] == doctest::Approx(sis_drift(2.0, 0.4)).epsilon(1e-12));
  // jumps only touch the first coordinate
  const auto s2 = pair.diffusivity(StateView(s, 2));
  CHECK(s2[1] == 0.0);
  CHECK(s2[0] > 0.0);
}
