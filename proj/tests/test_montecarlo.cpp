#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "jumpcalc/montecarlo.hpp"
#include "oracles.hpp"

using namespace jumpcalc;
using namespace jumpcalc::mc;

namespace {

EnsembleConfig small_ensemble(double horizon, std::uint64_t n_paths,
                              std::uint64_t seed, double dt_grid = 0.0) {
  EnsembleConfig e;
  e.n_paths = n_paths;
  e.sim.horizon = horizon;
  e.sim.dt_grid = dt_grid > 0.0 ? dt_grid : horizon / 50.0;
  e.sim.seed = seed;
  e.threads = 2;
  return e;
}

ProcessSpec pure_flow_decay() {
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

TEST_CASE("wilson interval") {
  const auto w0 = wilson_interval(0, 100);
  CHECK(w0.lo == 0.0);
  const double z2 = 1.959963984540054 * 1.959963984540054;
  CHECK(w0.hi == doctest::Approx(z2 / (100.0 + z2)).epsilon(1e-12));

  // contains the point estimate
  for (std::uint64_t k : {0ULL, 1ULL, 17ULL, 50ULL, 99ULL, 100ULL}) {
    const auto w = wilson_interval(k, 100);
    const double p = k / 100.0;
    CHECK(w.lo <= p + 1e-12);
    CHECK(w.hi >= p - 1e-12);
  }

  // doubling n shrinks the half-width by about 1/sqrt(2)
  const auto a = wilson_interval(3000, 10000);
  const auto b = wilson_interval(6000, 20000);
  const double ratio = b.half_width / a.half_width;
  CHECK(ratio > 0.7071 * 0.9);
  CHECK(ratio < 0.7071 * 1.1);
}

TEST_CASE("sample path estimate on the Poisson counter") {
  const auto spec = models::poisson_counter(1.0);
  const double x0 = 0.0;
  const std::vector<double> lambdas{0.5, 1.0};
  const std::vector<double> a_values{1.0, 2.0};
  auto ens = small_ensemble(10.0, 10000, 4242, 0.5);
  const auto rep = verify_sample_path(spec, StateView(&x0, 1), ens, lambdas,
                                      a_values, 0);
  CHECK(rep.valid);
  CHECK(rep.audit_violations == 0);
  CHECK(rep.censored_paths == 0);
  REQUIRE(rep.results.size() == 8);  // 2 lambda x 2 a x 2 signs
  for (const auto& r : rep.results) CHECK(r.respected);

  // a -> infinity: the exceedance is impossible
  const std::vector<double> huge_a{50.0};
  const auto rep2 = verify_sample_path(spec, StateView(&x0, 1), ens, lambdas,
                                       huge_a, 0);
  for (const auto& r : rep2.results) CHECK(r.count == 0);

  CHECK_THROWS_AS(verify_sample_path(spec, StateView(&x0, 1), ens, {},
                                     a_values, 0),
                  std::invalid_argument);
}

TEST_CASE("reports are deterministic across thread counts") {
  const auto spec = models::birth_death(2.0, 1.0);
  const double x0 = 0.0;
  const std::vector<double> lambdas{0.5, 1.0};
  const std::vector<double> a_values{1.0, 3.0};
  auto e1 = small_ensemble(5.0, 4000, 11, 0.5);
  e1.threads = 1;
  auto e2 = e1;
  e2.threads = 2;
  const auto r1 = verify_sample_path(spec, StateView(&x0, 1), e1, lambdas,
                                     a_values, 0);
  const auto r2 = verify_sample_path(spec, StateView(&x0, 1), e2, lambdas,
                                     a_values, 0);
  CHECK(r1.to_json() == r2.to_json());

  const auto m1 = martingale_suite(spec, StateView(&x0, 1), e1, 0.5);
  const auto m2 = martingale_suite(spec, StateView(&x0, 1), e2, 0.5);
  CHECK(m1.to_json() == m2.to_json());
}

TEST_CASE("martingale checks on the Poisson counter") {
  const auto spec = models::poisson_counter(1.0);
  const double x0 = 0.0;
  auto ens = small_ensemble(1.0, 20000, 31415, 0.25);

  const auto mean_rep = martingale_mean_check(spec, StateView(&x0, 1), ens);
  REQUIRE(mean_rep.results.size() == 1);
  CHECK(mean_rep.results[0].respected);

  const auto quad_rep = quadratic_martingale_check(spec, StateView(&x0, 1), ens);
  CHECK(quad_rep.results[0].respected);

  // E_t = exp(N_t - (e-1) t) at lambda = 1: mean 1 within 4 stderr
  const auto exp_rep =
      exponential_martingale_check(spec, StateView(&x0, 1), ens, 1.0);
  CHECK(exp_rep.results[0].respected);
  CHECK(exp_rep.overflow_paths == 0);
}

TEST_CASE("batched martingale suite equals the individual checks") {
  const auto spec = models::birth_death(2.0, 1.0);
  const double x0 = 0.0;
  auto ens = small_ensemble(2.0, 2000, 5150, 0.25);
  const auto suite = martingale_suite(spec, StateView(&x0, 1), ens, 0.5);
  REQUIRE(suite.results.size() == 3);
  const auto m = martingale_mean_check(spec, StateView(&x0, 1), ens);
  const auto q = quadratic_martingale_check(spec, StateView(&x0, 1), ens);
  const auto e = exponential_martingale_check(spec, StateView(&x0, 1), ens, 0.5);
  CHECK(suite.results[0].mean == m.results[0].mean);
  CHECK(suite.results[0].stderr_ == m.results[0].stderr_);
  CHECK(suite.results[1].mean == q.results[0].mean);
  CHECK(suite.results[2].mean == e.results[0].mean);
}

TEST_CASE("E(X, 0) is identically one") {
  const auto spec = models::sis({50, 1.5, true});
  const double x0 = 0.5;
  auto ens = small_ensemble(2.0, 200, 77, 0.5);
  const auto rep = exponential_martingale_check(spec, StateView(&x0, 1), ens,
                                                0.0);
  CHECK(rep.results[0].mean == 1.0);
  CHECK(rep.results[0].stderr_ == 0.0);
}

TEST_CASE("quadratic compensation vanishes on pure flows") {
  const auto spec = pure_flow_decay();
  const double x0 = 1.0;
  auto ens = small_ensemble(1.0, 50, 123, 0.1);
  const auto rep = quadratic_martingale_check(spec, StateView(&x0, 1), ens);
  CHECK(std::abs(rep.results[0].mean) < 1e-12);
  CHECK(rep.results[0].respected);

  const auto exp_rep =
      exponential_martingale_check(spec, StateView(&x0, 1), ens, 0.7);
  CHECK(std::abs(exp_rep.results[0].mean - 1.0) < 1e-9);
}

TEST_CASE("lemma 1 on a pure birth process") {
  const auto yule = models::linear_birth(1.0);
  LinearDriftCase lc;
  lc.y = 3.0;
  lc.x0 = 1.0;
  lc.c_delta = 1.0;
  lc.ell = 1.0;
  lc.horizon = 6.0;
  auto ens = small_ensemble(6.0, 2000, 2718, 0.25);
  ens.sim.q_max = 1e7;
  const auto rep = verify_lemma(yule, ens, lc);
  CHECK(rep.valid);
  CHECK(rep.results[0].bound ==
        doctest::Approx(std::exp(-0.25)).epsilon(1e-12));
  CHECK(rep.results[0].respected);
  CHECK(rep.results[0].p_hat > 0.0);  // the event does occur

  // pooled starts: bound is the average kernel over the pool
  LinearDriftCase pooled = lc;
  pooled.x0_pool = {1.0, 2.0};
  const auto rep2 = verify_lemma(yule, ens, pooled);
  const double expect =
      0.5 * (std::exp(-(3.0 - 2.0) * 1.0 / 4.0) +
             std::exp(-(3.0 - 2.0) * 2.0 / 4.0));
  CHECK(rep2.results[0].bound == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rep2.results[0].respected);
}

TEST_CASE("lemma 2 drift barrier on a downward birth-death chain") {
  const auto bd = models::birth_death(1.0, 2.0);
  DriftBarrierCase c;
  c.q = {21.0, 1.0, 1.0, 1.0, 3.0, 1.0};
  c.x0 = 10.0;
  c.long_horizon = true;
  auto ens = small_ensemble(1.0, 3000, 99, 0.5);  // horizon set by the lemma
  const auto rep = verify_lemma(bd, ens, c);
  CHECK(rep.valid);
  CHECK(rep.results[0].respected);

  // declaring sigma2 too small must invalidate the report, not pass it
  DriftBarrierCase wrong = c;
  wrong.q.sigma2 = 1.0;
  const auto bad = verify_lemma(bd, ens, wrong);
  CHECK(bad.audit_violations > 0);
  CHECK(!bad.valid);
  CHECK(!bad.all_respected());
}

TEST_CASE("lemma 3 drift escape on an upward birth-death chain") {
  const auto bd = models::birth_death(2.0, 1.0);
  DriftEscapeCase c;
  c.q = {5.0, 1.0, 3.0, 1.0, 0.5, 1.0};
  c.x0 = 0.0;
  auto ens = small_ensemble(1.0, 3000, 314, 1.0);
  const auto rep = verify_lemma(bd, ens, c);
  CHECK(rep.valid);
  CHECK(rep.results[0].respected);
  // crossing is overwhelmingly likely well before T = 20
  CHECK(rep.results[0].p_hat < 0.01);
}

TEST_CASE("lemma 4 diffusive barrier on a symmetric walk") {
  const auto bd = models::birth_death(1.0, 1.0);
  DiffusiveBarrierCase c;
  c.q = {3.0, 2.0, 1.0, 1.0};  // x=3, qvar=2 (= sigma2*T), c=1, T=1
  c.x0 = 0.0;
  auto ens = small_ensemble(1.0, 5000, 161, 0.25);
  const auto rep = verify_lemma(bd, ens, c);
  CHECK(rep.valid);
  CHECK(rep.results[0].respected);
  CHECK(rep.results[0].p_hat > 0.0);
  CHECK(rep.results[0].p_hat < rep.results[0].bound);
}

TEST_CASE("lemma 5 diffusive escape on a symmetric walk") {
  const auto bd = models::birth_death(1.0, 1.0);
  DiffusiveEscapeCase c;
  c.q = {5.0, 0.05, 2.0, 2.0, 1.0, 1.0};
  c.x0 = 0.0;
  auto ens = small_ensemble(1.0, 1000, 2020, 2.0);
  const auto rep = verify_lemma(bd, ens, c);
  CHECK(rep.valid);
  CHECK(rep.results[0].respected);
}

TEST_CASE("censored paths are conservative exceedances") {
  // a growth process truncated by a tiny rate cap on most paths
  const auto yule = models::linear_birth(1.0);
  LinearDriftCase lc;
  lc.y = 500.0;  // essentially impossible event
  lc.x0 = 1.0;
  lc.c_delta = 1.0;
  lc.ell = 1.0;
  lc.horizon = 6.0;
  auto ens = small_ensemble(6.0, 500, 55, 1.0);
  ens.sim.q_max = 20.0;  // truncates almost every path
  const auto rep = verify_lemma(yule, ens, lc);
  CHECK(rep.censored_paths > 0);
  CHECK(rep.results[0].count >= rep.censored_paths);  // counted as exceed

  auto excl = ens;
  excl.censoring = Censoring::Exclude;
  const auto rep2 = verify_lemma(yule, excl, lc);
  CHECK(rep2.results[0].count < rep.results[0].count);
}

TEST_CASE("flow_time closed form and oracle") {
  CHECK(flow_time(0.1, 0.1, 1.0, 0.1) == 0.0);
  // lambda = 0: plain exponential decay
  CHECK(flow_time(0.4, 0.1, 0.0, 0.5) ==
        doctest::Approx(std::log(4.0) / 0.5).epsilon(1e-14));
  // worked value: 10 (ln 2 - ln(4/3))
  const double t = flow_time(0.1, 0.05, 1.0, 0.1);
  CHECK(t == doctest::Approx(10.0 * (std::log(2.0) - std::log(4.0 / 3.0)))
                 .epsilon(1e-13));
  CHECK(t == doctest::Approx(4.0546510810816438).epsilon(1e-12));
  CHECK(t == doctest::Approx(oracles::logistic_flow_time(0.1, 0.05, 1.0, 0.1))
                 .epsilon(1e-9));
  CHECK_THROWS_AS(flow_time(0.1, 0.2, 1.0, 0.1), std::domain_error);
  CHECK_THROWS_AS(flow_time(0.1, 0.05, 1.0, 0.0), std::domain_error);

  // 20 random tuples against the independent RK4 oracle
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> ux(0.05, 0.9);
  std::uniform_real_distribution<double> ul(0.0, 2.0);
  std::uniform_real_distribution<double> ud(0.05, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double x0 = ux(rng);
    const double x = x0 * std::uniform_real_distribution<double>(0.05, 0.9)(rng);
    const double lambda = ul(rng);
    const double delta = ud(rng);
    const double closed = flow_time(x0, x, lambda, delta);
    const double oracle = oracles::logistic_flow_time(x0, x, lambda, delta);
    CHECK(std::abs(closed - oracle) <= 1e-8 * closed);
    // the library's own cross-check integrator agrees too
    const double lib = flow_time_rk4_oracle(x0, x, lambda, delta);
    CHECK(std::abs(closed - lib) <= 1e-8 * closed);
  }
}

TEST_CASE("ODE approximation check") {
  const auto spec = models::sis({500, 2.0, true});
  OdeApproxQuery q;
  q.delta = 0.08;
  q.lipschitz = 3.0;
  q.c_q = 9.0 / 8.0;
  q.r = 1;
  q.n = 500;
  auto ens = small_ensemble(1.0, 500, 404, 0.1);
  const auto rep = verify_ode_approx(spec, 0.3, ens, q);
  CHECK(rep.valid);
  CHECK(rep.results[0].respected);

  // deterministic spec: zero rate, sup deviation is zero
  const auto frozen = models::poisson_counter(0.0);
  OdeApproxQuery q0;
  q0.delta = 0.01;
  q0.lipschitz = 0.0;
  q0.c_rho = 1.0;
  const auto rep0 = verify_ode_approx(frozen, 0.5, ens, q0);
  CHECK(rep0.results[0].count == 0);
}

TEST_CASE("logistic intermediate phase") {
  models::SisParams p{1000000, 0.95, true};  // delta0 = 50
  const double x0 = std::pow(p.delta0(), 0.75) / 1000.0;
  auto ens = small_ensemble(1.0, 50, 808, 1.0);
  const auto out = logistic_intermediate_phase(p, x0, ens);
  CHECK(out.t_star > 0.0);
  CHECK(out.report.results[0].respected);
  // x* and threshold definitions
  CHECK(out.x_star == doctest::Approx(std::pow(p.delta0(), 0.25) / 1000.0));
  CHECK(out.eps ==
        doctest::Approx(0.5 * std::pow(p.delta0(), 1.0 / 6.0) / 1000.0));
  // eps = delta0^{-5/6} delta / 2: the two expressions agree
  CHECK(out.eps ==
        doctest::Approx(std::pow(p.delta0(), -5.0 / 6.0) * p.delta() / 2.0)
            .epsilon(1e-12));
  // t* from the closed form matches RK4 integration to 1e-8 relative
  const double oracle = flow_time_rk4_oracle(x0, out.x_star, p.lambda, p.delta());
  CHECK(std::abs(out.t_star - oracle) <= 1e-8 * out.t_star);

  // outside the band
  CHECK_THROWS_AS(logistic_intermediate_phase(p, 0.5, ens),
                  std::invalid_argument);
}

TEST_CASE("log kappa follows the intermediate-phase asymptotics") {
  // log kappa ~ delta0^{1/3} lambda / (4 (1+lambda)) for large n
  models::SisParams p{10000000000ULL, 0.9, true};
  const double d0 = p.delta0();
  const double n = static_cast<double>(p.n);
  const double eps = 0.5 * std::pow(d0, 1.0 / 6.0) / std::sqrt(n);
  const double gamma = n * eps * p.lambda / (1.0 + p.lambda);
  const double a = 0.5 * (eps - 1.0 / n);
  const double lk = bounds::kappa({gamma, a, 1.0 / n}).log_kappa;
  const double asym = std::pow(d0, 1.0 / 3.0) * p.lambda /
                      (4.0 * (1.0 + p.lambda));
  CHECK(lk == doctest::Approx(asym).epsilon(0.02));
}

TEST_CASE("bound override forces an engineered failure") {
  const auto spec = models::poisson_counter(1.0);
  const double x0 = 0.0;
  auto ens = small_ensemble(10.0, 2000, 5, 1.0);
  const std::vector<double> lambdas{0.5};
  const std::vector<double> a_values{1.0};
  const auto rep = verify_sample_path(spec, StateView(&x0, 1), ens, lambdas,
                                      a_values, 1, 1e-9);
  CHECK(!rep.results[0].respected);
  CHECK(!rep.all_respected());
}

TEST_CASE("report serialization round trip") {
  const auto spec = models::poisson_counter(1.0);
  const double x0 = 0.0;
  auto ens = small_ensemble(2.0, 100, 1, 0.5);
  const auto rep = martingale_suite(spec, StateView(&x0, 1), ens, 0.5);
  const std::string js = rep.to_json();
  CHECK(js.find("\"schema\": \"jumpcalc.mcreport/1\"") != std::string::npos);
  CHECK(js.find("runtime") == std::string::npos);  // canonical form
  const std::string with_rt = rep.to_json(true);
  CHECK(with_rt.find("runtime_seconds") != std::string::npos);
  const std::string csv = rep.to_csv();
  CHECK(csv.find("check,model,label") == 0);
  CHECK(csv.find("martingale_suite") != std::string::npos);
}
