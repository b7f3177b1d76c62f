#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "jumpcalc/bounds.hpp"
#include "jumpcalc/engine.hpp"
#include "jumpcalc/models.hpp"
#include "jumpcalc/process.hpp"

namespace jumpcalc::mc {

/// What to do with paths truncated by the rate/norm caps. The default
/// counts them as exceedances in bound checks (conservative); they are
/// always reported separately.
enum class Censoring { TreatAsExceedance, Exclude };

struct EnsembleConfig {
  std::uint64_t n_paths = 1000;
  SimConfig sim;
  int threads = 0;  // 0 -> JUMPCALC_THREADS env or hardware concurrency
  Censoring censoring = Censoring::TreatAsExceedance;
};

/// Wilson 95% score interval for k successes out of n.
struct Wilson {
  double lo = 0.0;
  double hi = 1.0;
  double half_width = 0.5;
  double center = 0.5;
};
Wilson wilson_interval(std::uint64_t k, std::uint64_t n);

/// One verified query inside a report: either an exceedance frequency
/// against a theoretical bound, or a sample mean against a target window.
struct QueryResult {
  std::string label;
  std::string type;  // "frequency" or "mean"

  // frequency queries
  std::uint64_t count = 0;
  std::uint64_t n = 0;
  double p_hat = 0.0;
  Wilson wilson;
  double bound = 1.0;
  bool bound_clamped = false;

  // mean queries
  double mean = 0.0;
  double stderr_ = 0.0;
  double target = 0.0;
  double margin_stderr = 4.0;  // verdict window half-width in stderrs

  bool respected = true;
};

struct McReport {
  std::string check;
  std::string model;
  std::uint64_t n_paths = 0;
  std::uint64_t censored_paths = 0;
  double censored_fraction = 0.0;
  std::uint64_t audit_violations = 0;
  std::uint64_t overflow_paths = 0;
  bool valid = true;  // false when a hypothesis audit failed
  bool inconclusive = false;  // e.g. every path censored
  std::vector<QueryResult> results;
  double runtime_seconds = 0.0;

  bool all_respected() const;
  /// Canonical JSON; runtime is excluded by default so the canonical form
  /// is bit-identical across reruns and thread counts.
  std::string to_json(bool include_runtime = false) const;
  /// One CSV row per query, with a header line.
  std::string to_csv() const;
};

/// Exceedance check for the general sample path estimate: for each
/// (lambda, sign) the per-path statistic is
///   sup_t (sign * M_t - (lambda/2) e^(lambda c_delta) <X>_t)
/// over event (pre and post) and grid times, and the event for offset a is
/// {statistic >= a}, with theoretical bound e^(-lambda a).
/// signs: +1, -1 or 0 for both.
McReport verify_sample_path(const ProcessSpec& spec, StateView x0,
                            const EnsembleConfig& ens,
                            std::span<const double> lambdas,
                            std::span<const double> a_values, int signs,
                            std::optional<double> bound_override = {});

/// Mean of E_T(X, lambda) =
///   exp(lambda (X_T - X_0) - int_0^T e^(-lambda X_s) mu_s(e^(lambda X)) ds)
/// against 1 (supermartingale check, 4-stderr window). The transformed
/// drift comes from transform_process with f = exp(lambda x).
McReport exponential_martingale_check(const ProcessSpec& spec, StateView x0,
                                      const EnsembleConfig& ens,
                                      double lambda);

/// Mean of Q_T = M_T^2 - <X>_T against 0 (4-stderr window).
McReport quadratic_martingale_check(const ProcessSpec& spec, StateView x0,
                                    const EnsembleConfig& ens);

/// Mean of M_T against 0 (4-stderr window).
McReport martingale_mean_check(const ProcessSpec& spec, StateView x0,
                               const EnsembleConfig& ens);

/// All three martingale statistics (mean M_T, mean Q_T, mean E_T(lambda))
/// from one shared path ensemble. Identical per-path values to the three
/// individual checks, since the random stream does not depend on which
/// statistics are collected.
McReport martingale_suite(const ProcessSpec& spec, StateView x0,
                          const EnsembleConfig& ens, double lambda);

// --- lemma verification -----------------------------------------------

/// Linear drift: pure growth model with mu <= ell * X. The event is
/// sup_t X_t/(X_0 e^(ell t)) >= y over the simulated window; the bound is
/// E[exp(-(y-2) X_0 / (4 c_eff))]. x0_pool optionally realizes a random
/// X_0: per path X_0 is drawn from the pool (uniformly) and the bound
/// averages the deterministic kernel over the same pool.
struct LinearDriftCase {
  double y = 2.0;
  double x0 = 1.0;
  double c_delta = 1.0;
  std::optional<double> big_c;  // sigma^2 <= C mu variant
  double ell = 1.0;
  double horizon = 10.0;
  std::vector<double> x0_pool;  // empty -> deterministic x0
};

struct DriftBarrierCase {
  bounds::DriftBarrier q;
  double x0 = 0.0;
  bool long_horizon = false;   // use k = floor(sqrt(kappa)), capped
  double k_cap = 1000.0;
};

struct DriftEscapeCase {
  bounds::DriftEscape q;
  double x0 = 0.0;  // >= 0
};

struct DiffusiveBarrierCase {
  bounds::DiffusiveBarrier q;  // q.horizon must be set
  double x0 = 0.0;             // <= 0
};

struct DiffusiveEscapeCase {
  bounds::DiffusiveEscape q;
  double x0 = 0.0;  // >= 0
};

using LemmaCase = std::variant<LinearDriftCase, DriftBarrierCase,
                               DriftEscapeCase, DiffusiveBarrierCase,
                               DiffusiveEscapeCase>;

/// Empirical probability of a lemma's event against its bound. The
/// lemma's drift/diffusivity hypotheses are sampled along every path at
/// grid times; any violation marks the report invalid instead of
/// adjusting it.
McReport verify_lemma(const ProcessSpec& spec, const EnsembleConfig& ens,
                      const LemmaCase& lemma_case,
                      std::optional<double> bound_override = {});

// --- flows and the logistic model ---------------------------------------

/// Time for the logistic flow x' = -x(delta + lambda x) to decay from x0
/// to x, by separation of variables:
/// t = (log(x0/x) - log((delta + lambda x0)/(delta + lambda x))) / delta.
/// Requires 0 < x <= x0 and delta > 0; x == x0 gives 0.
double flow_time(double x0, double x, double lambda, double delta);

/// Independent check of flow_time: integrates the logistic ODE with RK4
/// and bisects for the crossing time of level x.
double flow_time_rk4_oracle(double x0, double x, double lambda, double delta,
                            double step = 0.0);

/// ODE approximation check on a 1-d density-style spec: simulates the
/// fluid-companion pair (x, phi) and compares
/// P(sup_{t<=T} |x_t - phi_t(x0)| >= e^(L T) delta) with the
/// Gronwall bound. c_rho <= 0 derives it as c_q r / n.
struct OdeApproxQuery {
  double delta = 0.0;
  double lipschitz = 0.0;  // L
  double c_rho = 0.0;      // <= 0 -> c_q * r / n
  double c_q = 0.0;
  int r = 1;
  std::uint64_t n = 0;
};

McReport verify_ode_approx(const ProcessSpec& spec, double x0,
                           const EnsembleConfig& ens,
                           const OdeApproxQuery& query,
                           std::optional<double> bound_override = {});

/// Intermediate-phase experiment for the stochastic logistic model:
/// simulates the rescaled SIS process from x0 inside the band
/// [delta0^(1/4)/sqrt(n), delta0^(5/4)/sqrt(n)] up to t* with
/// phi_{t*}(x0) = x* = delta0^(1/4)/sqrt(n), and compares
/// P(|x_{t*} - x*| > delta0^(1/6)/sqrt(n)) with 6/sqrt(kappa), where
/// eps = delta0^(1/6)/(2 sqrt(n)), gamma = n eps lambda/(1+lambda),
/// a = (eps - 1/n)/2 and kappa = kappa_{1/n}(gamma, a).
struct LogisticPhaseResult {
  McReport report;
  double x_star = 0.0;
  double t_star = 0.0;
  double eps = 0.0;
  double gamma = 0.0;
  double a = 0.0;
  double log_kappa = 0.0;
  double kappa = 1.0;
  bounds::ProbBound bound;  // 6/sqrt(kappa)
};

LogisticPhaseResult logistic_intermediate_phase(
    const models::SisParams& params, double x0, const EnsembleConfig& ens,
    std::optional<double> bound_override = {});

/// Resolves a thread count: explicit > 0 wins, else JUMPCALC_THREADS,
/// else hardware concurrency.
int resolve_threads(int requested);

}  // namespace jumpcalc::mc
