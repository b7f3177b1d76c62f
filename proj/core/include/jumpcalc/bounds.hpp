#pragma once

#include <span>
#include <string>
#include <vector>

namespace jumpcalc::bounds {

/// Gamma(x) = x e^x / 2 on x >= 0.
double gamma_fn(double x);

/// Inverse of Gamma on y >= 0: |Gamma(gamma_inv(y)) - y| <= 1e-12 max(1,y).
/// Newton iteration on x + log x = log(2y) for y >= 1e-2, bisection below.
double gamma_inv(double y);

/// psi(y) = gamma_inv(y)/y, with the limit value 2 returned at y = 0.
/// Decreasing, values in (0,2], psi(y) >= 1 iff y <= log 2.
double psi(double y);

/// lambda_c(gamma) = gamma_inv(c*gamma)/c, the inverse of
/// lambda -> lambda e^(lambda c)/2; equals 2*gamma in the c -> 0 limit.
double lambda_c(double gamma, double c_delta);

struct KappaQuery {
  double gamma = 0.0;    // > 0
  double a = 0.0;        // > 0
  double c_delta = 0.0;  // >= 0; 0 means the limit value e^(2 gamma a)
};

struct Kappa {
  double log_kappa = 0.0;
  double kappa = 1.0;  // exp(log_kappa); +inf when it overflows
};

/// kappa_c(gamma, a) = exp(psi(c gamma) gamma a). 1/kappa is the generic
/// tail bound of the reformulated sample path estimate.
Kappa kappa(const KappaQuery& q);

/// Envelope W_t = a + (lambda/2) e^(lambda c_delta) qvar_t. The process
/// stays inside compensator +- W_t for all t with probability
/// >= 1 - 2 e^(-lambda a).
double envelope(double lambda, double a, double c_delta, double qvar_t);

/// A probability bound together with its unclamped value; clamping to 1
/// only engages in vacuous parameter regimes.
struct ProbBound {
  double value = 1.0;  // clamped to [0,1]
  double raw = 1.0;    // as computed
  bool clamped = false;
};

ProbBound make_prob_bound(double raw);

struct HorizonOpt {
  double a = 0.0;
  double gamma = 0.0;
  ProbBound bound;
};

/// Splits a fixed-horizon error budget delta as a = delta/2,
/// gamma = delta/(2 c_rho T); the resulting deviation bound is
/// exp(-psi(c_delta delta / (2 c_rho T)) delta^2 / (4 c_rho T)).
HorizonOpt optimize_horizon(double delta, double c_rho, double horizon,
                            double c_delta);

struct OdeApprox {
  double radius = 0.0;  // e^(L T) delta
  ProbBound bound;      // same exponent as optimize_horizon
};

/// Gronwall-style ODE approximation estimate: the process stays within
/// e^(L T) delta of the drift flow on [0,T] except with the returned
/// probability. L is a Lipschitz constant for the drift field.
OdeApprox ode_approx_bound(double delta, double c_rho, double c_delta,
                           double horizon, double lipschitz);

/// Tail bound for the running maximum of a normalized non-decreasing
/// process with (sub)linear drift: P(sup Y >= y) <= e^(-(y-2) x0 / 4 c).
/// c_eff is c_delta, or max(C, c_delta) under the sigma^2 <= C mu variant.
/// Vacuous (= 1) for y <= 2.
ProbBound linear_drift_bound(double y, double x0, double c_eff);

struct DriftBarrier {
  double x = 0.0;       // barrier, > c
  double c = 0.0;       // jump bound c_delta
  double mu = 0.0;      // 0 < mu: drift <= -mu below the barrier
  double c_mu = 0.0;    // |drift| <= c_mu, mu <= c_mu
  double sigma2 = 0.0;  // diffusivity bound, > 0
  double k = 1.0;       // number of iterated blocks, >= 1
};

struct DriftBarrierBound {
  double t0 = 0.0;        // (x-c)/(20 c_mu)
  double t0_proof = 0.0;  // tighter intermediate value from the proof
  double log_kappa = 0.0;
  double kappa = 1.0;
  ProbBound bound;        // 3k/kappa over horizon k*t0
  double k_long = 1.0;    // floor(kappa^(1/2))
  double horizon_long = 0.0;
  ProbBound bound_long;   // 3/kappa^(1/2)
};

/// Barrier crossing bound for downward-drifting processes started below
/// x/2: P(sup_{t < k t0} X_t >= x) <= 3k/kappa with gamma = mu/sigma^2,
/// a = (x-c)/2.
DriftBarrierBound drift_barrier_bound(const DriftBarrier& q);

struct DriftEscape {
  double x = 0.0;       // level to reach, > 0
  double mu = 0.0;      // drift >= mu > 0 below x
  double sigma2 = 0.0;  // diffusivity bound, > 0
  double b = 0.0;       // > 0 (slack in the horizon)
  double eps = 0.0;     // in (0,1)
  double c_delta = 0.0;
};

struct DriftEscapeBound {
  double horizon = 0.0;  // (1+b)x/((1-eps) mu)
  double log_kappa = 0.0;
  double kappa = 1.0;
  ProbBound bound;  // 1/kappa
};

/// P(sup_{t <= T} X_t < x | X_0 >= 0) <= 1/kappa with
/// gamma = eps mu/sigma^2, a = b x.
DriftEscapeBound drift_escape_bound(const DriftEscape& q);

struct DiffusiveBarrier {
  double x = 0.0;       // barrier, > 0
  double qvar = 0.0;    // quadratic variation bound over [0,T], > 0
  double c_delta = 0.0;
  double horizon = 0.0;  // T; not used by the bound, carried for checks
};

struct DiffusiveBarrierBound {
  double log_kappa = 0.0;
  double kappa = 1.0;
  ProbBound bound;  // 1/kappa
};

/// P(sup_{t <= T} X_t >= x | X_0 <= 0) <= 1/kappa for non-positive drift,
/// with gamma = x/(2 qvar_T), a = x/2.
DiffusiveBarrierBound diffusive_barrier_bound(const DiffusiveBarrier& q);

struct DiffusiveEscape {
  double x = 0.0;       // |X| must reach x
  double c_mu = 0.0;    // |drift| <= c_mu
  double sigma2 = 0.0;  // diffusivity >= sigma2 >= 4 x c_mu > 0
  double rho = 0.0;     // q c_delta^2 <= rho, rho >= sigma2
  double b = 0.0;       // > 0
  double c_delta = 0.0;
};

struct DiffusiveEscapeBound {
  double horizon = 0.0;  // 4(b+1)(x/sigma)^2
  double gamma = 0.0;
  double log_kappa = 0.0;
  double kappa = 1.0;
  ProbBound bound;  // 1/kappa
};

/// P(sup_{t <= 4(b+1)(x/sigma)^2} |X_t| < x | X_0 >= 0) <= 1/kappa with
/// gamma = (sigma^2/4)/((2x+c_delta)^2 rho), a = b x^2.
DiffusiveEscapeBound diffusive_escape_bound(const DiffusiveEscape& q);

enum class SweepLemma {
  DriftBarrier,
  DriftEscape,
  DiffusiveBarrier,
  DiffusiveEscape,
};

SweepLemma sweep_lemma_from_string(const std::string& s);
std::string to_string(SweepLemma lemma);

/// Scaling regime c_q c_delta^alpha <= C with alpha in [1,2]; alpha = 1 is
/// the large-deviations regime, alpha = 2 the diffusive one.
struct SweepRegime {
  double alpha = 1.0;
  double big_c = 1.0;  // C
  SweepLemma lemma = SweepLemma::DriftBarrier;
  // fixed parameters; which ones are read depends on the lemma
  double x = 1.0;
  double mu = 1.0;
  double eps = 0.5;    // drift escape
  double b = 1.0;      // drift/diffusive escape
  double horizon = 1.0;  // diffusive barrier T
  double sigma2 = 1.0;   // diffusive escape
  double rho = 1.0;      // diffusive escape
};

struct SweepRow {
  double c_delta = 0.0;
  double c_q = 0.0;        // C / c_delta^alpha
  double log_kappa = 0.0;  // item-specific lower bound on log kappa
};

/// Lower bounds on log kappa along a c_delta grid in the regime
/// c_q c_delta^alpha <= C. Throws when alpha is outside [1,2].
std::vector<SweepRow> scaling_sweep(const SweepRegime& regime,
                                    std::span<const double> c_delta_grid);

}  // namespace jumpcalc::bounds
