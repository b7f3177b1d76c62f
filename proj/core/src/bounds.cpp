#include "jumpcalc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jumpcalc::bounds {

double gamma_fn(double x) {
  if (!(x >= 0.0))
    throw std::domain_error("gamma_fn: x must be >= 0 and finite");
  return 0.5 * x * std::exp(x);
}

namespace {

// Bisection on Gamma(x) = y over [0, 2y]. Gamma(x) >= x/2 gives the upper
// end of the bracket. Used below the Newton regime and as a fallback.
double gamma_inv_bisect(double y) {
  double lo = 0.0, hi = 2.0 * y;
  if (!(gamma_fn(hi) >= y)) hi = std::max(hi, 1.0);  // paranoia for tiny y*ulp
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (gamma_fn(mid) < y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double gamma_inv(double y) {
  if (std::isnan(y) || y < 0.0)
    throw std::domain_error("gamma_inv: y must be >= 0");
  if (y == 0.0) return 0.0;
  if (y < 1e-2) return gamma_inv_bisect(y);

  // Newton on g(x) = x + log x - log(2y), g'(x) = 1 + 1/x, bracket-guarded.
  const double target = std::log(2.0 * y);
  double x;
  if (target > 1.0) {
    x = target - std::log(target);  // x ~ log(2y) - log log(2y)
  } else {
    x = std::min(2.0 * y, 1.0);
  }
  double lo = 0.0, hi = std::max(2.0 * y, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double g = x + std::log(x) - target;
    if (g > 0.0)
      hi = std::min(hi, x);
    else
      lo = std::max(lo, x);
    const double step = g / (1.0 + 1.0 / x);
    double next = x - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisect fallback
    if (next == x || std::abs(next - x) <= 1e-16 * x) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

double psi(double y) {
  if (std::isnan(y) || y < 0.0)
    throw std::domain_error("psi: y must be >= 0");
  if (y == 0.0) return 2.0;  // lim_{y->0+} Gamma^{-1}(y)/y
  return gamma_inv(y) / y;
}

double lambda_c(double gamma, double c_delta) {
  if (!(gamma > 0.0)) throw std::domain_error("lambda_c: gamma must be > 0");
  if (c_delta < 0.0) throw std::domain_error("lambda_c: c_delta must be >= 0");
  if (c_delta == 0.0) return 2.0 * gamma;
  return gamma_inv(c_delta * gamma) / c_delta;
}

Kappa kappa(const KappaQuery& q) {
  if (!(q.gamma > 0.0) || !(q.a > 0.0))
    throw std::domain_error("kappa: gamma and a must be > 0");
  if (q.c_delta < 0.0) throw std::domain_error("kappa: c_delta must be >= 0");
  Kappa k;
  k.log_kappa = psi(q.c_delta * q.gamma) * q.gamma * q.a;
  k.kappa = std::exp(k.log_kappa);
  return k;
}

double envelope(double lambda, double a, double c_delta, double qvar_t) {
  if (!(lambda > 0.0) || !(a > 0.0) || c_delta < 0.0 || qvar_t < 0.0)
    throw std::domain_error("envelope: need lambda, a > 0 and nonnegative c_delta, qvar");
  return a + 0.5 * lambda * std::exp(lambda * c_delta) * qvar_t;
}

ProbBound make_prob_bound(double raw) {
  ProbBound b;
  b.raw = raw;
  b.value = std::clamp(raw, 0.0, 1.0);
  b.clamped = raw > 1.0;
  return b;
}

HorizonOpt optimize_horizon(double delta, double c_rho, double horizon,
                            double c_delta) {
  if (!(delta > 0.0) || !(c_rho > 0.0) || !(horizon > 0.0) || c_delta < 0.0)
    throw std::domain_error("optimize_horizon: positivity violated");
  HorizonOpt out;
  out.a = 0.5 * delta;
  out.gamma = delta / (2.0 * c_rho * horizon);
  const double exponent = psi(c_delta * out.gamma) * out.gamma * out.a;
  out.bound = make_prob_bound(std::exp(-exponent));
  return out;
}

OdeApprox ode_approx_bound(double delta, double c_rho, double c_delta,
                           double horizon, double lipschitz) {
  if (lipschitz < 0.0)
    throw std::domain_error("ode_approx_bound: Lipschitz constant must be >= 0");
  OdeApprox out;
  out.radius = std::exp(lipschitz * horizon) * delta;
  out.bound = optimize_horizon(delta, c_rho, horizon, c_delta).bound;
  return out;
}

ProbBound linear_drift_bound(double y, double x0, double c_eff) {
  if (!(x0 > 0.0) || !(c_eff > 0.0))
    throw std::domain_error("linear_drift_bound: x0 and c_eff must be > 0");
  if (!(y >= 2.0)) return make_prob_bound(1.0);  // vacuous below y = 2
  return make_prob_bound(std::exp(-(y - 2.0) * x0 / (4.0 * c_eff)));
}

DriftBarrierBound drift_barrier_bound(const DriftBarrier& q) {
  if (!(q.x > q.c))
    throw std::domain_error("drift_barrier: requires x > c (jump bound)");
  if (!(q.mu > 0.0) || !(q.mu <= q.c_mu))
    throw std::domain_error("drift_barrier: requires 0 < mu <= c_mu");
  if (!(q.sigma2 > 0.0))
    throw std::domain_error("drift_barrier: requires sigma2 > 0");
  if (!(q.k >= 1.0)) throw std::domain_error("drift_barrier: requires k >= 1");

  DriftBarrierBound out;
  out.t0 = (q.x - q.c) / (20.0 * q.c_mu);
  const double gamma = q.mu / q.sigma2;
  const double a = 0.5 * (q.x - q.c);
  // tighter intermediate value from the proof, before lambda_c <= 2 gamma
  out.t0_proof =
      (q.x - q.c) /
      (4.0 * (q.c_mu + 2.0 * lambda_c(gamma, q.c) * q.sigma2));
  const Kappa kap = kappa({gamma, a, q.c});
  out.log_kappa = kap.log_kappa;
  out.kappa = kap.kappa;
  out.bound = make_prob_bound(3.0 * q.k * std::exp(-kap.log_kappa));
  out.k_long = std::floor(std::exp(0.5 * kap.log_kappa));
  out.horizon_long = out.k_long * out.t0;
  out.bound_long = make_prob_bound(3.0 * std::exp(-0.5 * kap.log_kappa));
  return out;
}

DriftEscapeBound drift_escape_bound(const DriftEscape& q) {
  if (!(q.eps > 0.0 && q.eps < 1.0))
    throw std::domain_error("drift_escape: requires 0 < eps < 1");
  if (!(q.b > 0.0) || !(q.x > 0.0) || !(q.mu > 0.0) || !(q.sigma2 > 0.0))
    throw std::domain_error("drift_escape: requires b, x, mu, sigma2 > 0");
  DriftEscapeBound out;
  out.horizon = (1.0 + q.b) * q.x / ((1.0 - q.eps) * q.mu);
  const Kappa kap = kappa({q.eps * q.mu / q.sigma2, q.b * q.x, q.c_delta});
  out.log_kappa = kap.log_kappa;
  out.kappa = kap.kappa;
  out.bound = make_prob_bound(std::exp(-kap.log_kappa));
  return out;
}

DiffusiveBarrierBound diffusive_barrier_bound(const DiffusiveBarrier& q) {
  if (!(q.x > 0.0) || !(q.qvar > 0.0))
    throw std::domain_error("diffusive_barrier: requires x, qvar > 0");
  DiffusiveBarrierBound out;
  const Kappa kap = kappa({q.x / (2.0 * q.qvar), 0.5 * q.x, q.c_delta});
  out.log_kappa = kap.log_kappa;
  out.kappa = kap.kappa;
  out.bound = make_prob_bound(std::exp(-kap.log_kappa));
  return out;
}

DiffusiveEscapeBound diffusive_escape_bound(const DiffusiveEscape& q) {
  if (!(q.c_mu > 0.0) || !(q.x > 0.0))
    throw std::domain_error("diffusive_escape: requires x, c_mu > 0");
  if (!(q.sigma2 >= 4.0 * q.x * q.c_mu))
    throw std::domain_error("diffusive_escape: requires sigma2 >= 4 x c_mu");
  if (!(q.rho >= q.sigma2))
    throw std::domain_error("diffusive_escape: requires rho >= sigma2");
  if (!(q.b >= 0.0)) throw std::domain_error("diffusive_escape: requires b >= 0");
  DiffusiveEscapeBound out;
  const double sigma = std::sqrt(q.sigma2);
  out.horizon = 4.0 * (q.b + 1.0) * (q.x / sigma) * (q.x / sigma);
  const double denom = (2.0 * q.x + q.c_delta) * (2.0 * q.x + q.c_delta) * q.rho;
  out.gamma = 0.25 * q.sigma2 / denom;
  if (q.b == 0.0) {  // a = 0: kappa = 1, vacuous by construction
    out.log_kappa = 0.0;
    out.kappa = 1.0;
    out.bound = make_prob_bound(1.0);
    return out;
  }
  const Kappa kap = kappa({out.gamma, q.b * q.x * q.x, q.c_delta});
  out.log_kappa = kap.log_kappa;
  out.kappa = kap.kappa;
  out.bound = make_prob_bound(std::exp(-kap.log_kappa));
  return out;
}

SweepLemma sweep_lemma_from_string(const std::string& s) {
  if (s == "drift_barrier") return SweepLemma::DriftBarrier;
  if (s == "drift_escape") return SweepLemma::DriftEscape;
  if (s == "diffusive_barrier") return SweepLemma::DiffusiveBarrier;
  if (s == "diffusive_escape") return SweepLemma::DiffusiveEscape;
  throw std::invalid_argument("unknown sweep lemma: " + s);
}

std::string to_string(SweepLemma lemma) {
  switch (lemma) {
    case SweepLemma::DriftBarrier: return "drift_barrier";
    case SweepLemma::DriftEscape: return "drift_escape";
    case SweepLemma::DiffusiveBarrier: return "diffusive_barrier";
    case SweepLemma::DiffusiveEscape: return "diffusive_escape";
  }
  return "?";
}

std::vector<SweepRow> scaling_sweep(const SweepRegime& regime,
                                    std::span<const double> c_delta_grid) {
  if (!(regime.alpha >= 1.0 && regime.alpha <= 2.0))
    throw std::domain_error("scaling_sweep: alpha must lie in [1,2]");
  if (!(regime.big_c > 0.0))
    throw std::domain_error("scaling_sweep: C must be > 0");

  std::vector<SweepRow> rows;
  rows.reserve(c_delta_grid.size());
  for (double c : c_delta_grid) {
    if (!(c > 0.0))
      throw std::domain_error("scaling_sweep: c_delta grid must be > 0");
    SweepRow row;
    row.c_delta = c;
    row.c_q = regime.big_c / std::pow(c, regime.alpha);
    switch (regime.lemma) {
      case SweepLemma::DriftBarrier:
        // log kappa >= (x - c) Gamma^{-1}(mu c^{alpha-1}/C) / (2c)
        row.log_kappa = (regime.x - c) *
                        gamma_inv(regime.mu * std::pow(c, regime.alpha - 1.0) /
                                  regime.big_c) /
                        (2.0 * c);
        break;
      case SweepLemma::DriftEscape:
        // log kappa >= b x Gamma^{-1}(eps mu c^{alpha-1}/C) / c
        row.log_kappa =
            regime.b * regime.x *
            gamma_inv(regime.eps * regime.mu *
                      std::pow(c, regime.alpha - 1.0) / regime.big_c) /
            c;
        break;
      case SweepLemma::DiffusiveBarrier:
        // log kappa >= Gamma^{-1}(x c^{alpha-1}/(2 C T)) x/(2c)
        row.log_kappa =
            gamma_inv(regime.x * std::pow(c, regime.alpha - 1.0) /
                      (2.0 * regime.big_c * regime.horizon)) *
            regime.x / (2.0 * c);
        break;
      case SweepLemma::DiffusiveEscape: {
        // no c_q-based lower bound; report log kappa at the stated (gamma,a)
        const double denom = (2.0 * regime.x + c) * (2.0 * regime.x + c) *
                             regime.rho;
        const double gamma = 0.25 * regime.sigma2 / denom;
        row.log_kappa =
            kappa({gamma, regime.b * regime.x * regime.x, c}).log_kappa;
        break;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace jumpcalc::bounds
