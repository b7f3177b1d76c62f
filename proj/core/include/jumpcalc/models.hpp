#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "jumpcalc/process.hpp"

namespace jumpcalc::models {

/// Unit-jump counting process with constant rate: q == rate, D == 0,
/// jumps +1, c_delta = 1.
ProcessSpec poisson_counter(double rate);

/// State-independent birth-death chain: jumps {(b,+1),(d,-1)},
/// q = b + d, c_delta = 1.
ProcessSpec birth_death(double birth, double death);

/// Pure birth at rate ell * X (Yule-type): q(x) = ell*x, jumps +1.
/// Non-decreasing with drift ell * X, the canonical linear-drift model.
ProcessSpec linear_birth(double ell);

struct SisParams {
  std::uint64_t n = 100;  // population size, >= 1
  double lambda = 1.0;    // infection rate, >= 0
  bool rescaled = true;   // x = X/n on [0,1] vs X on {0..n}

  double delta() const { return 1.0 - lambda; }
  double delta0() const { return std::sqrt(static_cast<double>(n)) * delta(); }
};

/// Stochastic logistic (SIS) chain: X -> X+1 at rate lambda X (n-X)/n,
/// X -> X-1 at rate X. Rescaled variant has jumps +-1/n, c_delta = 1/n and
/// drift f(x) = lambda x (1-x) - x.
ProcessSpec sis(const SisParams& params);

/// Drift of the rescaled SIS process, f(x) = lambda x(1-x) - x.
double sis_drift(double lambda, double x);
/// Diffusivity of the rescaled SIS process, n^-1 (lambda x(1-x) + x).
double sis_diffusivity(std::uint64_t n, double lambda, double x);

/// Deviation-from-flow process for the SIS model. State is (x, phi) where
/// phi solves phi' = f(phi) from phi_0 = x0, integrated alongside x by the
/// same engine; the deviation is y = x - phi with
/// mu(y) = -y (delta + lambda (x + phi)).
/// With time_changed, time is rescaled by the clock
/// delta + lambda (x + phi) so that mu(y) == -y and
/// sigma^2(y) <= (1+lambda)/(lambda n).
/// Requires delta = 1 - lambda > 0.
ProcessSpec sis_deviation_process(const SisParams& params, double x0,
                                  bool time_changed = false);

/// Deviation coordinate y = x - phi of a deviation-process state.
inline double deviation(StateView state) { return state[0] - state[1]; }

/// Rate contribution q(density, jump) of a density dependent chain;
/// zero for |jump| > r.
using DensityRateFn = std::function<double(double, int)>;

/// Density dependent Markov chain, rescaled: state x = X/n, jumps l/n at
/// rate n q(x, l) for integer l in [-r, r]. c_delta = r/n and
/// rho <= c_q r / n. The declared bound sum_l q(x,l) <= c_q is checked at
/// every rate evaluation and violations raise a contract error.
ProcessSpec density_dependent(DensityRateFn q_fn, std::uint64_t n, int r,
                              double c_q);

/// Pairs a 1-d pure-jump spec with its own drift flow: state (x, phi),
/// where x jumps as in `base` and phi' = mu_base(phi). Used to measure
/// sup_t |x_t - phi_t(x0)| without interpolating between two integrators.
ProcessSpec with_fluid_companion(const ProcessSpec& base);

}  // namespace jumpcalc::models
