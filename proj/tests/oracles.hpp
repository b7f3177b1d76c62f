#pragma once

// Independent reference computations used to freeze expected values.
// These deliberately avoid the library's own code paths: plain bisection
// for the function inverse, plain fixed-step RK4 for flows, and direct
// sums over kernel entries for drift/diffusivity.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "jumpcalc/process.hpp"

namespace oracles {

inline double gamma(double x) { return 0.5 * x * std::exp(x); }

// bisection on Gamma(x) = y to ~1e-14 relative
inline double gamma_inv(double y) {
  if (y == 0.0) return 0.0;
  double lo = 0.0, hi = 2.0 * y;
  while (gamma(hi) < y) hi *= 2.0;
  for (int i = 0; i < 500; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (gamma(mid) < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double psi(double y) { return y == 0.0 ? 2.0 : gamma_inv(y) / y; }

inline double log_kappa(double c, double gammav, double a) {
  return psi(c * gammav) * gammav * a;
}

// time for x' = -x(delta + lambda x) to fall from x0 to x, by dense RK4
// with secant refinement of the crossing step
inline double logistic_flow_time(double x0, double x, double lambda,
                                 double delta) {
  auto f = [&](double v) { return -v * (delta + lambda * v); };
  auto rk4 = [&](double v, double h) {
    const double k1 = f(v);
    const double k2 = f(v + 0.5 * h * k1);
    const double k3 = f(v + 0.5 * h * k2);
    const double k4 = f(v + h * k3);
    return v + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
  };
  const double h = 5e-4 / (delta + lambda * x0);
  double t = 0.0, v = x0;
  for (long step = 0; step < 500000000L; ++step) {
    const double v1 = rk4(v, h);
    if (v1 <= x) {
      double lo = 0.0, hi = h;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (rk4(v, mid) <= x ? hi : lo) = mid;
        if (hi - lo <= 1e-18 * (t + h)) break;
      }
      return t + 0.5 * (lo + hi);
    }
    v = v1;
    t += h;
  }
  throw std::runtime_error("oracle: flow never crossed the level");
}

// direct sums over the entries of a discrete kernel
struct BruteMoments {
  std::vector<double> drift;
  std::vector<double> sigma2;
};

inline BruteMoments brute_force_moments(const jumpcalc::ProcessSpec& spec,
                                        jumpcalc::StateView x) {
  const int d = spec.dimension();
  BruteMoments m;
  m.drift.assign(d, 0.0);
  m.sigma2.assign(d, 0.0);
  const auto& kernel = spec.kernel();
  if (!kernel.is_discrete())
    throw std::runtime_error("brute_force_moments: discrete kernels only");
  std::vector<double> disp(d);
  for (std::size_t i = 0; i < kernel.entries().size(); ++i) {
    const double w = kernel.entries()[i].weight(x);
    kernel.entry_displacement(i, x, disp);
    for (int j = 0; j < d; ++j) {
      m.drift[j] += w * disp[j];
      m.sigma2[j] += w * disp[j] * disp[j];
    }
  }
  if (spec.has_flow()) {
    std::vector<double> flow(d);
    spec.flow_field(0.0, x, flow);
    for (int j = 0; j < d; ++j) m.drift[j] += flow[j];
  }
  return m;
}

}  // namespace oracles
