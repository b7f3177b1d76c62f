#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpcalc/kernel.hpp"

namespace jumpcalc {

/// Transition rate q(x) >= 0, events per unit time.
using RateFn = std::function<double(StateView)>;
/// Deterministic derivative D(x); writes into `out`.
using FlowFn = std::function<void(StateView, MutStateView)>;
/// Time-change clock factor c(t, x) > 0.
using ClockFn = std::function<double(double, StateView)>;

/// Drift, diffusivity and the crude bound rho = q * c_delta^2 at a state.
struct DriftReport {
  std::vector<double> mu;      // drift, per coordinate
  std::vector<double> sigma2;  // diffusivity, per coordinate
  double rho = 0.0;            // q * c_delta^2
};

/// Immutable description of a hybrid jump process: rate q, inter-jump
/// derivative D, jump kernel, and the uniform jump bound c_delta.
///
/// With a clock attached the effective data are q/c and D/c; the
/// time-rescaled process is again of the same class and the ratio
/// mu/sigma^2 is unchanged pointwise.
///
/// Specs are immutable after construction and cheap to copy; all
/// evaluation methods are pure and safe to call concurrently.
class ProcessSpec {
 public:
  struct Init {
    std::string name;
    int dimension = 1;
    double jump_bound = 1.0;  // c_delta > 0
    RateFn rate;
    FlowFn flow;  // empty = pure jump (D == 0)
    JumpKernel kernel;
    ClockFn clock;  // empty = no time change
    // Declares that q does not change between jumps (no flow, or the
    // rate ignores every flowing coordinate). Lets the simulator invert
    // the cumulative hazard in closed form.
    bool rate_constant_between_jumps = false;
  };

  explicit ProcessSpec(Init init);

  const std::string& name() const { return impl_->name; }
  int dimension() const { return impl_->dimension; }
  double jump_bound() const { return impl_->jump_bound; }
  const JumpKernel& kernel() const { return impl_->kernel; }
  bool has_flow() const { return static_cast<bool>(impl_->flow); }
  bool has_clock() const { return static_cast<bool>(impl_->clock); }
  bool rate_constant_between_jumps() const {
    return impl_->rate_constant_between_jumps;
  }
  /// Structural fingerprint; stored in simulated paths so that derived
  /// statistics can detect a spec/path mismatch.
  std::uint64_t fingerprint() const { return impl_->fingerprint; }

  /// Effective rate q(x)/c(t,x). Throws on non-finite or negative values.
  double rate(double t, StateView x) const;
  /// Effective derivative D(x)/c(t,x); writes into `out`.
  void flow_field(double t, StateView x, MutStateView out) const;
  /// Clock factor; 1 when no clock is attached. Throws if <= 0.
  double clock(double t, StateView x) const;

  /// mu = D + q E[Delta], coordinatewise.
  std::vector<double> drift(StateView x, double t = 0.0) const;
  /// sigma^2 = q E[Delta^2], coordinatewise.
  std::vector<double> diffusivity(StateView x, double t = 0.0) const;
  DriftReport drift_report(StateView x, double t = 0.0) const;

  /// Allocation-free core of drift/diffusivity; either output span may be
  /// empty. scratch needs dimension() doubles.
  void jump_moments(double t, StateView x, MutStateView m1, MutStateView m2,
                    MutStateView scratch) const;

 private:
  struct Impl {
    std::string name;
    int dimension;
    double jump_bound;
    RateFn rate;
    FlowFn flow;
    JumpKernel kernel;
    ClockFn clock;
    bool rate_constant_between_jumps;
    std::uint64_t fingerprint;
  };
  std::shared_ptr<const Impl> impl_;

  friend ProcessSpec rescale_time(const ProcessSpec&, ClockFn);
};

/// sigma(X,Y) = q E[Delta(X) Delta(Y)] for two processes driven by the
/// same rate and the same jump sample u. Coordinates select which entry
/// of each displacement vector is multiplied (both default to 0).
/// Throws if the rates disagree at x.
double covariability(const ProcessSpec& spec_x, const ProcessSpec& spec_y,
                     StateView x, int coord_x = 0, int coord_y = 0);

/// Drift of a product: mu(XY) = mu(X) Y + X mu(Y) + sigma(X,Y).
double product_drift(double mu_x, double mu_y, double x_value, double y_value,
                     double sigma_xy);

/// Certified bound on the chain-rule gap:
/// |mu(f(X)) - f'(X) mu(X)| <= sigma2 * sup|f''| / 2.
double taylor_drift_gap_bound(double sigma2, double f_second_sup);

/// Image process f(X) for scalar f. The returned spec is parameterized by
/// the ORIGINAL coordinate: its rate is unchanged, its derivative is
/// f'(x) D(x) and its jump function is f(x + Delta(x,u)) - f(x), so its
/// drift at x is mu(f(X)) by the chain rule. Requires dimension 1.
/// jump_bound_hint overrides c_delta of the image (defaults to the
/// base bound, which is exact for 1-Lipschitz f).
ProcessSpec transform_process(const ProcessSpec& spec,
                              std::function<double(double)> f,
                              std::function<double(double)> fprime,
                              std::optional<double> jump_bound_hint = {});

/// Divides q and D by a positive clock factor. mu/sigma^2 is preserved
/// pointwise. Composes with any clock already attached.
ProcessSpec rescale_time(const ProcessSpec& spec, ClockFn clock);

}  // namespace jumpcalc
