#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace jumpcalc {

using StateView = std::span<const double>;
using MutStateView = std::span<double>;

/// Weight of one discrete jump direction: a rate contribution >= 0.
using WeightFn = std::function<double(StateView)>;
/// State-dependent displacement; writes the jump vector into `out`.
using DisplacementFn = std::function<void(StateView, MutStateView)>;
/// Continuous jump map (state, u) -> displacement, u in [0,1].
using JumpMapFn = std::function<void(StateView, double, MutStateView)>;

/// Jump function of a process, Markov-chain style.
///
/// Discrete variant: a list of (weight, displacement) directions. The
/// weights are rate contributions whose sum at a state should equal the
/// process rate q there; sampling maps u in [0,1] through the cumulative
/// thresholds c_i = (w_1+...+w_i)/q. Mass beyond the last threshold
/// (possible only when the weights do not exhaust q) yields a zero jump,
/// which is how a deterministic component with no jumps is represented.
///
/// Continuous variant: an arbitrary map (state, u) -> displacement,
/// integrated by composite midpoint quadrature over u.
class JumpKernel {
 public:
  struct Entry {
    WeightFn weight;
    std::vector<double> displacement;  // constant displacement...
    DisplacementFn displacement_fn;    // ...unless this is set
  };

  JumpKernel() = default;

  static JumpKernel discrete(std::vector<Entry> entries);
  static JumpKernel continuous(JumpMapFn map, int quadrature_nodes = 256);
  /// Kernel with no jump directions: Delta(x,u) == 0 for all u.
  static JumpKernel none() { return discrete({}); }

  bool is_discrete() const { return discrete_; }
  int quadrature_nodes() const { return nodes_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Accumulates q*E[Delta] into m1 and q*E[Delta^2] (coordinatewise)
  /// into m2. Exact finite sums for discrete kernels, midpoint quadrature
  /// for continuous ones. Either output may be empty to skip it.
  /// `scratch` must hold at least dim doubles.
  void rate_moments(StateView x, double q, MutStateView m1, MutStateView m2,
                    MutStateView scratch) const;

  /// Writes the displacement for jump sample u into `out`.
  /// q is the total rate used for the cumulative thresholds.
  void sample(StateView x, double u, double q, MutStateView out) const;

  /// Evaluates the displacement at quadrature/sample point u without
  /// thresholding (continuous) or the displacement of entry i (discrete).
  void entry_displacement(std::size_t i, StateView x, MutStateView out) const;

 private:
  bool discrete_ = true;
  std::vector<Entry> entries_;
  JumpMapFn map_;
  int nodes_ = 0;
};

}  // namespace jumpcalc
