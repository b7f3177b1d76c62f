#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpcalc/process.hpp"
#include "jumpcalc/rng.hpp"

namespace jumpcalc {

struct SimConfig {
  double horizon = 1.0;     // T
  double dt_grid = 0.0;     // recording step; 0 -> horizon/1e4
  double ode_step = 0.0;    // integrator step; 0 -> dt_grid/4
  double hazard_tol = 1e-10;  // jump-time bisection tolerance (time units)
  double q_max = 1e12;      // rate cap; crossing it truncates the path
  double x_max = 1e12;      // sup-norm cap; crossing it truncates the path
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  bool debug_checks = true;  // fail loudly when a sampled jump exceeds c_delta

  /// Fills derived defaults and validates; throws std::invalid_argument.
  SimConfig resolved() const;
};

enum class Terminal : std::uint8_t {
  Horizon = 0,
  StoppedByPredicate = 1,
  TruncatedRate = 2,
  TruncatedNorm = 3,
};

std::string to_string(Terminal t);

struct JumpEvent {
  double t = 0.0;
  double u = 0.0;  // uniform sample selecting the jump
  std::vector<double> pre;   // state just before, X_{t-}
  std::vector<double> post;  // state just after
};

enum class SampleFlag : std::uint8_t {
  Grid = 0,
  EventPre = 1,
  EventPost = 2,
};

/// Streaming hook driven by the engine. `imu` and `iqvar` are the running
/// integrals of drift and diffusivity (per coordinate), accumulated with
/// the same quadrature as the jump hazard; `iextra` are the integrals of
/// any user-supplied integrands.
class PathObserver {
 public:
  virtual ~PathObserver() = default;
  virtual void sample(double t, StateView x, StateView imu, StateView iqvar,
                      std::span<const double> iextra, SampleFlag flag) = 0;
  virtual void event(double t, double u, StateView pre, StateView post) {}
};

/// Optional stopping: a predicate checked at grid and event times, and/or
/// an upward level crossing on one coordinate, localized by bisection on
/// flow segments and exact at jumps.
struct StopCondition {
  std::function<bool(double, StateView)> predicate;
  std::optional<double> level;
  int level_coord = 0;
};

struct SimResult {
  Terminal terminal = Terminal::Horizon;
  double t_end = 0.0;
  std::optional<double> hit_time;  // level crossing time, if any
  std::uint64_t n_events = 0;
  std::uint64_t jump_bound_violations = 0;  // sampled jumps with |d|_1 > c_delta
};

/// One simulated trajectory: events plus (t, state, integral of mu,
/// integral of sigma^2) rows at grid times and at every event (pre and
/// post). Event times are strictly increasing, row times nondecreasing,
/// and the accumulated sigma^2 integral is nondecreasing.
struct Path {
  int dimension = 1;
  std::vector<double> x0;
  std::vector<JumpEvent> events;

  // row-major sample rows
  std::vector<double> t;
  std::vector<std::uint8_t> flag;  // SampleFlag values
  std::vector<double> state;           // rows x dimension
  std::vector<double> drift_integral;  // rows x dimension
  std::vector<double> qvar_integral;   // rows x dimension

  Terminal terminal = Terminal::Horizon;
  std::optional<double> hit_time;
  std::uint64_t spec_fingerprint = 0;
  SimConfig config;

  std::size_t rows() const { return t.size(); }
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, double last_valid_time)
      : std::runtime_error(what), last_valid_time(last_valid_time) {}
  double last_valid_time;
};

class ContractViolation : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reusable per-thread simulation engine. A single run is strictly
/// sequential; concurrent paths must use distinct path_index values.
class Engine {
 public:
  explicit Engine(ProcessSpec spec);

  /// Extra scalar integrands g(t, x) accumulated alongside the hazard.
  void set_extra_integrands(
      std::vector<std::function<double(double, StateView)>> integrands);

  /// Skip the drift/diffusivity accumulators (observers then see empty
  /// imu/iqvar spans). The hazard and extras are always integrated.
  void set_accumulate_moments(bool on) { accumulate_moments_ = on; }

  SimResult run(StateView x0, const SimConfig& cfg,
                const StopCondition* stop = nullptr,
                PathObserver* observer = nullptr);

  const ProcessSpec& spec() const { return spec_; }

 private:
  struct Accum;
  double stage_rate(double t, StateView x) const;
  ProcessSpec spec_;
  std::vector<std::function<double(double, StateView)>> extras_;
  bool accumulate_moments_ = true;
  // scratch buffers, sized on first run
  std::vector<double> buf_;
};

/// Simulates one path and records it. `stop` is optional.
Path simulate(const ProcessSpec& spec, StateView x0, const SimConfig& cfg,
              const StopCondition* stop = nullptr);

/// First passage of coordinate `coord` above `level`: returns the exact
/// crossing time (bisection-localized on flow, event time at jumps), or
/// nullopt when censored at the horizon, along with the path.
std::pair<std::optional<double>, Path> first_passage(const ProcessSpec& spec,
                                                     StateView x0,
                                                     const SimConfig& cfg,
                                                     double level,
                                                     int coord = 0);

/// Cross-check simulation by Poisson thinning under a user-supplied local
/// rate bound. Draws candidate times at rate `rate_bound` and accepts with
/// probability q/rate_bound; statistically equivalent to `simulate` but
/// consumes the random stream differently. Throws ContractViolation if the
/// rate exceeds the bound at an evaluated state.
Path simulate_thinning(const ProcessSpec& spec, StateView x0,
                       const SimConfig& cfg, double rate_bound);

/// Compensator, martingale part and predictable quadratic variation along
/// a recorded path: xbar = x0 + int mu, M = x - xbar, qvar = int sigma^2.
struct PathStatistics {
  int dimension = 1;
  std::vector<double> t;
  std::vector<std::uint8_t> flag;
  std::vector<double> compensator;  // rows x dimension
  std::vector<double> martingale;   // rows x dimension
  std::vector<double> qvar;         // rows x dimension
};

/// Throws std::invalid_argument when the path was generated by a
/// different spec (fingerprint mismatch).
PathStatistics compensated_path(const ProcessSpec& spec, const Path& path);

}  // namespace jumpcalc
