#include "jumpcalc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace jumpcalc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double linf_norm(StateView x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double l1_norm(StateView x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

bool all_finite(StateView x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

constexpr double kStageW[4] = {1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0};

}  // namespace

SimConfig SimConfig::resolved() const {
  SimConfig c = *this;
  if (!(c.horizon > 0.0))
    throw std::invalid_argument("SimConfig: horizon must be > 0");
  if (c.dt_grid == 0.0) c.dt_grid = c.horizon / 1e4;
  if (c.ode_step == 0.0) c.ode_step = c.dt_grid / 4.0;
  if (!(c.dt_grid > 0.0) || !(c.ode_step > 0.0))
    throw std::invalid_argument("SimConfig: steps must be > 0");
  if (c.ode_step > c.dt_grid)
    throw std::invalid_argument("SimConfig: ode_step must be <= dt_grid");
  if (!(c.hazard_tol > 0.0))
    throw std::invalid_argument("SimConfig: hazard_tol must be > 0");
  if (!(c.q_max > 0.0) || !(c.x_max > 0.0))
    throw std::invalid_argument("SimConfig: caps must be > 0");
  return c;
}

std::string to_string(Terminal t) {
  switch (t) {
    case Terminal::Horizon: return "horizon";
    case Terminal::StoppedByPredicate: return "stopped";
    case Terminal::TruncatedRate: return "truncated_rate";
    case Terminal::TruncatedNorm: return "truncated_norm";
  }
  return "?";
}

Engine::Engine(ProcessSpec spec) : spec_(std::move(spec)) {}

void Engine::set_extra_integrands(
    std::vector<std::function<double(double, StateView)>> integrands) {
  extras_ = std::move(integrands);
}

struct Engine::Accum {};  // nothing to keep; declared in the header

SimResult Engine::run(StateView x0, const SimConfig& raw_cfg,
                      const StopCondition* stop, PathObserver* observer) {
  const SimConfig cfg = raw_cfg.resolved();
  const int d = spec_.dimension();
  if (static_cast<int>(x0.size()) != d)
    throw std::invalid_argument("Engine::run: x0 dimension mismatch");

  // working buffers
  const std::size_t ne = extras_.size();
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> x_try(d), x_stage(d), k_acc(d), stage_d(d), disp(d),
      scratch(d), x_prev(d);
  std::vector<double> imu(d, 0.0), iqvar(d, 0.0), iextra(ne, 0.0);
  std::vector<double> m1(d), m2(d), dmu(d), dqv(d), dextra(ne);
  std::vector<double> seg_m1(d), seg_m2(d), seg_extra(ne);

  PathRng rng(cfg.seed, cfg.path_index);
  SimResult result;

  const bool has_flow = spec_.has_flow();
  const bool fast_rate =
      spec_.rate_constant_between_jumps() && !spec_.has_clock();
  const double T = cfg.horizon;
  const double c_delta_tol = spec_.jump_bound() * (1.0 + 1e-9) + 1e-300;

  double t = 0.0;
  double hazard = 0.0;
  double threshold = rng.exponential();
  std::uint64_t grid_k = 1;
  double seg_rate = 0.0;

  const bool watch_level = stop && stop->level.has_value();
  const double level = watch_level ? *stop->level : 0.0;
  const int lcoord = stop ? stop->level_coord : 0;

  auto emit = [&](double tt, StateView xx, SampleFlag flag) {
    if (!observer) return;
    observer->sample(tt, xx,
                     accumulate_moments_ ? StateView(imu) : StateView{},
                     accumulate_moments_ ? StateView(iqvar) : StateView{},
                     iextra, flag);
  };

  // Adds one integrand stage at (tt, xs) with total weight wh into the
  // pending step increments; always accumulates the hazard.
  auto add_stage = [&](double tt, StateView xs, double wh, double& dlam,
                       bool with_accums) {
    dlam += wh * spec_.rate(tt, xs);
    if (!with_accums) return;
    if (accumulate_moments_) {
      spec_.jump_moments(tt, xs, m1, m2, scratch);
      for (int j = 0; j < d; ++j) dmu[j] += wh * m1[j];
      for (int j = 0; j < d; ++j) dqv[j] += wh * m2[j];
    }
    for (std::size_t e = 0; e < ne; ++e) dextra[e] += wh * extras_[e](tt, xs);
  };

  // One classical RK4 step of size h from (t0, x) into x_try. Returns the
  // hazard increment, computed from the integrator's own stage states
  // (Simpson-consistent); drift/diffusivity/extra integrands use the same
  // stage rule when with_accums is set.
  auto rk4_step = [&](double t0, double h, bool with_accums) -> double {
    double dlam = 0.0;
    if (with_accums) {
      std::fill(dmu.begin(), dmu.end(), 0.0);
      std::fill(dqv.begin(), dqv.end(), 0.0);
      std::fill(dextra.begin(), dextra.end(), 0.0);
    }
    if (!has_flow) {
      // all stages coincide with x; one evaluation carries full weight
      add_stage(t0, x, h, dlam, with_accums);
      std::copy(x.begin(), x.end(), x_try.begin());
      return dlam;
    }
    spec_.flow_field(t0, x, stage_d);
    for (int j = 0; j < d; ++j) k_acc[j] = kStageW[0] * stage_d[j];
    add_stage(t0, x, kStageW[0] * h, dlam, with_accums);

    for (int j = 0; j < d; ++j) x_stage[j] = x[j] + 0.5 * h * stage_d[j];
    spec_.flow_field(t0 + 0.5 * h, x_stage, stage_d);
    for (int j = 0; j < d; ++j) k_acc[j] += kStageW[1] * stage_d[j];
    add_stage(t0 + 0.5 * h, x_stage, kStageW[1] * h, dlam, with_accums);

    for (int j = 0; j < d; ++j) x_stage[j] = x[j] + 0.5 * h * stage_d[j];
    spec_.flow_field(t0 + 0.5 * h, x_stage, stage_d);
    for (int j = 0; j < d; ++j) k_acc[j] += kStageW[2] * stage_d[j];
    add_stage(t0 + 0.5 * h, x_stage, kStageW[2] * h, dlam, with_accums);

    for (int j = 0; j < d; ++j) x_stage[j] = x[j] + h * stage_d[j];
    spec_.flow_field(t0 + h, x_stage, stage_d);
    for (int j = 0; j < d; ++j) k_acc[j] += kStageW[3] * stage_d[j];
    add_stage(t0 + h, x_stage, kStageW[3] * h, dlam, with_accums);

    for (int j = 0; j < d; ++j) x_try[j] = x[j] + h * k_acc[j];
    return dlam;
  };

  auto commit_accums = [&]() {
    if (accumulate_moments_)
      for (int j = 0; j < d; ++j) {
        imu[j] += dmu[j];
        iqvar[j] += dqv[j];
      }
    for (std::size_t e = 0; e < ne; ++e) iextra[e] += dextra[e];
  };

  // Bisects the flow sub-step length in (0, h_max] at which coordinate
  // lcoord first reaches `level`, assuming x_try(h_max) crossed. x must
  // still hold the step-start state.
  auto localize_crossing = [&](double t0, double h_max) -> double {
    double lo = 0.0, hi = h_max;
    while (hi - lo > cfg.hazard_tol) {
      const double mid = 0.5 * (lo + hi);
      rk4_step(t0, mid, false);
      if (x_try[lcoord] >= level)
        hi = mid;
      else
        lo = mid;
    }
    return hi;
  };

  auto finish = [&](Terminal reason) {
    result.terminal = reason;
    result.t_end = t;
  };

  auto crossed = [&](StateView xx) {
    return watch_level && xx[lcoord] >= level;
  };

  // stop/truncation checks at a committed sample; true = run ends here
  auto check_state_stops = [&](double tt, StateView xx) -> bool {
    if (crossed(xx)) {
      result.hit_time = tt;
      finish(Terminal::StoppedByPredicate);
      return true;
    }
    if (stop && stop->predicate && stop->predicate(tt, xx)) {
      finish(Terminal::StoppedByPredicate);
      return true;
    }
    if (linf_norm(xx) >= cfg.x_max) {
      finish(Terminal::TruncatedNorm);
      return true;
    }
    return false;
  };

  // per-segment cache for jump-only fast specs
  auto refresh_segment = [&]() {
    seg_rate = spec_.rate(t, x);
    if (fast_rate && !has_flow) {
      if (accumulate_moments_) spec_.jump_moments(t, x, seg_m1, seg_m2, scratch);
      for (std::size_t e = 0; e < ne; ++e) seg_extra[e] = extras_[e](t, x);
    }
  };

  // closed-form advance for jump-only specs (constant integrands)
  auto hop_to = [&](double tt) {
    const double dt = tt - t;
    if (dt > 0.0) {
      hazard += seg_rate * dt;
      if (accumulate_moments_)
        for (int j = 0; j < d; ++j) {
          imu[j] += seg_m1[j] * dt;
          iqvar[j] += seg_m2[j] * dt;
        }
      for (std::size_t e = 0; e < ne; ++e) iextra[e] += seg_extra[e] * dt;
    }
    t = tt;
  };

  // --- start ---------------------------------------------------------------
  if (!all_finite(x))
    throw SimulationError("simulate: non-finite initial state", 0.0);
  emit(0.0, x, SampleFlag::Grid);
  if (check_state_stops(0.0, x)) return result;
  refresh_segment();
  if (seg_rate >= cfg.q_max) {
    finish(Terminal::TruncatedRate);
    return result;
  }

  // 0 = continue, 1 = run ended
  auto process_jump = [&](double q_here) -> int {
    const double u = rng.uniform();
    spec_.kernel().sample(x, u, q_here, disp);
    if (l1_norm(disp) > c_delta_tol) {
      ++result.jump_bound_violations;
      if (cfg.debug_checks)
        throw ContractViolation(
            "jump kernel produced a displacement larger than c_delta in '" +
            spec_.name() + "'");
    }
    emit(t, x, SampleFlag::EventPre);
    std::copy(x.begin(), x.end(), x_prev.begin());
    for (int j = 0; j < d; ++j) x[j] += disp[j];
    if (!all_finite(x))
      throw SimulationError("simulate: non-finite state after jump", t);
    ++result.n_events;
    if (observer) observer->event(t, u, x_prev, x);
    emit(t, x, SampleFlag::EventPost);
    hazard = 0.0;
    threshold = rng.exponential();
    if (check_state_stops(t, x)) return 1;
    refresh_segment();
    if (seg_rate >= cfg.q_max) {
      finish(Terminal::TruncatedRate);
      return 1;
    }
    return 0;
  };

  // ends the run at a flow crossing localized inside [t0, t0+h_cross]
  auto finish_at_crossing = [&](double t0, double h_cross) {
    rk4_step(t0, h_cross, true);
    std::copy(x_try.begin(), x_try.end(), x.begin());
    commit_accums();
    t = t0 + h_cross;
    result.hit_time = t;
    emit(t, x, SampleFlag::Grid);
    finish(Terminal::StoppedByPredicate);
  };

  // --- main loop -------------------------------------------------------------
  while (true) {
    const double g = static_cast<double>(grid_k) * cfg.dt_grid;
    const bool grid_is_final = g >= T;
    const double boundary = grid_is_final ? T : g;

    if (fast_rate) {
      const double t_jump =
          seg_rate > 0.0 ? t + (threshold - hazard) / seg_rate : kInf;
      const double target = std::min(t_jump, boundary);
      if (!has_flow) {
        hop_to(target);
      } else {
        while (t < target) {
          const double rem = target - t;
          const double h = std::min(cfg.ode_step, rem);
          const bool last = rem <= cfg.ode_step;
          const double t0 = t;
          rk4_step(t0, h, true);
          const bool cross =
              watch_level && x[lcoord] < level && x_try[lcoord] >= level;
          if (cross) {
            finish_at_crossing(t0, localize_crossing(t0, h));
            return result;
          }
          std::copy(x_try.begin(), x_try.end(), x.begin());
          commit_accums();
          hazard += seg_rate * h;
          t = last ? target : t0 + h;
          if (!all_finite(x))
            throw SimulationError(
                "simulate: integrator produced non-finite state", t);
        }
      }
      if (target == t_jump && t_jump <= boundary) {
        hazard = threshold;  // exact closed-form inversion
        if (process_jump(seg_rate) != 0) return result;
        continue;
      }
    } else {
      // general mode: trial RK4 steps, hazard-crossing bisection
      while (t < boundary) {
        const double rem = boundary - t;
        const double h = std::min(cfg.ode_step, rem);
        const bool last = rem <= cfg.ode_step;
        const double t0 = t;
        const double dlam = rk4_step(t0, h, true);
        if (hazard + dlam >= threshold) {
          // jump inside (t0, t0+h]: bisect the sub-step to hazard_tol
          double lo = 0.0, hi = h;
          while (hi - lo > cfg.hazard_tol) {
            const double mid = 0.5 * (lo + hi);
            if (hazard + rk4_step(t0, mid, false) >= threshold)
              hi = mid;
            else
              lo = mid;
          }
          rk4_step(t0, hi, true);
          const bool cross =
              watch_level && x[lcoord] < level && x_try[lcoord] >= level;
          if (cross) {  // the flow reached the level before the jump
            finish_at_crossing(t0, localize_crossing(t0, hi));
            return result;
          }
          std::copy(x_try.begin(), x_try.end(), x.begin());
          commit_accums();
          t = t0 + hi;
          hazard = threshold;
          if (!all_finite(x))
            throw SimulationError(
                "simulate: integrator produced non-finite state", t);
          if (process_jump(spec_.rate(t, x)) != 0) return result;
          continue;
        }
        const bool cross =
            watch_level && x[lcoord] < level && x_try[lcoord] >= level;
        if (cross) {
          finish_at_crossing(t0, localize_crossing(t0, h));
          return result;
        }
        std::copy(x_try.begin(), x_try.end(), x.begin());
        commit_accums();
        hazard += dlam;
        t = last ? boundary : t0 + h;
        if (!all_finite(x))
          throw SimulationError("simulate: integrator produced non-finite state",
                                t);
      }
    }

    // boundary reached without a jump
    if (t >= boundary) {
      if (grid_is_final) {
        t = T;
        emit(T, x, SampleFlag::Grid);
        finish(Terminal::Horizon);
        return result;
      }
      t = g;
      emit(g, x, SampleFlag::Grid);
      if (check_state_stops(g, x)) return result;
      if (!fast_rate) {
        seg_rate = spec_.rate(t, x);
        if (seg_rate >= cfg.q_max) {
          finish(Terminal::TruncatedRate);
          return result;
        }
      }
      ++grid_k;
    }
  }
}

// --- recording observer -----------------------------------------------------

namespace {

class RecordingObserver : public PathObserver {
 public:
  explicit RecordingObserver(Path& path) : path_(path) {}

  void sample(double t, StateView x, StateView imu, StateView iqvar,
              std::span<const double>, SampleFlag flag) override {
    path_.t.push_back(t);
    path_.flag.push_back(static_cast<std::uint8_t>(flag));
    path_.state.insert(path_.state.end(), x.begin(), x.end());
    if (!imu.empty())
      path_.drift_integral.insert(path_.drift_integral.end(), imu.begin(),
                                  imu.end());
    if (!iqvar.empty())
      path_.qvar_integral.insert(path_.qvar_integral.end(), iqvar.begin(),
                                 iqvar.end());
  }

  void event(double t, double u, StateView pre, StateView post) override {
    JumpEvent ev;
    ev.t = t;
    ev.u = u;
    ev.pre.assign(pre.begin(), pre.end());
    ev.post.assign(post.begin(), post.end());
    path_.events.push_back(std::move(ev));
  }

 private:
  Path& path_;
};

}  // namespace

Path simulate(const ProcessSpec& spec, StateView x0, const SimConfig& cfg,
              const StopCondition* stop) {
  Path path;
  path.dimension = spec.dimension();
  path.x0.assign(x0.begin(), x0.end());
  path.spec_fingerprint = spec.fingerprint();
  path.config = cfg.resolved();

  Engine engine(spec);
  RecordingObserver rec(path);
  const SimResult res = engine.run(x0, path.config, stop, &rec);
  path.terminal = res.terminal;
  path.hit_time = res.hit_time;
  return path;
}

std::pair<std::optional<double>, Path> first_passage(const ProcessSpec& spec,
                                                     StateView x0,
                                                     const SimConfig& cfg,
                                                     double level, int coord) {
  StopCondition stop;
  stop.level = level;
  stop.level_coord = coord;
  Path path = simulate(spec, x0, cfg, &stop);
  return {path.hit_time, std::move(path)};
}

Path simulate_thinning(const ProcessSpec& spec, StateView x0,
                       const SimConfig& raw_cfg, double rate_bound) {
  if (!(rate_bound > 0.0))
    throw std::invalid_argument("simulate_thinning: rate bound must be > 0");
  const SimConfig cfg = raw_cfg.resolved();
  const int d = spec.dimension();
  Path path;
  path.dimension = d;
  path.x0.assign(x0.begin(), x0.end());
  path.spec_fingerprint = spec.fingerprint();
  path.config = cfg;

  // Candidates from a homogeneous Poisson(rate_bound) stream, accepted
  // with probability q/rate_bound. Consumes the random stream as
  // exp, accept-uniform[, jump-uniform] per candidate: a statistical
  // cross-check of hazard inversion, not stream-compatible with it.
  PathRng rng(cfg.seed, cfg.path_index);
  std::vector<double> x(x0.begin(), x0.end()), k1(d), k2(d), k3(d), k4(d),
      xs(d), disp(d), imu(d, 0.0), iqv(d, 0.0), m1(d), m2(d), scratch(d);
  double t = 0.0;
  const double T = cfg.horizon;

  auto emit = [&](double tt, SampleFlag flag) {
    path.t.push_back(tt);
    path.flag.push_back(static_cast<std::uint8_t>(flag));
    path.state.insert(path.state.end(), x.begin(), x.end());
    path.drift_integral.insert(path.drift_integral.end(), imu.begin(),
                               imu.end());
    path.qvar_integral.insert(path.qvar_integral.end(), iqv.begin(), iqv.end());
  };
  auto stage = [&](double tt, StateView xx, double wh) {
    spec.jump_moments(tt, xx, m1, m2, scratch);
    for (int j = 0; j < d; ++j) {
      imu[j] += wh * m1[j];
      iqv[j] += wh * m2[j];
    }
  };
  auto advance_to = [&](double target) {
    while (t < target) {
      const double rem = target - t;
      const double h = std::min(cfg.ode_step, rem);
      const bool last = rem <= cfg.ode_step;
      if (spec.has_flow()) {
        spec.flow_field(t, x, k1);
        stage(t, x, kStageW[0] * h);
        for (int j = 0; j < d; ++j) xs[j] = x[j] + 0.5 * h * k1[j];
        spec.flow_field(t + 0.5 * h, xs, k2);
        stage(t + 0.5 * h, xs, kStageW[1] * h);
        for (int j = 0; j < d; ++j) xs[j] = x[j] + 0.5 * h * k2[j];
        spec.flow_field(t + 0.5 * h, xs, k3);
        stage(t + 0.5 * h, xs, kStageW[2] * h);
        for (int j = 0; j < d; ++j) xs[j] = x[j] + h * k3[j];
        spec.flow_field(t + h, xs, k4);
        stage(t + h, xs, kStageW[3] * h);
        for (int j = 0; j < d; ++j)
          x[j] += h / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
      } else {
        stage(t, x, h);
      }
      t = last ? target : t + h;
    }
    t = target;
  };

  emit(0.0, SampleFlag::Grid);
  std::uint64_t grid_k = 1;
  while (true) {
    const double t_cand = t + rng.exponential() / rate_bound;
    while (true) {
      const double g = static_cast<double>(grid_k) * cfg.dt_grid;
      if (g > std::min(t_cand, T)) break;
      advance_to(g);
      emit(g, SampleFlag::Grid);
      ++grid_k;
    }
    if (t_cand >= T) {
      advance_to(T);
      emit(T, SampleFlag::Grid);
      path.terminal = Terminal::Horizon;
      return path;
    }
    advance_to(t_cand);
    const double q = spec.rate(t, x);
    if (q > rate_bound * (1.0 + 1e-12))
      throw ContractViolation(
          "simulate_thinning: rate exceeds the supplied bound");
    if (q >= cfg.q_max) {
      path.terminal = Terminal::TruncatedRate;
      return path;
    }
    if (rng.uniform() * rate_bound <= q && q > 0.0) {
      const double u = rng.uniform();
      spec.kernel().sample(x, u, q, disp);
      emit(t, SampleFlag::EventPre);
      JumpEvent ev;
      ev.t = t;
      ev.u = u;
      ev.pre.assign(x.begin(), x.end());
      for (int j = 0; j < d; ++j) x[j] += disp[j];
      ev.post.assign(x.begin(), x.end());
      path.events.push_back(std::move(ev));
      emit(t, SampleFlag::EventPost);
      if (linf_norm(x) >= cfg.x_max) {
        path.terminal = Terminal::TruncatedNorm;
        return path;
      }
    }
  }
}

PathStatistics compensated_path(const ProcessSpec& spec, const Path& path) {
  if (spec.fingerprint() != path.spec_fingerprint)
    throw std::invalid_argument(
        "compensated_path: path was generated by a different spec "
        "(fingerprint mismatch)");
  if (path.drift_integral.size() != path.state.size())
    throw std::invalid_argument(
        "compensated_path: path was recorded without drift/qvar integrals");
  const int d = path.dimension;
  PathStatistics s;
  s.dimension = d;
  s.t = path.t;
  s.flag = path.flag;
  const std::size_t rows = path.rows();
  s.compensator.resize(rows * d);
  s.martingale.resize(rows * d);
  s.qvar = path.qvar_integral;
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < d; ++j) {
      const double xbar = path.x0[j] + path.drift_integral[i * d + j];
      s.compensator[i * d + j] = xbar;
      s.martingale[i * d + j] = path.state[i * d + j] - xbar;
    }
  }
  return s;
}

}  // namespace jumpcalc
