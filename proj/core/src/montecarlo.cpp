#include "jumpcalc/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "jumpcalc/io.hpp"

namespace jumpcalc::mc {

using nlohmann::json;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("JUMPCALC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

Wilson wilson_interval(std::uint64_t k, std::uint64_t n) {
  if (n == 0) return {};
  constexpr double z = 1.959963984540054;  // 95%
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2n = z * z / nn;
  const double denom = 1.0 + z2n;
  Wilson w;
  w.center = (p + 0.5 * z2n) / denom;
  w.half_width =
      (z / denom) * std::sqrt(p * (1.0 - p) / nn + 0.25 * z2n / nn);
  w.lo = std::max(0.0, w.center - w.half_width);
  w.hi = std::min(1.0, w.center + w.half_width);
  return w;
}

bool McReport::all_respected() const {
  if (!valid || inconclusive) return false;
  for (const auto& r : results)
    if (!r.respected) return false;
  return true;
}

namespace {

json query_to_json(const QueryResult& r) {
  json j;
  j["label"] = r.label;
  j["type"] = r.type;
  j["respected"] = r.respected;
  if (r.type == "frequency") {
    j["count"] = r.count;
    j["n"] = r.n;
    j["p_hat"] = r.p_hat;
    j["wilson_lo"] = r.wilson.lo;
    j["wilson_hi"] = r.wilson.hi;
    j["half_width"] = r.wilson.half_width;
    j["bound"] = r.bound;
    j["bound_clamped"] = r.bound_clamped;
  } else {
    j["mean"] = r.mean;
    j["stderr"] = r.stderr_;
    j["target"] = r.target;
    j["margin_stderr"] = r.margin_stderr;
  }
  return j;
}

}  // namespace

std::string McReport::to_json(bool include_runtime) const {
  json j;
  j["schema"] = "jumpcalc.mcreport/1";
  j["check"] = check;
  j["model"] = model;
  j["n_paths"] = n_paths;
  j["censored_paths"] = censored_paths;
  j["censored_fraction"] = censored_fraction;
  j["audit_violations"] = audit_violations;
  j["overflow_paths"] = overflow_paths;
  j["valid"] = valid;
  j["inconclusive"] = inconclusive;
  j["all_respected"] = all_respected();
  j["results"] = json::array();
  for (const auto& r : results) j["results"].push_back(query_to_json(r));
  if (include_runtime) j["runtime_seconds"] = runtime_seconds;
  return j.dump(2);
}

std::string McReport::to_csv() const {
  std::ostringstream out;
  out << "check,model,label,type,count,n,p_hat,wilson_lo,wilson_hi,half_width,"
         "bound,mean,stderr,target,respected\n";
  auto fd = io::format_double;
  for (const auto& r : results) {
    out << check << ',' << model << ',' << '"' << r.label << '"' << ','
        << r.type << ',' << r.count << ',' << r.n << ',' << fd(r.p_hat) << ','
        << fd(r.wilson.lo) << ',' << fd(r.wilson.hi) << ','
        << fd(r.wilson.half_width) << ',' << fd(r.bound) << ',' << fd(r.mean)
        << ',' << fd(r.stderr_) << ',' << fd(r.target) << ','
        << (r.respected ? 1 : 0) << '\n';
  }
  return out.str();
}

namespace {

// ---------------------------------------------------------------------------
// ensemble machinery

struct PathTally {
  std::uint64_t censored = 0;
  std::uint64_t jump_bound_violations = 0;
};

// Runs n_paths simulations across threads. make_collector(thread) builds a
// per-thread observer; consume(i, collector, result) stores per-path
// outcomes into preallocated slots, so aggregation order and thread count
// cannot change any result.
template <typename MakeCollector, typename Consume>
PathTally run_ensemble(const ProcessSpec& spec, StateView x0,
                       const EnsembleConfig& ens, const StopCondition* stop,
                       bool accumulate_moments,
                       const std::vector<std::function<double(double, StateView)>>*
                           extras_factory_output,
                       MakeCollector make_collector, Consume consume) {
  if (ens.n_paths < 1)
    throw std::invalid_argument("EnsembleConfig: n_paths must be >= 1");
  SimConfig base = ens.sim.resolved();
  base.debug_checks = false;  // violations are counted, not thrown

  const int n_threads =
      static_cast<int>(std::min<std::uint64_t>(resolve_threads(ens.threads),
                                               ens.n_paths));
  std::vector<PathTally> tallies(n_threads);
  std::vector<std::exception_ptr> errors(n_threads);

  auto worker = [&](int ti, std::uint64_t lo, std::uint64_t hi) {
    try {
      Engine engine(spec);
      engine.set_accumulate_moments(accumulate_moments);
      if (extras_factory_output) engine.set_extra_integrands(*extras_factory_output);
      auto collector = make_collector(ti);
      SimConfig cfg = base;
      for (std::uint64_t i = lo; i < hi; ++i) {
        cfg.path_index = base.path_index + i;
        collector.reset(i);
        const SimResult res = engine.run(x0, cfg, stop, &collector);
        if (res.terminal == Terminal::TruncatedRate ||
            res.terminal == Terminal::TruncatedNorm)
          ++tallies[ti].censored;
        tallies[ti].jump_bound_violations += res.jump_bound_violations;
        consume(i, collector, res);
      }
    } catch (...) {
      errors[ti] = std::current_exception();
    }
  };

  if (n_threads == 1) {
    worker(0, 0, ens.n_paths);
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (ens.n_paths + n_threads - 1) / n_threads;
    for (int ti = 0; ti < n_threads; ++ti) {
      const std::uint64_t lo = ti * chunk;
      const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, ens.n_paths);
      if (lo >= hi) break;
      pool.emplace_back(worker, ti, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  PathTally total;
  for (const auto& t : tallies) {
    total.censored += t.censored;
    total.jump_bound_violations += t.jump_bound_violations;
  }
  return total;
}

// mean and standard error of a slot vector, in index order
std::pair<double, double> mean_stderr(const std::vector<double>& v,
                                      const std::vector<std::uint8_t>& keep) {
  double sum = 0.0;
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (keep[i]) {
      sum += v[i];
      ++n;
    }
  if (n == 0) return {0.0, 0.0};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (keep[i]) {
      const double dv = v[i] - mean;
      ss += dv * dv;
    }
  const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

QueryResult frequency_result(std::string label, std::uint64_t count,
                             std::uint64_t n, double bound_raw,
                             std::optional<double> override_bound) {
  QueryResult r;
  r.label = std::move(label);
  r.type = "frequency";
  r.count = count;
  r.n = n;
  r.p_hat = n ? static_cast<double>(count) / static_cast<double>(n) : 0.0;
  r.wilson = wilson_interval(count, n);
  const auto pb = bounds::make_prob_bound(
      override_bound ? *override_bound : bound_raw);
  r.bound = pb.value;
  r.bound_clamped = pb.clamped;
  r.respected = r.p_hat <= r.bound + 3.0 * r.wilson.half_width;
  return r;
}

QueryResult mean_result(std::string label, double mean, double se,
                        double target, double margin) {
  QueryResult r;
  r.label = std::move(label);
  r.type = "mean";
  r.mean = mean;
  r.stderr_ = se;
  r.target = target;
  r.margin_stderr = margin;
  r.respected = std::abs(mean - target) <= margin * se;
  return r;
}

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// collectors

// Final-sample capture plus optional running sup statistics. The sup
// statistics are exact for jump-only processes (the integrands are linear
// between jumps, so segment extrema sit at the sampled endpoints).
class SupCollector : public PathObserver {
 public:
  struct Combo {
    double sign;  // +1 or -1
    double coef;  // (lambda/2) e^(lambda c_delta)
  };

  SupCollector(int dim, std::vector<Combo> combos, std::size_t n_extra)
      : d_(dim), combos_(std::move(combos)), best_(combos_.size()),
        extra_final_(n_extra) {}

  void reset(std::uint64_t) {
    std::fill(best_.begin(), best_.end(),
              -std::numeric_limits<double>::infinity());
    x0_ = 0.0;
    have_x0_ = false;
    t_final_ = 0.0;
    x_final_ = 0.0;
    imu_final_ = 0.0;
    iqv_final_ = 0.0;
    std::fill(extra_final_.begin(), extra_final_.end(), 0.0);
  }

  void sample(double t, StateView x, StateView imu, StateView iqvar,
              std::span<const double> iextra, SampleFlag) override {
    if (!have_x0_) {
      x0_ = x[0];
      have_x0_ = true;
    }
    const double m = imu.empty() ? 0.0 : x[0] - x0_ - imu[0];
    const double qv = iqvar.empty() ? 0.0 : iqvar[0];
    for (std::size_t j = 0; j < combos_.size(); ++j) {
      const double s = combos_[j].sign * m - combos_[j].coef * qv;
      if (s > best_[j]) best_[j] = s;
    }
    t_final_ = t;
    x_final_ = x[0];
    imu_final_ = imu.empty() ? 0.0 : imu[0];
    iqv_final_ = qv;
    std::copy(iextra.begin(), iextra.end(), extra_final_.begin());
  }

  double best(std::size_t j) const { return best_[j]; }
  double x_final() const { return x_final_; }
  double x0() const { return x0_; }
  double martingale_final() const { return x_final_ - x0_ - imu_final_; }
  double qvar_final() const { return iqv_final_; }
  double extra_final(std::size_t e) const { return extra_final_[e]; }

 private:
  int d_;
  std::vector<Combo> combos_;
  std::vector<double> best_;
  std::vector<double> extra_final_;
  bool have_x0_ = false;
  double x0_ = 0.0, t_final_ = 0.0, x_final_ = 0.0, imu_final_ = 0.0,
         iqv_final_ = 0.0;
};

}  // namespace

// ---------------------------------------------------------------------------
// sample path estimate

McReport verify_sample_path(const ProcessSpec& spec, StateView x0,
                            const EnsembleConfig& ens,
                            std::span<const double> lambdas,
                            std::span<const double> a_values, int signs,
                            std::optional<double> bound_override) {
  const auto t_start = std::chrono::steady_clock::now();
  if (lambdas.empty() || a_values.empty())
    throw std::invalid_argument("verify_sample_path: empty lambda or a grid");
  for (double l : lambdas)
    if (!(l > 0.0))
      throw std::invalid_argument("verify_sample_path: lambda must be > 0");
  for (double a : a_values)
    if (!(a > 0.0))
      throw std::invalid_argument("verify_sample_path: a must be > 0");

  std::vector<double> sign_list;
  if (signs >= 0) sign_list.push_back(1.0);
  if (signs <= 0) sign_list.push_back(-1.0);

  std::vector<SupCollector::Combo> combos;
  for (double s : sign_list)
    for (double l : lambdas)
      combos.push_back({s, 0.5 * l * std::exp(l * spec.jump_bound())});

  const std::uint64_t n = ens.n_paths;
  // per-path sup statistic per (sign, lambda) combo
  std::vector<double> sup_slots(combos.size() * n);
  std::vector<std::uint8_t> censored(n, 0);

  const PathTally tally = run_ensemble(
      spec, x0, ens, nullptr, /*moments=*/true, nullptr,
      [&](int) { return SupCollector(spec.dimension(), combos, 0); },
      [&](std::uint64_t i, const SupCollector& c, const SimResult& res) {
        for (std::size_t j = 0; j < combos.size(); ++j)
          sup_slots[j * n + i] = c.best(j);
        censored[i] = res.terminal == Terminal::TruncatedRate ||
                      res.terminal == Terminal::TruncatedNorm;
      });

  McReport rep;
  rep.check = "sample_path";
  rep.model = spec.name();
  rep.n_paths = n;
  rep.censored_paths = tally.censored;
  rep.censored_fraction =
      static_cast<double>(tally.censored) / static_cast<double>(n);
  rep.audit_violations = tally.jump_bound_violations;
  rep.valid = tally.jump_bound_violations == 0;
  rep.inconclusive = tally.censored == n;

  std::size_t combo_idx = 0;
  for (double s : sign_list) {
    for (double l : lambdas) {
      for (double a : a_values) {
        std::uint64_t count = 0;
        for (std::uint64_t i = 0; i < n; ++i) {
          bool exceed = sup_slots[combo_idx * n + i] >= a;
          if (censored[i] && ens.censoring == Censoring::TreatAsExceedance)
            exceed = true;
          count += exceed;
        }
        std::ostringstream label;
        label << "lambda=" << l << " a=" << a << " sign="
              << (s > 0 ? "+" : "-");
        rep.results.push_back(frequency_result(
            label.str(), count, n, std::exp(-l * a), bound_override));
      }
      ++combo_idx;
    }
  }
  rep.runtime_seconds = elapsed_seconds(t_start);
  return rep;
}

// ---------------------------------------------------------------------------
// martingale checks

namespace {

std::function<double(double, StateView)> make_exp_compensator_integrand(
    const ProcessSpec& spec, double lambda) {
  // e^(-lambda x) mu(e^(lambda X)) via the chain rule on the transformed
  // process; buffers are captured mutably, so each engine (thread) gets
  // its own copy of this closure.
  ProcessSpec transformed = transform_process(
      spec, [lambda](double v) { return std::exp(lambda * v); },
      [lambda](double v) { return lambda * std::exp(lambda * v); });
  return [transformed, lambda, m1 = 0.0, scratch = 0.0,
          dx = 0.0](double t, StateView x) mutable -> double {
    m1 = 0.0;
    transformed.jump_moments(t, x, MutStateView(&m1, 1), {},
                             MutStateView(&scratch, 1));
    double flow = 0.0;
    if (transformed.has_flow()) {
      transformed.flow_field(t, x, MutStateView(&dx, 1));
      flow = dx;
    }
    return std::exp(-lambda * x[0]) * (flow + m1);
  };
}

struct MartingaleSlots {
  std::vector<double> m_final;
  std::vector<double> q_final;
  std::vector<double> e_final;
  std::vector<std::uint8_t> ok;        // not censored
  std::vector<std::uint8_t> finite_e;  // E_T representable
};

MartingaleSlots run_martingale_ensemble(const ProcessSpec& spec, StateView x0,
                                        const EnsembleConfig& ens,
                                        std::optional<double> lambda,
                                        PathTally* tally_out) {
  const std::uint64_t n = ens.n_paths;
  MartingaleSlots s;
  s.m_final.resize(n);
  s.q_final.resize(n);
  s.e_final.assign(n, 1.0);
  s.ok.resize(n);
  s.finite_e.assign(n, 1);

  std::vector<std::function<double(double, StateView)>> extras;
  if (lambda) extras.push_back(make_exp_compensator_integrand(spec, *lambda));

  const PathTally tally = run_ensemble(
      spec, x0, ens, nullptr, /*moments=*/true, lambda ? &extras : nullptr,
      [&](int) {
        return SupCollector(spec.dimension(), {}, lambda ? 1 : 0);
      },
      [&](std::uint64_t i, const SupCollector& c, const SimResult& res) {
        const double m = c.martingale_final();
        s.m_final[i] = m;
        s.q_final[i] = m * m - c.qvar_final();
        s.ok[i] = res.terminal == Terminal::Horizon;
        if (lambda) {
          const double expo =
              *lambda * (c.x_final() - c.x0()) - c.extra_final(0);
          const double e = std::exp(expo);
          s.e_final[i] = e;
          s.finite_e[i] = std::isfinite(e) ? 1 : 0;
        }
      });
  if (tally_out) *tally_out = tally;
  return s;
}

McReport make_martingale_report(const ProcessSpec& spec,
                                const EnsembleConfig& ens,
                                const MartingaleSlots& s, PathTally tally,
                                const std::string& check, bool with_m,
                                bool with_q, std::optional<double> lambda) {
  McReport rep;
  rep.check = check;
  rep.model = spec.name();
  rep.n_paths = ens.n_paths;
  rep.censored_paths = tally.censored;
  rep.censored_fraction =
      static_cast<double>(tally.censored) / static_cast<double>(ens.n_paths);
  rep.audit_violations = tally.jump_bound_violations;
  rep.valid = tally.jump_bound_violations == 0;
  rep.inconclusive = tally.censored == ens.n_paths;

  if (with_m) {
    auto [mean, se] = mean_stderr(s.m_final, s.ok);
    rep.results.push_back(mean_result("mean M_T", mean, se, 0.0, 4.0));
  }
  if (with_q) {
    auto [mean, se] = mean_stderr(s.q_final, s.ok);
    rep.results.push_back(
        mean_result("mean M_T^2 - <X>_T", mean, se, 0.0, 4.0));
  }
  if (lambda) {
    std::vector<std::uint8_t> keep(s.ok.size());
    std::uint64_t overflow = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      keep[i] = s.ok[i] && s.finite_e[i];
      if (s.ok[i] && !s.finite_e[i]) ++overflow;
    }
    rep.overflow_paths = overflow;
    auto [mean, se] = mean_stderr(s.e_final, keep);
    std::ostringstream label;
    label << "mean E_T(lambda=" << *lambda << ")";
    rep.results.push_back(mean_result(label.str(), mean, se, 1.0, 4.0));
  }
  return rep;
}

}  // namespace

McReport exponential_martingale_check(const ProcessSpec& spec, StateView x0,
                                      const EnsembleConfig& ens,
                                      double lambda) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!std::isfinite(lambda))
    throw std::invalid_argument("exponential_martingale_check: lambda not finite");
  if (lambda == 0.0) {
    // E(X,0) == 1 identically; still run to honor the interface
  }
  PathTally tally;
  const auto slots = run_martingale_ensemble(spec, x0, ens, lambda, &tally);
  McReport rep = make_martingale_report(spec, ens, slots, tally,
                                        "exponential_martingale", false, false,
                                        lambda);
  rep.runtime_seconds = elapsed_seconds(t0);
  return rep;
}

McReport quadratic_martingale_check(const ProcessSpec& spec, StateView x0,
                                    const EnsembleConfig& ens) {
  const auto t0 = std::chrono::steady_clock::now();
  PathTally tally;
  const auto slots = run_martingale_ensemble(spec, x0, ens, {}, &tally);
  McReport rep = make_martingale_report(spec, ens, slots, tally,
                                        "quadratic_martingale", false, true,
                                        {});
  rep.runtime_seconds = elapsed_seconds(t0);
  return rep;
}

McReport martingale_mean_check(const ProcessSpec& spec, StateView x0,
                               const EnsembleConfig& ens) {
  const auto t0 = std::chrono::steady_clock::now();
  PathTally tally;
  const auto slots = run_martingale_ensemble(spec, x0, ens, {}, &tally);
  McReport rep = make_martingale_report(spec, ens, slots, tally,
                                        "martingale_mean", true, false, {});
  rep.runtime_seconds = elapsed_seconds(t0);
  return rep;
}

McReport martingale_suite(const ProcessSpec& spec, StateView x0,
                          const EnsembleConfig& ens, double lambda) {
  const auto t0 = std::chrono::steady_clock::now();
  PathTally tally;
  const auto slots = run_martingale_ensemble(spec, x0, ens, lambda, &tally);
  McReport rep = make_martingale_report(spec, ens, slots, tally,
                                        "martingale_suite", true, true,
                                        lambda);
  rep.runtime_seconds = elapsed_seconds(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// lemma verification

namespace {

// Samples a lemma's drift/diffusivity hypotheses at grid times; exact jump
// bound violations are tallied by the engine itself.
class AuditedSupCollector : public PathObserver {
 public:
  using Audit = std::function<bool(double, StateView, const double*,
                                   const double*)>;
  // audit(t, x, mu, sigma2) -> hypotheses hold here

  AuditedSupCollector(const ProcessSpec& spec, Audit audit)
      : spec_(spec), audit_(std::move(audit)), d_(spec.dimension()),
        mu_(d_), s2_(d_), scratch_(d_), flow_(d_) {}

  void reset(std::uint64_t) {
    sup_ = -std::numeric_limits<double>::infinity();
    sup_abs_ = 0.0;
    violations_ = 0;
    t_final_ = 0.0;
    x_final_ = 0.0;
    qvar_final_ = 0.0;
  }

  void sample(double t, StateView x, StateView, StateView iqvar,
              std::span<const double>, SampleFlag flag) override {
    if (x[0] > sup_) sup_ = x[0];
    const double ax = std::abs(x[0]);
    if (ax > sup_abs_) sup_abs_ = ax;
    t_final_ = t;
    x_final_ = x[0];
    if (!iqvar.empty()) qvar_final_ = iqvar[0];
    if (audit_ && flag == SampleFlag::Grid) {
      spec_.jump_moments(t, x, mu_, s2_, scratch_);
      if (spec_.has_flow()) {
        spec_.flow_field(t, x, flow_);
        for (int j = 0; j < d_; ++j) mu_[j] += flow_[j];
      }
      if (!audit_(t, x, mu_.data(), s2_.data())) ++violations_;
    }
  }

  double sup() const { return sup_; }
  double sup_abs() const { return sup_abs_; }
  double x_final() const { return x_final_; }
  double qvar_final() const { return qvar_final_; }
  std::uint64_t violations() const { return violations_; }

 private:
  ProcessSpec spec_;
  Audit audit_;
  int d_;
  std::vector<double> mu_, s2_, scratch_, flow_;
  double sup_ = 0.0, sup_abs_ = 0.0, t_final_ = 0.0, x_final_ = 0.0,
         qvar_final_ = 0.0;
  std::uint64_t violations_ = 0;
};

struct LemmaRun {
  std::string label;
  double bound_raw = 1.0;
  SimConfig sim;
  StopCondition stop;
  bool use_stop = false;
  enum class Event { NeverHit, Hit } event = Event::Hit;
  AuditedSupCollector::Audit audit;
};

constexpr double kAuditTol = 1e-9;

}  // namespace

McReport verify_lemma(const ProcessSpec& spec, const EnsembleConfig& ens,
                      const LemmaCase& lemma_case,
                      std::optional<double> bound_override) {
  const auto t_begin = std::chrono::steady_clock::now();
  LemmaRun run;
  run.sim = ens.sim;
  std::vector<double> x0_state{0.0};
  std::string check;

  if (const auto* lc = std::get_if<LinearDriftCase>(&lemma_case)) {
    check = "lemma_linear_drift";
    if (!(lc->y >= 2.0) || !(lc->x0 > 0.0))
      throw std::invalid_argument("linear drift: need y >= 2 and x0 > 0");
    const double c_eff =
        lc->big_c ? std::max(*lc->big_c, lc->c_delta) : lc->c_delta;

    // Per-path X_0: deterministic, or cycled through the supplied pool
    // (the uniform distribution on the pool). With a random X_0 the bound
    // is the average of the deterministic kernel over the starts used,
    // realizing the condition-then-integrate form of the estimate.
    const std::uint64_t n = ens.n_paths;
    auto x0_of = [&](std::uint64_t i) {
      if (lc->x0_pool.empty()) return lc->x0;
      return lc->x0_pool[i % lc->x0_pool.size()];
    };
    double bound_sum = 0.0;
    for (std::uint64_t i = 0; i < n; ++i)
      bound_sum += bounds::linear_drift_bound(lc->y, x0_of(i), c_eff).raw;
    run.bound_raw = bound_sum / static_cast<double>(n);

    run.sim.horizon = lc->horizon;
    const double ell = lc->ell, y = lc->y;
    // audit: non-decreasing with mu <= ell * x
    run.audit = [ell](double, StateView x, const double* mu, const double*) {
      return mu[0] <= ell * x[0] * (1.0 + kAuditTol) + kAuditTol;
    };

    // sup of Y_t = X_t e^(-ell t)/X_0 needs its own observer
    class YCollector : public PathObserver {
     public:
      YCollector(const ProcessSpec& s, double ell,
                 AuditedSupCollector::Audit audit)
          : inner_(s, std::move(audit)), ell_(ell) {}
      void set_x0(double x0) { x0_ = x0; }
      void reset(std::uint64_t i) {
        inner_.reset(i);
        sup_y_ = 0.0;
        min_jump_ = 0.0;
      }
      void sample(double t, StateView x, StateView imu, StateView iqv,
                  std::span<const double> ie, SampleFlag flag) override {
        inner_.sample(t, x, imu, iqv, ie, flag);
        const double yv = x[0] * std::exp(-ell_ * t) / x0_;
        if (yv > sup_y_) sup_y_ = yv;
      }
      void event(double, double, StateView pre, StateView post) override {
        min_jump_ = std::min(min_jump_, post[0] - pre[0]);
      }
      double sup_y() const { return sup_y_; }
      double min_jump() const { return min_jump_; }
      std::uint64_t violations() const { return inner_.violations(); }

     private:
      AuditedSupCollector inner_;
      double ell_, x0_ = 1.0, sup_y_ = 0.0, min_jump_ = 0.0;
    };

    std::vector<std::uint8_t> exceed(n, 0), censored(n, 0);
    std::vector<std::uint64_t> audit_slots(n, 0);

    // run the ensemble by hand: x0 varies per path
    SimConfig base = run.sim.resolved();
    base.seed = ens.sim.seed;
    base.debug_checks = false;
    const int n_threads = static_cast<int>(
        std::min<std::uint64_t>(resolve_threads(ens.threads), n));
    std::vector<PathTally> tallies(n_threads);
    std::vector<std::exception_ptr> errors(n_threads);
    auto worker = [&](int ti, std::uint64_t lo, std::uint64_t hi) {
      try {
        Engine engine(spec);
        YCollector collector(spec, ell, run.audit);
        SimConfig cfg = base;
        for (std::uint64_t i = lo; i < hi; ++i) {
          cfg.path_index = base.path_index + i;
          const double x0i = x0_of(i);
          collector.set_x0(x0i);
          collector.reset(i);
          const SimResult res =
              engine.run(StateView(&x0i, 1), cfg, nullptr, &collector);
          if (res.terminal == Terminal::TruncatedRate ||
              res.terminal == Terminal::TruncatedNorm) {
            ++tallies[ti].censored;
            censored[i] = 1;
          }
          tallies[ti].jump_bound_violations += res.jump_bound_violations;
          exceed[i] = collector.sup_y() >= y;
          audit_slots[i] =
              collector.violations() + (collector.min_jump() < 0.0 ? 1 : 0);
        }
      } catch (...) {
        errors[ti] = std::current_exception();
      }
    };
    if (n_threads == 1) {
      worker(0, 0, n);
    } else {
      std::vector<std::thread> pool;
      const std::uint64_t chunk = (n + n_threads - 1) / n_threads;
      for (int ti = 0; ti < n_threads; ++ti) {
        const std::uint64_t lo = ti * chunk;
        const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back(worker, ti, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    PathTally tally;
    for (const auto& tl : tallies) {
      tally.censored += tl.censored;
      tally.jump_bound_violations += tl.jump_bound_violations;
    }

    McReport rep;
    rep.check = check;
    rep.model = spec.name();
    rep.n_paths = n;
    rep.censored_paths = tally.censored;
    rep.censored_fraction =
        static_cast<double>(tally.censored) / static_cast<double>(n);
    std::uint64_t audit_total = tally.jump_bound_violations;
    for (auto v : audit_slots) audit_total += v;
    rep.audit_violations = audit_total;
    rep.valid = audit_total == 0;
    rep.inconclusive = tally.censored == n;
    std::uint64_t count = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      bool e = exceed[i] != 0;
      if (censored[i] && ens.censoring == Censoring::TreatAsExceedance)
        e = true;
      count += e;
    }
    std::ostringstream label;
    label << "P(sup Y >= " << y << ")";
    rep.results.push_back(
        frequency_result(label.str(), count, n, run.bound_raw, bound_override));
    rep.runtime_seconds = elapsed_seconds(t_begin);
    return rep;
  }

  // the four barrier/escape lemmas share one generic runner
  if (const auto* dc = std::get_if<DriftBarrierCase>(&lemma_case)) {
    check = "lemma_drift_barrier";
    auto b = bounds::drift_barrier_bound(dc->q);
    double k = dc->q.k;
    double bound = b.bound.raw;
    double horizon = k * b.t0;
    if (dc->long_horizon) {
      k = std::min(b.k_long, dc->k_cap);
      horizon = k * b.t0;
      bound = 3.0 * k * std::exp(-b.log_kappa);
    }
    if (!(dc->x0 <= 0.5 * dc->q.x))
      throw std::invalid_argument("drift barrier: requires x0 <= x/2");
    run.bound_raw = bound;
    run.sim.horizon = horizon;
    run.event = LemmaRun::Event::Hit;
    run.stop.level = dc->q.x;
    run.use_stop = true;
    x0_state[0] = dc->x0;
    std::ostringstream label;
    label << "P(sup X >= " << dc->q.x << " by t=" << horizon << ", k=" << k
          << ")";
    run.label = label.str();
    const auto q = dc->q;
    run.audit = [q](double, StateView x, const double* mu, const double* s2) {
      if (!(x[0] > 0.0 && x[0] < q.x)) return true;
      return mu[0] <= -q.mu * (1.0 - kAuditTol) + kAuditTol &&
             std::abs(mu[0]) <= q.c_mu * (1.0 + kAuditTol) + kAuditTol &&
             s2[0] <= q.sigma2 * (1.0 + kAuditTol) + kAuditTol;
    };
  } else if (const auto* de = std::get_if<DriftEscapeCase>(&lemma_case)) {
    check = "lemma_drift_escape";
    auto b = bounds::drift_escape_bound(de->q);
    if (!(de->x0 >= 0.0))
      throw std::invalid_argument("drift escape: requires x0 >= 0");
    run.bound_raw = b.bound.raw;
    run.sim.horizon = b.horizon;
    run.event = LemmaRun::Event::NeverHit;
    run.stop.level = de->q.x;
    run.use_stop = true;
    x0_state[0] = de->x0;
    std::ostringstream label;
    label << "P(sup X < " << de->q.x << " on [0," << b.horizon << "])";
    run.label = label.str();
    const auto q = de->q;
    run.audit = [q](double, StateView x, const double* mu, const double* s2) {
      if (!(x[0] < q.x)) return true;  // hypotheses needed below x only
      return mu[0] >= q.mu * (1.0 - kAuditTol) - kAuditTol &&
             s2[0] <= q.sigma2 * (1.0 + kAuditTol) + kAuditTol;
    };
  } else if (const auto* nb = std::get_if<DiffusiveBarrierCase>(&lemma_case)) {
    check = "lemma_diffusive_barrier";
    if (!(nb->q.horizon > 0.0))
      throw std::invalid_argument("diffusive barrier: horizon must be set");
    if (!(nb->x0 <= 0.0))
      throw std::invalid_argument("diffusive barrier: requires x0 <= 0");
    auto b = bounds::diffusive_barrier_bound(nb->q);
    run.bound_raw = b.bound.raw;
    run.sim.horizon = nb->q.horizon;
    run.event = LemmaRun::Event::Hit;
    run.stop.level = nb->q.x;
    run.use_stop = true;
    x0_state[0] = nb->x0;
    std::ostringstream label;
    label << "P(sup X >= " << nb->q.x << " on [0," << nb->q.horizon << "])";
    run.label = label.str();
    const auto q = nb->q;
    run.audit = [q](double, StateView x, const double* mu, const double* s2) {
      if (!(x[0] < q.x)) return true;
      (void)s2;
      return mu[0] <= kAuditTol;
    };
  } else if (const auto* ne = std::get_if<DiffusiveEscapeCase>(&lemma_case)) {
    check = "lemma_diffusive_escape";
    auto b = bounds::diffusive_escape_bound(ne->q);
    if (!(ne->x0 >= 0.0))
      throw std::invalid_argument("diffusive escape: requires x0 >= 0");
    run.bound_raw = b.bound.raw;
    run.sim.horizon = b.horizon;
    run.event = LemmaRun::Event::NeverHit;
    const double level = ne->q.x;
    run.stop.predicate = [level](double, StateView x) {
      return std::abs(x[0]) >= level;
    };
    run.use_stop = true;
    x0_state[0] = ne->x0;
    std::ostringstream label;
    label << "P(sup |X| < " << level << " on [0," << b.horizon << "])";
    run.label = label.str();
    const auto q = ne->q;
    run.audit = [q](double, StateView x, const double* mu, const double* s2) {
      if (!(std::abs(x[0]) < q.x)) return true;
      return std::abs(mu[0]) <= q.c_mu * (1.0 + kAuditTol) + kAuditTol &&
             s2[0] >= q.sigma2 * (1.0 - kAuditTol) - kAuditTol;
    };
  } else {
    throw std::logic_error("verify_lemma: unhandled case");
  }

  const std::uint64_t n = ens.n_paths;
  std::vector<std::uint8_t> exceed(n, 0), censored(n, 0);
  std::vector<std::uint64_t> audit_slots(n, 0);

  EnsembleConfig local = ens;
  local.sim = run.sim;
  const PathTally tally = run_ensemble(
      spec, x0_state, local, run.use_stop ? &run.stop : nullptr,
      /*moments=*/true, nullptr,
      [&](int) { return AuditedSupCollector(spec, run.audit); },
      [&](std::uint64_t i, const AuditedSupCollector& c, const SimResult& res) {
        const bool truncated = res.terminal == Terminal::TruncatedRate ||
                               res.terminal == Terminal::TruncatedNorm;
        censored[i] = truncated;
        const bool hit = res.hit_time.has_value() ||
                         res.terminal == Terminal::StoppedByPredicate;
        exceed[i] = run.event == LemmaRun::Event::Hit ? hit
                                                      : (!hit && !truncated);
        audit_slots[i] = c.violations();
      });

  McReport rep;
  rep.check = check;
  rep.model = spec.name();
  rep.n_paths = n;
  rep.censored_paths = tally.censored;
  rep.censored_fraction =
      static_cast<double>(tally.censored) / static_cast<double>(n);
  std::uint64_t audit_total = tally.jump_bound_violations;
  for (auto v : audit_slots) audit_total += v;
  rep.audit_violations = audit_total;
  rep.valid = audit_total == 0;
  rep.inconclusive = tally.censored == n;

  std::uint64_t count = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    bool e = exceed[i] != 0;
    if (censored[i] && ens.censoring == Censoring::TreatAsExceedance) e = true;
    count += e;
  }
  rep.results.push_back(
      frequency_result(run.label, count, n, run.bound_raw, bound_override));
  rep.runtime_seconds = elapsed_seconds(t_begin);
  return rep;
}

// ---------------------------------------------------------------------------
// flows and the logistic model

double flow_time(double x0, double x, double lambda, double delta) {
  if (!(delta > 0.0))
    throw std::domain_error("flow_time: requires delta > 0");
  if (x == x0 && x > 0.0) return 0.0;
  if (!(x > 0.0 && x < x0))
    throw std::domain_error("flow_time: requires 0 < x <= x0");
  return (std::log(x0 / x) -
          std::log((delta + lambda * x0) / (delta + lambda * x))) /
         delta;
}

double flow_time_rk4_oracle(double x0, double x, double lambda, double delta,
                            double step) {
  if (!(delta > 0.0) || !(x > 0.0 && x < x0))
    throw std::domain_error("flow_time_rk4_oracle: bad arguments");
  auto f = [lambda, delta](double v) { return -v * (delta + lambda * v); };
  auto rk4 = [&](double v, double h) {
    const double k1 = f(v);
    const double k2 = f(v + 0.5 * h * k1);
    const double k3 = f(v + 0.5 * h * k2);
    const double k4 = f(v + h * k3);
    return v + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
  };
  if (step <= 0.0) {
    // aim well below 1e-8 relative error for the global RK4 error
    step = std::min(1e-3 / (delta + lambda * x0), 1e-3 / delta);
  }
  double t = 0.0, v = x0;
  while (v > x) {
    const double v_next = rk4(v, step);
    if (v_next <= x) {
      // bisect the crossing inside [t, t + step]
      double lo = 0.0, hi = step;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (rk4(v, mid) <= x)
          hi = mid;
        else
          lo = mid;
        if (hi - lo < 1e-16 * (t + step)) break;
      }
      return t + 0.5 * (lo + hi);
    }
    v = v_next;
    t += step;
    if (t > 1e12) throw std::runtime_error("flow_time_rk4_oracle: no crossing");
  }
  return t;
}

McReport verify_ode_approx(const ProcessSpec& spec, double x0,
                           const EnsembleConfig& ens,
                           const OdeApproxQuery& query,
                           std::optional<double> bound_override) {
  const auto t_begin = std::chrono::steady_clock::now();
  if (!(query.delta > 0.0))
    throw std::invalid_argument("verify_ode_approx: delta must be > 0");
  double c_rho = query.c_rho;
  if (!(c_rho > 0.0)) {
    if (!(query.c_q > 0.0) || query.r < 1 || query.n < 1)
      throw std::invalid_argument(
          "verify_ode_approx: need c_rho or (c_q, r, n)");
    c_rho = query.c_q * static_cast<double>(query.r) /
            static_cast<double>(query.n);
  }
  const SimConfig sim = ens.sim.resolved();
  const auto ob = bounds::ode_approx_bound(query.delta, c_rho,
                                           spec.jump_bound(), sim.horizon,
                                           query.lipschitz);

  ProcessSpec pair = models::with_fluid_companion(spec);
  const double x0s[2] = {x0, x0};

  const std::uint64_t n = ens.n_paths;
  std::vector<double> sup_dev(n);
  std::vector<std::uint8_t> censored(n, 0);
  std::vector<std::uint64_t> audit_slots(n, 0);

  // audit rho_t = q c_delta^2 <= c_rho along the path
  class DevCollector : public PathObserver {
   public:
    DevCollector(ProcessSpec pair, double c_rho)
        : pair_(std::move(pair)), c_rho_(c_rho) {}
    void reset(std::uint64_t) {
      sup_ = 0.0;
      violations_ = 0;
    }
    void sample(double t, StateView x, StateView, StateView,
                std::span<const double>, SampleFlag flag) override {
      const double dev = std::abs(x[0] - x[1]);
      if (dev > sup_) sup_ = dev;
      if (flag == SampleFlag::Grid) {
        const double rho =
            pair_.rate(t, x) * pair_.jump_bound() * pair_.jump_bound();
        if (rho > c_rho_ * (1.0 + kAuditTol)) ++violations_;
      }
    }
    double sup() const { return sup_; }
    std::uint64_t violations() const { return violations_; }

   private:
    ProcessSpec pair_;
    double c_rho_;
    double sup_ = 0.0;
    std::uint64_t violations_ = 0;
  };

  const PathTally tally = run_ensemble(
      pair, x0s, ens, nullptr, /*moments=*/false, nullptr,
      [&](int) { return DevCollector(pair, c_rho); },
      [&](std::uint64_t i, const DevCollector& c, const SimResult& res) {
        sup_dev[i] = c.sup();
        censored[i] = res.terminal == Terminal::TruncatedRate ||
                      res.terminal == Terminal::TruncatedNorm;
        audit_slots[i] = c.violations();
      });

  McReport rep;
  rep.check = "ode_approx";
  rep.model = spec.name();
  rep.n_paths = n;
  rep.censored_paths = tally.censored;
  rep.censored_fraction =
      static_cast<double>(tally.censored) / static_cast<double>(n);
  std::uint64_t audit_total = tally.jump_bound_violations;
  for (auto v : audit_slots) audit_total += v;
  rep.audit_violations = audit_total;
  rep.valid = audit_total == 0;
  rep.inconclusive = tally.censored == n;

  std::uint64_t count = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    bool e = sup_dev[i] >= ob.radius;
    if (censored[i] && ens.censoring == Censoring::TreatAsExceedance) e = true;
    count += e;
  }
  std::ostringstream label;
  label << "P(sup |x - phi| >= " << ob.radius << ")";
  rep.results.push_back(
      frequency_result(label.str(), count, n, ob.bound.raw, bound_override));
  rep.runtime_seconds = elapsed_seconds(t_begin);
  return rep;
}

LogisticPhaseResult logistic_intermediate_phase(
    const models::SisParams& params, double x0, const EnsembleConfig& ens,
    std::optional<double> bound_override) {
  const auto t_begin = std::chrono::steady_clock::now();
  if (!(params.lambda > 0.0))
    throw std::invalid_argument(
        "logistic_intermediate_phase: lambda must be > 0");
  if (!(params.delta() > 0.0))
    throw std::invalid_argument(
        "logistic_intermediate_phase: requires delta = 1 - lambda > 0");
  const double n = static_cast<double>(params.n);
  const double sqrt_n = std::sqrt(n);
  const double d0 = params.delta0();
  const double band_lo = std::pow(d0, 0.25) / sqrt_n;
  const double band_hi = std::pow(d0, 1.25) / sqrt_n;
  if (!(x0 >= band_lo && x0 <= band_hi))
    throw std::invalid_argument(
        "logistic_intermediate_phase: x0 outside the intermediate band");

  LogisticPhaseResult out;
  out.x_star = band_lo;  // delta0^(1/4) n^(-1/2)
  out.t_star = flow_time(x0, out.x_star, params.lambda, params.delta());
  const double threshold = std::pow(d0, 1.0 / 6.0) / sqrt_n;
  out.eps = 0.5 * threshold;
  out.gamma = n * out.eps * params.lambda / (1.0 + params.lambda);
  out.a = 0.5 * (out.eps - 1.0 / n);
  const auto kap = bounds::kappa({out.gamma, out.a, 1.0 / n});
  out.log_kappa = kap.log_kappa;
  out.kappa = kap.kappa;
  out.bound = bounds::make_prob_bound(6.0 * std::exp(-0.5 * kap.log_kappa));

  models::SisParams rescaled = params;
  rescaled.rescaled = true;
  ProcessSpec spec = models::sis(rescaled);
  // start on the lattice
  const double x0_lattice = std::round(x0 * n) / n;

  EnsembleConfig local = ens;
  local.sim.horizon = out.t_star;

  const std::uint64_t npaths = ens.n_paths;
  std::vector<double> final_dev(npaths);
  std::vector<std::uint8_t> censored(npaths, 0);

  const double x_star = out.x_star;
  const PathTally tally = run_ensemble(
      spec, StateView(&x0_lattice, 1), local, nullptr, /*moments=*/false,
      nullptr,
      [&](int) { return SupCollector(1, {}, 0); },
      [&](std::uint64_t i, const SupCollector& c, const SimResult& res) {
        final_dev[i] = std::abs(c.x_final() - x_star);
        censored[i] = res.terminal == Terminal::TruncatedRate ||
                      res.terminal == Terminal::TruncatedNorm;
      });

  McReport rep;
  rep.check = "logistic_intermediate_phase";
  rep.model = spec.name();
  rep.n_paths = npaths;
  rep.censored_paths = tally.censored;
  rep.censored_fraction =
      static_cast<double>(tally.censored) / static_cast<double>(npaths);
  rep.audit_violations = tally.jump_bound_violations;
  rep.valid = tally.jump_bound_violations == 0;
  rep.inconclusive = tally.censored == npaths;

  std::uint64_t count = 0;
  for (std::uint64_t i = 0; i < npaths; ++i) {
    bool e = final_dev[i] > threshold;
    if (censored[i] && ens.censoring == Censoring::TreatAsExceedance) e = true;
    count += e;
  }
  std::ostringstream label;
  label << "P(|x_t* - x*| > " << threshold << ")";
  rep.results.push_back(
      frequency_result(label.str(), count, npaths, out.bound.raw,
                       bound_override));
  rep.runtime_seconds = elapsed_seconds(t_begin);
  out.report = std::move(rep);
  return out;
}

}  // namespace jumpcalc::mc
