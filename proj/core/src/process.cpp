#include "jumpcalc/process.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace jumpcalc {

namespace {

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t spec_fingerprint(const std::string& name, int dim,
                               double jump_bound, bool discrete,
                               std::size_t n_entries, bool clocked) {
  std::uint64_t h = fnv1a64(name.data(), name.size());
  h = fnv1a64(&dim, sizeof dim, h);
  h = fnv1a64(&jump_bound, sizeof jump_bound, h);
  unsigned char tag[3] = {static_cast<unsigned char>(discrete),
                          static_cast<unsigned char>(clocked),
                          static_cast<unsigned char>(n_entries & 0xff)};
  return fnv1a64(tag, sizeof tag, h);
}

}  // namespace

// --- JumpKernel ----------------------------------------------------------

JumpKernel JumpKernel::discrete(std::vector<Entry> entries) {
  JumpKernel k;
  k.discrete_ = true;
  k.entries_ = std::move(entries);
  for (const auto& e : k.entries_) {
    if (!e.weight) throw std::invalid_argument("JumpKernel: entry without weight");
    if (!e.displacement_fn && e.displacement.empty())
      throw std::invalid_argument("JumpKernel: entry without displacement");
  }
  return k;
}

JumpKernel JumpKernel::continuous(JumpMapFn map, int quadrature_nodes) {
  if (!map) throw std::invalid_argument("JumpKernel: null continuous map");
  if (quadrature_nodes < 2)
    throw std::invalid_argument("JumpKernel: quadrature nodes must be >= 2");
  JumpKernel k;
  k.discrete_ = false;
  k.map_ = std::move(map);
  k.nodes_ = quadrature_nodes;
  return k;
}

void JumpKernel::entry_displacement(std::size_t i, StateView x,
                                    MutStateView out) const {
  const Entry& e = entries_[i];
  if (e.displacement_fn) {
    e.displacement_fn(x, out);
  } else {
    std::copy(e.displacement.begin(), e.displacement.end(), out.begin());
  }
}

void JumpKernel::rate_moments(StateView x, double q, MutStateView m1,
                              MutStateView m2, MutStateView scratch) const {
  std::fill(m1.begin(), m1.end(), 0.0);
  std::fill(m2.begin(), m2.end(), 0.0);
  if (discrete_) {
    // exact sums: q E[Delta] = sum_i w_i d_i, q E[Delta^2] = sum_i w_i d_i^2
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const double w = entries_[i].weight(x);
      if (!(w >= 0.0))
        throw std::runtime_error("jump kernel weight is negative or non-finite");
      if (w == 0.0) continue;
      entry_displacement(i, x, scratch);
      for (std::size_t j = 0; j < m1.size(); ++j) m1[j] += w * scratch[j];
      for (std::size_t j = 0; j < m2.size(); ++j)
        m2[j] += w * scratch[j] * scratch[j];
    }
  } else {
    // composite midpoint over u in [0,1]
    const double inv_n = 1.0 / nodes_;
    for (int k = 0; k < nodes_; ++k) {
      const double u = (k + 0.5) * inv_n;
      map_(x, u, scratch);
      for (std::size_t j = 0; j < m1.size(); ++j) m1[j] += scratch[j];
      for (std::size_t j = 0; j < m2.size(); ++j)
        m2[j] += scratch[j] * scratch[j];
    }
    for (std::size_t j = 0; j < m1.size(); ++j) m1[j] *= q * inv_n;
    for (std::size_t j = 0; j < m2.size(); ++j) m2[j] *= q * inv_n;
  }
}

void JumpKernel::sample(StateView x, double u, double q,
                        MutStateView out) const {
  if (!discrete_) {
    map_(x, u, out);
    return;
  }
  // Markov-chain embedding: entry i is selected when
  // c_{i-1} < u <= c_i with c_i = (w_1 + ... + w_i)/q.
  const double threshold = u * q;
  double cum = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    cum += entries_[i].weight(x);
    if (threshold <= cum && cum > 0.0) {
      entry_displacement(i, x, out);
      return;
    }
  }
  // residual mass (weights did not exhaust q): no jump
  std::fill(out.begin(), out.end(), 0.0);
}

// --- ProcessSpec ----------------------------------------------------------

ProcessSpec::ProcessSpec(Init init) {
  if (init.dimension < 1)
    throw std::invalid_argument("ProcessSpec: dimension must be >= 1");
  if (!(init.jump_bound > 0.0))
    throw std::invalid_argument("ProcessSpec: jump bound c_delta must be > 0");
  if (!init.rate) throw std::invalid_argument("ProcessSpec: missing rate q");
  for (const auto& e : init.kernel.entries()) {
    if (!e.displacement_fn &&
        e.displacement.size() != static_cast<std::size_t>(init.dimension))
      throw std::invalid_argument(
          "ProcessSpec: kernel displacement dimension mismatch");
  }
  auto impl = std::make_shared<Impl>();
  impl->name = std::move(init.name);
  impl->dimension = init.dimension;
  impl->jump_bound = init.jump_bound;
  impl->rate = std::move(init.rate);
  impl->flow = std::move(init.flow);
  impl->kernel = std::move(init.kernel);
  impl->clock = std::move(init.clock);
  impl->rate_constant_between_jumps = init.rate_constant_between_jumps;
  impl->fingerprint = spec_fingerprint(
      impl->name, impl->dimension, impl->jump_bound, impl->kernel.is_discrete(),
      impl->kernel.entries().size(), static_cast<bool>(impl->clock));
  impl_ = std::move(impl);
}

double ProcessSpec::clock(double t, StateView x) const {
  if (!impl_->clock) return 1.0;
  const double c = impl_->clock(t, x);
  if (!(c > 0.0))
    throw std::runtime_error("time-change error: clock factor <= 0 or non-finite");
  return c;
}

double ProcessSpec::rate(double t, StateView x) const {
  double q = impl_->rate(x);
  if (!std::isfinite(q) || q < 0.0)
    throw std::runtime_error("evaluation error: rate q(x) non-finite or negative in '" +
                             impl_->name + "'");
  if (impl_->clock) q /= clock(t, x);
  return q;
}

void ProcessSpec::flow_field(double t, StateView x, MutStateView out) const {
  if (!impl_->flow) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  impl_->flow(x, out);
  for (double v : out)
    if (!std::isfinite(v))
      throw std::runtime_error(
          "evaluation error: derivative D(x) non-finite in '" + impl_->name +
          "'");
  if (impl_->clock) {
    const double c = clock(t, x);
    for (double& v : out) v /= c;
  }
}

void ProcessSpec::jump_moments(double t, StateView x, MutStateView m1,
                               MutStateView m2, MutStateView scratch) const {
  const double q = impl_->rate(x);
  if (!std::isfinite(q) || q < 0.0)
    throw std::runtime_error("evaluation error: rate q(x) non-finite or negative in '" +
                             impl_->name + "'");
  impl_->kernel.rate_moments(x, q, m1, m2, scratch);
  if (impl_->clock) {
    const double c = clock(t, x);
    for (double& v : m1) v /= c;
    for (double& v : m2) v /= c;
  }
}

std::vector<double> ProcessSpec::drift(StateView x, double t) const {
  const int d = dimension();
  std::vector<double> mu(d, 0.0), scratch(d, 0.0);
  jump_moments(t, x, mu, {}, scratch);
  if (has_flow()) {
    std::vector<double> dx(d, 0.0);
    flow_field(t, x, dx);
    for (int j = 0; j < d; ++j) mu[j] += dx[j];
  }
  return mu;
}

std::vector<double> ProcessSpec::diffusivity(StateView x, double t) const {
  const int d = dimension();
  std::vector<double> s2(d, 0.0), scratch(d, 0.0);
  jump_moments(t, x, {}, s2, scratch);
  return s2;
}

DriftReport ProcessSpec::drift_report(StateView x, double t) const {
  DriftReport r;
  r.mu = drift(x, t);
  r.sigma2 = diffusivity(x, t);
  r.rho = rate(t, x) * jump_bound() * jump_bound();
  return r;
}

// --- calculus operations --------------------------------------------------

double covariability(const ProcessSpec& spec_x, const ProcessSpec& spec_y,
                     StateView x, int coord_x, int coord_y) {
  const double qx = spec_x.rate(0.0, x);
  const double qy = spec_y.rate(0.0, x);
  if (std::abs(qx - qy) > 1e-9 * std::max({1.0, qx, qy}))
    throw std::invalid_argument(
        "coupling error: covariability requires a common rate q");
  const double q = qx;
  const auto& kx = spec_x.kernel();
  const auto& ky = spec_y.kernel();

  std::vector<double> dx(spec_x.dimension()), dy(spec_y.dimension());

  if (kx.is_discrete() && ky.is_discrete()) {
    if (q == 0.0) return 0.0;
    // Coupled through the same u: merge both cumulative-threshold
    // partitions of [0,1] and integrate the displacement product exactly.
    auto breakpoints = [&](const JumpKernel& k) {
      std::vector<double> cuts{0.0};
      double cum = 0.0;
      for (const auto& e : k.entries()) {
        cum += e.weight(x);
        cuts.push_back(std::min(cum / q, 1.0));
      }
      if (cuts.back() < 1.0) cuts.push_back(1.0);
      return cuts;
    };
    std::vector<double> cuts = breakpoints(kx);
    for (double c : breakpoints(ky)) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double len = cuts[i + 1] - cuts[i];
      if (len <= 0.0) continue;
      const double u = 0.5 * (cuts[i] + cuts[i + 1]);
      kx.sample(x, u, q, dx);
      ky.sample(x, u, q, dy);
      acc += len * dx[coord_x] * dy[coord_y];
    }
    return q * acc;
  }

  // quadrature fallback when either side is continuous
  const int nodes = std::max({kx.quadrature_nodes(), ky.quadrature_nodes(), 2});
  double acc = 0.0;
  for (int k = 0; k < nodes; ++k) {
    const double u = (k + 0.5) / nodes;
    kx.sample(x, u, q, dx);
    ky.sample(x, u, q, dy);
    acc += dx[coord_x] * dy[coord_y];
  }
  return q * acc / nodes;
}

double product_drift(double mu_x, double mu_y, double x_value, double y_value,
                     double sigma_xy) {
  const double v = mu_x * y_value + x_value * mu_y + sigma_xy;
  if (!std::isfinite(v))
    throw std::invalid_argument("product_drift: non-finite input");
  return v;
}

double taylor_drift_gap_bound(double sigma2, double f_second_sup) {
  if (!(sigma2 >= 0.0) || !(f_second_sup >= 0.0))
    throw std::domain_error(
        "taylor_drift_gap_bound: sigma2 and sup|f''| must be nonnegative");
  return 0.5 * sigma2 * f_second_sup;
}

ProcessSpec transform_process(const ProcessSpec& spec,
                              std::function<double(double)> f,
                              std::function<double(double)> fprime,
                              std::optional<double> jump_bound_hint) {
  if (spec.dimension() != 1)
    throw std::invalid_argument("transform_process: requires a scalar process");
  if (!f || !fprime)
    throw std::invalid_argument("transform_process: f and f' are required");

  auto eval_f = [f](double v) {
    const double y = f(v);
    if (!std::isfinite(y))
      throw std::runtime_error("transform error: f non-finite at a sampled point");
    return y;
  };

  ProcessSpec::Init init;
  init.name = spec.name() + "|transformed";
  init.dimension = 1;
  init.jump_bound = jump_bound_hint.value_or(spec.jump_bound());
  init.rate_constant_between_jumps = spec.rate_constant_between_jumps();

  // same q, evaluated at the base coordinate
  ProcessSpec base = spec;
  init.rate = [base](StateView x) { return base.rate(0.0, x); };

  if (spec.has_flow()) {
    init.flow = [base, fprime](StateView x, MutStateView out) {
      double dx = 0.0;
      base.flow_field(0.0, x, MutStateView(&dx, 1));
      out[0] = fprime(x[0]) * dx;
    };
  }

  const JumpKernel& k = spec.kernel();
  if (k.is_discrete()) {
    std::vector<JumpKernel::Entry> entries;
    entries.reserve(k.entries().size());
    for (std::size_t i = 0; i < k.entries().size(); ++i) {
      JumpKernel::Entry e;
      e.weight = k.entries()[i].weight;
      JumpKernel kcopy = k;
      e.displacement_fn = [kcopy, i, eval_f](StateView x, MutStateView out) {
        double d = 0.0;
        kcopy.entry_displacement(i, x, MutStateView(&d, 1));
        out[0] = eval_f(x[0] + d) - eval_f(x[0]);
      };
      entries.push_back(std::move(e));
    }
    init.kernel = JumpKernel::discrete(std::move(entries));
  } else {
    JumpKernel kcopy = k;
    init.kernel = JumpKernel::continuous(
        [kcopy, eval_f](StateView x, double u, MutStateView out) {
          double d = 0.0;
          double q_unused = 1.0;
          kcopy.sample(x, u, q_unused, MutStateView(&d, 1));
          out[0] = eval_f(x[0] + d) - eval_f(x[0]);
        },
        k.quadrature_nodes());
  }
  return ProcessSpec(std::move(init));
}

ProcessSpec rescale_time(const ProcessSpec& spec, ClockFn clock) {
  if (!clock) throw std::invalid_argument("rescale_time: null clock");
  // Rebuild around the same raw pieces, composing clocks.
  ProcessSpec::Init init;
  init.name = spec.name() + "|timechange";
  init.dimension = spec.dimension();
  init.jump_bound = spec.jump_bound();
  init.kernel = spec.impl_->kernel;
  init.rate = spec.impl_->rate;
  init.flow = spec.impl_->flow;
  if (spec.impl_->clock) {
    ClockFn inner = spec.impl_->clock;
    init.clock = [inner, clock](double t, StateView x) {
      return inner(t, x) * clock(t, x);
    };
  } else {
    init.clock = std::move(clock);
  }
  init.rate_constant_between_jumps = false;  // clock may vary along flow
  return ProcessSpec(std::move(init));
}

}  // namespace jumpcalc
