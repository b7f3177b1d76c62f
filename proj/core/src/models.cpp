#include "jumpcalc/models.hpp"

#include <cmath>
#include <stdexcept>

#include "jumpcalc/engine.hpp"

namespace jumpcalc::models {

namespace {

JumpKernel::Entry const_entry(WeightFn w, std::vector<double> disp) {
  JumpKernel::Entry e;
  e.weight = std::move(w);
  e.displacement = std::move(disp);
  return e;
}

}  // namespace

ProcessSpec poisson_counter(double rate) {
  if (!(rate >= 0.0))
    throw std::invalid_argument("poisson_counter: rate must be >= 0");
  ProcessSpec::Init init;
  init.name = "poisson(rate=" + std::to_string(rate) + ")";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [rate](StateView) { return rate; };
  init.kernel = JumpKernel::discrete(
      {const_entry([rate](StateView) { return rate; }, {1.0})});
  init.rate_constant_between_jumps = true;
  return ProcessSpec(std::move(init));
}

ProcessSpec birth_death(double birth, double death) {
  if (!(birth >= 0.0) || !(death >= 0.0))
    throw std::invalid_argument("birth_death: rates must be >= 0");
  ProcessSpec::Init init;
  init.name = "birth_death(b=" + std::to_string(birth) +
              ",d=" + std::to_string(death) + ")";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [birth, death](StateView) { return birth + death; };
  init.kernel = JumpKernel::discrete(
      {const_entry([birth](StateView) { return birth; }, {1.0}),
       const_entry([death](StateView) { return death; }, {-1.0})});
  init.rate_constant_between_jumps = true;
  return ProcessSpec(std::move(init));
}

ProcessSpec linear_birth(double ell) {
  if (!(ell >= 0.0))
    throw std::invalid_argument("linear_birth: ell must be >= 0");
  ProcessSpec::Init init;
  init.name = "linear_birth(ell=" + std::to_string(ell) + ")";
  init.dimension = 1;
  init.jump_bound = 1.0;
  init.rate = [ell](StateView x) { return ell * std::max(x[0], 0.0); };
  init.kernel = JumpKernel::discrete({const_entry(
      [ell](StateView x) { return ell * std::max(x[0], 0.0); }, {1.0})});
  init.rate_constant_between_jumps = true;
  return ProcessSpec(std::move(init));
}

double sis_drift(double lambda, double x) {
  return lambda * x * (1.0 - x) - x;
}

double sis_diffusivity(std::uint64_t n, double lambda, double x) {
  return (lambda * x * (1.0 - x) + x) / static_cast<double>(n);
}

ProcessSpec sis(const SisParams& params) {
  if (params.n < 1) throw std::invalid_argument("sis: n must be >= 1");
  if (!(params.lambda >= 0.0))
    throw std::invalid_argument("sis: lambda must be >= 0");
  const double n = static_cast<double>(params.n);
  const double lambda = params.lambda;

  // Shared raw-chain rate formulas, evaluated at the particle count
  // X = n*x for the rescaled variant, so the two variants agree exactly.
  auto up_rate = [n, lambda](double count) {
    return std::max(lambda * count * (n - count) / n, 0.0);
  };
  auto down_rate = [](double count) { return std::max(count, 0.0); };

  ProcessSpec::Init init;
  init.dimension = 1;
  init.rate_constant_between_jumps = true;
  if (params.rescaled) {
    init.name = "sis(n=" + std::to_string(params.n) +
                ",lambda=" + std::to_string(lambda) + ",rescaled)";
    init.jump_bound = 1.0 / n;
    init.rate = [up_rate, down_rate, n](StateView x) {
      return up_rate(n * x[0]) + down_rate(n * x[0]);
    };
    init.kernel = JumpKernel::discrete(
        {const_entry([up_rate, n](StateView x) { return up_rate(n * x[0]); },
                     {1.0 / n}),
         const_entry(
             [down_rate, n](StateView x) { return down_rate(n * x[0]); },
             {-1.0 / n})});
  } else {
    init.name = "sis(n=" + std::to_string(params.n) +
                ",lambda=" + std::to_string(lambda) + ",raw)";
    init.jump_bound = 1.0;
    init.rate = [up_rate, down_rate](StateView x) {
      return up_rate(x[0]) + down_rate(x[0]);
    };
    init.kernel = JumpKernel::discrete(
        {const_entry([up_rate](StateView x) { return up_rate(x[0]); }, {1.0}),
         const_entry([down_rate](StateView x) { return down_rate(x[0]); },
                     {-1.0})});
  }
  return ProcessSpec(std::move(init));
}

ProcessSpec sis_deviation_process(const SisParams& params, double x0,
                                  bool time_changed) {
  if (!(params.delta() > 0.0))
    throw std::invalid_argument(
        "sis_deviation_process: requires delta = 1 - lambda > 0");
  if (!(x0 >= 0.0 && x0 <= 1.0))
    throw std::invalid_argument("sis_deviation_process: x0 must be in [0,1]");
  const double n = static_cast<double>(params.n);
  const double lambda = params.lambda;
  const double delta = params.delta();

  auto up_rate = [n, lambda](double count) {
    return std::max(lambda * count * (n - count) / n, 0.0);
  };
  auto down_rate = [](double count) { return std::max(count, 0.0); };

  // State (x, phi): x is the jumping SIS proportion, phi the logistic flow
  // from the same x0, integrated alongside by the engine.
  ProcessSpec::Init init;
  init.name = "sis_deviation(n=" + std::to_string(params.n) +
              ",lambda=" + std::to_string(lambda) + ")";
  init.dimension = 2;
  init.jump_bound = 1.0 / n;
  init.rate = [up_rate, down_rate, n](StateView s) {
    return up_rate(n * s[0]) + down_rate(n * s[0]);
  };
  init.flow = [lambda](StateView s, MutStateView out) {
    out[0] = 0.0;
    out[1] = sis_drift(lambda, s[1]);
  };
  init.kernel = JumpKernel::discrete(
      {const_entry([up_rate, n](StateView s) { return up_rate(n * s[0]); },
                   {1.0 / n, 0.0}),
       const_entry([down_rate, n](StateView s) { return down_rate(n * s[0]); },
                   {-1.0 / n, 0.0})});
  // x has no derivative and the rate ignores phi
  init.rate_constant_between_jumps = true;
  ProcessSpec spec{std::move(init)};
  if (!time_changed) return spec;
  return rescale_time(spec, [delta, lambda](double, StateView s) {
    return delta + lambda * (s[0] + s[1]);
  });
}

ProcessSpec density_dependent(DensityRateFn q_fn, std::uint64_t n, int r,
                              double c_q) {
  if (!q_fn) throw std::invalid_argument("density_dependent: null rate");
  if (n < 1 || r < 1 || !(c_q > 0.0))
    throw std::invalid_argument("density_dependent: need n, r >= 1 and c_q > 0");
  const double nd = static_cast<double>(n);

  // total density rate with the declared-bound contract check
  auto total = [q_fn, r, c_q](double x) {
    double sum = 0.0;
    for (int l = -r; l <= r; ++l) {
      if (l == 0) continue;
      const double w = q_fn(x, l);
      if (!(w >= 0.0))
        throw std::runtime_error(
            "density_dependent: rate contribution negative or non-finite");
      sum += w;
    }
    if (sum > c_q * (1.0 + 1e-12))
      throw ContractViolation(
          "density_dependent: declared bound c_q exceeded at a state");
    return sum;
  };

  ProcessSpec::Init init;
  init.name = "density_dependent(n=" + std::to_string(n) +
              ",r=" + std::to_string(r) + ")";
  init.dimension = 1;
  init.jump_bound = static_cast<double>(r) / nd;
  init.rate = [total, nd](StateView x) { return nd * total(x[0]); };
  std::vector<JumpKernel::Entry> entries;
  for (int l = -r; l <= r; ++l) {
    if (l == 0) continue;
    entries.push_back(const_entry(
        [q_fn, l, nd](StateView x) { return nd * q_fn(x[0], l); },
        {static_cast<double>(l) / nd}));
  }
  init.kernel = JumpKernel::discrete(std::move(entries));
  init.rate_constant_between_jumps = true;
  return ProcessSpec(std::move(init));
}

ProcessSpec with_fluid_companion(const ProcessSpec& base) {
  if (base.dimension() != 1)
    throw std::invalid_argument("with_fluid_companion: base must be scalar");
  if (base.has_clock())
    throw std::invalid_argument("with_fluid_companion: clocked base unsupported");

  ProcessSpec b = base;
  ProcessSpec::Init init;
  init.name = base.name() + "+fluid";
  init.dimension = 2;
  init.jump_bound = base.jump_bound();
  init.rate = [b](StateView s) { return b.rate(0.0, s.subspan(0, 1)); };
  init.flow = [b](StateView s, MutStateView out) {
    // x keeps the base derivative, phi follows the base drift field
    double dphi = 0.0, scratch = 0.0;
    b.jump_moments(0.0, s.subspan(1, 1), MutStateView(&dphi, 1), {},
                   MutStateView(&scratch, 1));
    if (b.has_flow()) {
      double dx = 0.0;
      b.flow_field(0.0, s.subspan(0, 1), MutStateView(&dx, 1));
      out[0] = dx;
      double dflow = 0.0;
      b.flow_field(0.0, s.subspan(1, 1), MutStateView(&dflow, 1));
      dphi += dflow;
    } else {
      out[0] = 0.0;
    }
    out[1] = dphi;
  };
  const JumpKernel& k = base.kernel();
  if (k.is_discrete()) {
    std::vector<JumpKernel::Entry> entries;
    for (std::size_t i = 0; i < k.entries().size(); ++i) {
      JumpKernel::Entry e;
      WeightFn w = k.entries()[i].weight;
      e.weight = [w](StateView s) { return w(s.subspan(0, 1)); };
      JumpKernel kcopy = k;
      e.displacement_fn = [kcopy, i](StateView s, MutStateView out) {
        double d = 0.0;
        kcopy.entry_displacement(i, s.subspan(0, 1), MutStateView(&d, 1));
        out[0] = d;
        out[1] = 0.0;
      };
      entries.push_back(std::move(e));
    }
    init.kernel = JumpKernel::discrete(std::move(entries));
  } else {
    JumpKernel kcopy = k;
    init.kernel = JumpKernel::continuous(
        [kcopy](StateView s, double u, MutStateView out) {
          double d = 0.0;
          kcopy.sample(s.subspan(0, 1), u, 1.0, MutStateView(&d, 1));
          out[0] = d;
          out[1] = 0.0;
        },
        k.quadrature_nodes());
  }
  init.rate_constant_between_jumps =
      base.rate_constant_between_jumps() && !base.has_flow();
  return ProcessSpec(std::move(init));
}

}  // namespace jumpcalc::models
