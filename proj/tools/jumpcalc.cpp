// jumpcalc: simulate hybrid jump processes, evaluate concentration bounds,
// and verify them by Monte Carlo.
//
// Commands: simulate, verify, bounds, sweep. See README.md for the config
// schema and examples.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "jumpcalc/bounds.hpp"
#include "jumpcalc/engine.hpp"
#include "jumpcalc/io.hpp"
#include "jumpcalc/models.hpp"
#include "jumpcalc/montecarlo.hpp"
#include "jumpcalc/process.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace jumpcalc;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- config helpers --------------------------------------------------------

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return j;
}

double need_number(const json& j, const std::string& section,
                   const std::string& key) {
  if (!j.contains(key) || !j[key].is_number())
    throw UsageError("config: missing or non-numeric field '" + section + "." +
                     key + "'");
  return j[key].get<double>();
}

double opt_number(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw UsageError("config: field '" + key + "' must be numeric");
  return j[key].get<double>();
}

std::uint64_t fnv1a(const std::string& s,
                    std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

// --- model construction ----------------------------------------------------

ProcessSpec build_model(const json& m) {
  if (!m.contains("name") || !m["name"].is_string())
    throw UsageError("config: model.name is required");
  const std::string name = m["name"].get<std::string>();
  if (name == "poisson_counter")
    return models::poisson_counter(need_number(m, "model", "rate"));
  if (name == "birth_death")
    return models::birth_death(need_number(m, "model", "birth"),
                               need_number(m, "model", "death"));
  if (name == "linear_birth")
    return models::linear_birth(need_number(m, "model", "ell"));
  if (name == "sis") {
    models::SisParams p;
    p.n = static_cast<std::uint64_t>(need_number(m, "model", "n"));
    p.lambda = need_number(m, "model", "lambda");
    p.rescaled = m.value("rescaled", true);
    return models::sis(p);
  }
  if (name == "sis_deviation") {
    models::SisParams p;
    p.n = static_cast<std::uint64_t>(need_number(m, "model", "n"));
    p.lambda = need_number(m, "model", "lambda");
    return models::sis_deviation_process(p, need_number(m, "model", "x0"),
                                         m.value("time_changed", false));
  }
  throw UsageError("config: unknown model '" + name + "'");
}

std::vector<double> build_x0(const json& cfg, int dimension) {
  std::vector<double> x0;
  if (!cfg.contains("x0")) throw UsageError("config: x0 is required");
  if (cfg["x0"].is_number()) {
    x0.assign(1, cfg["x0"].get<double>());
  } else if (cfg["x0"].is_array()) {
    for (const auto& v : cfg["x0"]) x0.push_back(v.get<double>());
  } else {
    throw UsageError("config: x0 must be a number or array");
  }
  if (static_cast<int>(x0.size()) == 1 && dimension == 2)
    x0.assign(2, x0[0]);  // deviation-style pairs start at (x0, x0)
  if (static_cast<int>(x0.size()) != dimension)
    throw UsageError("config: x0 dimension mismatch");
  return x0;
}

SimConfig build_sim(const json& cfg, std::optional<std::uint64_t> seed_override) {
  if (!cfg.contains("sim")) throw UsageError("config: sim section is required");
  const json& s = cfg["sim"];
  SimConfig c;
  c.horizon = need_number(s, "sim", "horizon");
  c.dt_grid = opt_number(s, "dt_grid", 0.0);
  c.ode_step = opt_number(s, "ode_step", 0.0);
  c.hazard_tol = opt_number(s, "hazard_tol", 1e-10);
  c.q_max = opt_number(s, "q_max", 1e12);
  c.x_max = opt_number(s, "x_max", 1e12);
  c.seed = static_cast<std::uint64_t>(opt_number(s, "seed", 0.0));
  c.path_index = static_cast<std::uint64_t>(opt_number(s, "path_index", 0.0));
  if (seed_override) c.seed = *seed_override;
  return c.resolved();
}

mc::EnsembleConfig build_ensemble(const json& cfg, const SimConfig& sim,
                                  int threads_override) {
  mc::EnsembleConfig e;
  e.sim = sim;
  if (cfg.contains("ensemble")) {
    const json& s = cfg["ensemble"];
    e.n_paths = static_cast<std::uint64_t>(opt_number(s, "n_paths", 1000.0));
    e.threads = static_cast<int>(opt_number(s, "threads", 0.0));
    const std::string cens = s.value("censoring", "exceed");
    if (cens == "exceed")
      e.censoring = mc::Censoring::TreatAsExceedance;
    else if (cens == "exclude")
      e.censoring = mc::Censoring::Exclude;
    else
      throw UsageError("config: ensemble.censoring must be exceed|exclude");
  }
  if (threads_override > 0) e.threads = threads_override;
  return e;
}

// --- manifest ---------------------------------------------------------------

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config, std::uint64_t seed,
                    const std::string& started,
                    const std::vector<std::string>& outputs) {
  json m;
  m["schema"] = "jumpcalc.manifest/1";
  m["tool_version"] = kVersion;
  m["command"] = command;
  std::uint64_t h = fnv1a(config.dump());
  h = fnv1a(std::to_string(seed), h);
  h = fnv1a(kVersion, h);
  std::ostringstream hex;
  hex << "0x" << std::hex << h;
  m["config_hash"] = hex.str();
  m["seed"] = seed;
  m["started"] = started;
  m["finished"] = iso_now();
  m["outputs"] = outputs;
  std::ofstream f(out_dir / "manifest.json");
  f << m.dump(2) << '\n';
}

// --- subcommands -------------------------------------------------------------

int cmd_simulate(const json& cfg, const fs::path& out_dir,
                 std::optional<std::uint64_t> seed_override,
                 const std::string& started) {
  ProcessSpec spec = build_model(cfg.at("model"));
  const std::vector<double> x0 = build_x0(cfg, spec.dimension());
  const SimConfig sim = build_sim(cfg, seed_override);
  const Path path = simulate(spec, x0, sim);

  fs::create_directories(out_dir);
  const std::string csv_name = (out_dir / "path.csv").string();
  const std::string bin_name = (out_dir / "path.manifest").string();
  io::write_path_csv(path, csv_name);
  io::write_binary_manifest(io::manifest_of(path), bin_name);
  write_manifest(out_dir, "simulate", cfg, sim.seed, started,
                 {"path.csv", "path.manifest"});
  std::cout << "simulate: " << path.events.size() << " events, "
            << path.rows() << " rows, terminal " << to_string(path.terminal)
            << "\n";
  return 0;
}

mc::LemmaCase build_lemma_case(const json& q) {
  const std::string lemma = q.value("lemma", "");
  if (lemma == "linear_drift") {
    mc::LinearDriftCase c;
    c.y = need_number(q, "query", "y");
    c.x0 = need_number(q, "query", "x0");
    c.c_delta = need_number(q, "query", "c_delta");
    if (q.contains("C")) c.big_c = q["C"].get<double>();
    c.ell = opt_number(q, "ell", 1.0);
    c.horizon = need_number(q, "query", "horizon");
    if (q.contains("x0_pool"))
      for (const auto& v : q["x0_pool"]) c.x0_pool.push_back(v.get<double>());
    return c;
  }
  if (lemma == "drift_barrier") {
    mc::DriftBarrierCase c;
    c.q.x = need_number(q, "query", "x");
    c.q.c = need_number(q, "query", "c");
    c.q.mu = need_number(q, "query", "mu");
    c.q.c_mu = need_number(q, "query", "C_mu");
    c.q.sigma2 = need_number(q, "query", "sigma2");
    c.q.k = opt_number(q, "k", 1.0);
    c.x0 = need_number(q, "query", "x0");
    c.long_horizon = q.value("long_horizon", false);
    c.k_cap = opt_number(q, "k_cap", 1000.0);
    return c;
  }
  if (lemma == "drift_escape") {
    mc::DriftEscapeCase c;
    c.q.x = need_number(q, "query", "x");
    c.q.mu = need_number(q, "query", "mu");
    c.q.sigma2 = need_number(q, "query", "sigma2");
    c.q.b = need_number(q, "query", "b");
    c.q.eps = need_number(q, "query", "eps");
    c.q.c_delta = need_number(q, "query", "c_delta");
    c.x0 = need_number(q, "query", "x0");
    return c;
  }
  if (lemma == "diffusive_barrier") {
    mc::DiffusiveBarrierCase c;
    c.q.x = need_number(q, "query", "x");
    c.q.qvar = need_number(q, "query", "qvar");
    c.q.c_delta = need_number(q, "query", "c_delta");
    c.q.horizon = need_number(q, "query", "horizon");
    c.x0 = need_number(q, "query", "x0");
    return c;
  }
  if (lemma == "diffusive_escape") {
    mc::DiffusiveEscapeCase c;
    c.q.x = need_number(q, "query", "x");
    c.q.c_mu = need_number(q, "query", "C_mu");
    c.q.sigma2 = need_number(q, "query", "sigma2");
    c.q.rho = need_number(q, "query", "rho");
    c.q.b = need_number(q, "query", "b");
    c.q.c_delta = need_number(q, "query", "c_delta");
    c.x0 = need_number(q, "query", "x0");
    return c;
  }
  throw UsageError("config: unknown or missing query.lemma");
}

int cmd_verify(const json& cfg, const fs::path& out_dir,
               std::optional<std::uint64_t> seed_override, int threads_override,
               const std::string& format, const std::string& started) {
  if (!cfg.contains("query")) throw UsageError("config: query section is required");
  const json& q = cfg["query"];
  const std::string kind = q.value("kind", "");
  std::optional<double> bound_override;
  if (q.contains("bound_override"))
    bound_override = q["bound_override"].get<double>();

  mc::McReport report;
  if (kind == "logistic_intermediate") {
    models::SisParams p;
    p.n = static_cast<std::uint64_t>(need_number(q, "query", "n"));
    p.lambda = need_number(q, "query", "lambda");
    const double x0 = cfg.contains("x0") ? cfg["x0"].get<double>()
                                         : need_number(q, "query", "x0");
    SimConfig sim = build_sim(cfg, seed_override);
    mc::EnsembleConfig ens = build_ensemble(cfg, sim, threads_override);
    report = mc::logistic_intermediate_phase(p, x0, ens, bound_override).report;
  } else {
    ProcessSpec spec = build_model(cfg.at("model"));
    const std::vector<double> x0 = build_x0(cfg, spec.dimension());
    SimConfig sim = build_sim(cfg, seed_override);
    mc::EnsembleConfig ens = build_ensemble(cfg, sim, threads_override);

    if (kind == "sample_path") {
      std::vector<double> lambdas, a_values;
      if (q.contains("lambdas"))
        for (const auto& v : q["lambdas"]) lambdas.push_back(v.get<double>());
      if (q.contains("a"))
        for (const auto& v : q["a"]) a_values.push_back(v.get<double>());
      if (lambdas.empty() || a_values.empty())
        throw UsageError("config: sample_path needs non-empty lambdas and a");
      const std::string s = q.value("signs", "both");
      const int signs = s == "+" ? 1 : s == "-" ? -1 : 0;
      report = mc::verify_sample_path(spec, x0, ens, lambdas, a_values, signs,
                                      bound_override);
    } else if (kind == "exponential") {
      report = mc::exponential_martingale_check(
          spec, x0, ens, need_number(q, "query", "lambda"));
    } else if (kind == "quadratic") {
      report = mc::quadratic_martingale_check(spec, x0, ens);
    } else if (kind == "martingale_mean") {
      report = mc::martingale_mean_check(spec, x0, ens);
    } else if (kind == "martingale_suite") {
      report = mc::martingale_suite(spec, x0, ens,
                                    need_number(q, "query", "lambda"));
    } else if (kind == "lemma") {
      report = mc::verify_lemma(spec, ens, build_lemma_case(q), bound_override);
    } else if (kind == "ode_approx") {
      mc::OdeApproxQuery oq;
      oq.delta = need_number(q, "query", "delta");
      oq.lipschitz = need_number(q, "query", "lipschitz");
      oq.c_rho = opt_number(q, "c_rho", 0.0);
      oq.c_q = opt_number(q, "c_q", 0.0);
      oq.r = static_cast<int>(opt_number(q, "r", 1.0));
      oq.n = static_cast<std::uint64_t>(opt_number(q, "n", 0.0));
      report = mc::verify_ode_approx(spec, x0[0], ens, oq, bound_override);
    } else {
      throw UsageError("config: unknown query.kind '" + kind + "'");
    }
  }

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  if (format == "json" || format == "both") {
    std::ofstream f(out_dir / "report.json");
    f << report.to_json() << '\n';
    outputs.push_back("report.json");
  }
  if (format == "csv" || format == "both") {
    std::ofstream f(out_dir / "report.csv");
    f << report.to_csv();
    outputs.push_back("report.csv");
  }
  const std::uint64_t seed = cfg.contains("sim") && cfg["sim"].contains("seed")
                                 ? cfg["sim"]["seed"].get<std::uint64_t>()
                                 : 0;
  write_manifest(out_dir, "verify", cfg, seed_override.value_or(seed), started,
                 outputs);

  const bool ok = report.all_respected();
  for (const auto& r : report.results)
    std::cout << (r.respected ? "[respected] " : "[VIOLATED]  ") << r.label
              << '\n';
  if (!report.valid)
    std::cout << "hypothesis audit failed: " << report.audit_violations
              << " violations\n";
  if (report.inconclusive) std::cout << "inconclusive: all paths censored\n";
  return ok ? 0 : 1;
}

int cmd_sweep(const json& cfg, const fs::path& out_dir,
              const std::string& started) {
  if (!cfg.contains("sweep")) throw UsageError("config: sweep section required");
  const json& s = cfg["sweep"];
  bounds::SweepRegime regime;
  regime.alpha = need_number(s, "sweep", "alpha");
  regime.big_c = need_number(s, "sweep", "C");
  regime.lemma = bounds::sweep_lemma_from_string(s.value("lemma", ""));
  if (s.contains("params")) {
    const json& p = s["params"];
    regime.x = opt_number(p, "x", regime.x);
    regime.mu = opt_number(p, "mu", regime.mu);
    regime.eps = opt_number(p, "eps", regime.eps);
    regime.b = opt_number(p, "b", regime.b);
    regime.horizon = opt_number(p, "T", regime.horizon);
    regime.sigma2 = opt_number(p, "sigma2", regime.sigma2);
    regime.rho = opt_number(p, "rho", regime.rho);
  }
  std::vector<double> grid;
  if (s.contains("c_delta") && s["c_delta"].is_array()) {
    for (const auto& v : s["c_delta"]) grid.push_back(v.get<double>());
  } else if (s.contains("c_delta") && s["c_delta"].is_object()) {
    const json& g = s["c_delta"];
    const double from = need_number(g, "sweep.c_delta", "from");
    const double to = need_number(g, "sweep.c_delta", "to");
    const int points = static_cast<int>(need_number(g, "sweep.c_delta", "points"));
    const bool log_spaced = g.value("log", true);
    if (points < 2) throw UsageError("sweep: need at least 2 grid points");
    for (int i = 0; i < points; ++i) {
      const double f = static_cast<double>(i) / (points - 1);
      grid.push_back(log_spaced
                         ? std::exp(std::log(from) +
                                    f * (std::log(to) - std::log(from)))
                         : from + f * (to - from));
    }
  } else {
    throw UsageError("sweep: c_delta grid required (array or from/to/points)");
  }

  const auto rows = bounds::scaling_sweep(regime, grid);
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "sweep.csv");
    f << "c_delta,c_q,log_kappa\n";
    for (const auto& r : rows)
      f << io::format_double(r.c_delta) << ',' << io::format_double(r.c_q)
        << ',' << io::format_double(r.log_kappa) << '\n';
  }
  write_manifest(out_dir, "sweep", cfg, 0, started, {"sweep.csv"});
  std::cout << "sweep: " << rows.size() << " rows -> "
            << (out_dir / "sweep.csv").string() << '\n';
  return 0;
}

// key=value positional arguments of `bounds`
std::map<std::string, double> parse_kv(const std::vector<std::string>& tokens) {
  std::map<std::string, double> kv;
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw UsageError("bounds: expected key=value, got '" + tok + "'");
    try {
      kv[tok.substr(0, eq)] = io::parse_double(tok.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bounds: bad numeric value in '" + tok + "'");
    }
  }
  return kv;
}

double kv_need(const std::map<std::string, double>& kv, const std::string& k) {
  const auto it = kv.find(k);
  if (it == kv.end()) throw UsageError("bounds: missing parameter " + k);
  return it->second;
}

double kv_opt(const std::map<std::string, double>& kv, const std::string& k,
              double fallback) {
  const auto it = kv.find(k);
  return it == kv.end() ? fallback : it->second;
}

void print_row(const std::string& name, double value) {
  std::cout << name << " = " << io::format_double(value) << '\n';
}

int cmd_bounds(bool f_kappa, bool f_psi, bool f_gamma_inv, bool f_gamma,
               bool f_envelope, bool f_opt_horizon, bool f_ode,
               const std::string& lemma, const std::vector<std::string>& tokens) {
  const auto kv = parse_kv(tokens);
  bool did = false;
  if (f_gamma) {
    print_row("gamma_fn", bounds::gamma_fn(kv_need(kv, "x")));
    did = true;
  }
  if (f_gamma_inv) {
    print_row("gamma_inv", bounds::gamma_inv(kv_need(kv, "y")));
    did = true;
  }
  if (f_psi) {
    print_row("psi", bounds::psi(kv_need(kv, "y")));
    did = true;
  }
  if (f_kappa) {
    const auto k = bounds::kappa(
        {kv_need(kv, "gamma"), kv_need(kv, "a"), kv_opt(kv, "c", 0.0)});
    print_row("log_kappa", k.log_kappa);
    print_row("kappa", k.kappa);
    did = true;
  }
  if (f_envelope) {
    print_row("envelope",
              bounds::envelope(kv_need(kv, "lambda"), kv_need(kv, "a"),
                               kv_opt(kv, "c", 0.0), kv_need(kv, "qvar")));
    did = true;
  }
  if (f_opt_horizon) {
    const auto h = bounds::optimize_horizon(kv_need(kv, "delta"),
                                            kv_need(kv, "c_rho"),
                                            kv_need(kv, "T"),
                                            kv_opt(kv, "c", 0.0));
    print_row("a", h.a);
    print_row("gamma", h.gamma);
    print_row("bound", h.bound.value);
    did = true;
  }
  if (f_ode) {
    const auto o = bounds::ode_approx_bound(
        kv_need(kv, "delta"), kv_need(kv, "c_rho"), kv_opt(kv, "c", 0.0),
        kv_need(kv, "T"), kv_need(kv, "L"));
    print_row("radius", o.radius);
    print_row("bound", o.bound.value);
    did = true;
  }
  if (!lemma.empty()) {
    if (lemma == "linear_drift") {
      print_row("bound", bounds::linear_drift_bound(kv_need(kv, "y"),
                                                    kv_need(kv, "x0"),
                                                    kv_need(kv, "c"))
                             .value);
    } else if (lemma == "drift_barrier") {
      bounds::DriftBarrier q{kv_need(kv, "x"), kv_need(kv, "c"),
                             kv_need(kv, "mu"), kv_need(kv, "C_mu"),
                             kv_need(kv, "sigma2"), kv_opt(kv, "k", 1.0)};
      const auto b = bounds::drift_barrier_bound(q);
      print_row("t0", b.t0);
      print_row("t0_proof", b.t0_proof);
      print_row("log_kappa", b.log_kappa);
      print_row("bound", b.bound.value);
      print_row("k_long", b.k_long);
      print_row("horizon_long", b.horizon_long);
      print_row("bound_long", b.bound_long.value);
    } else if (lemma == "drift_escape") {
      bounds::DriftEscape q{kv_need(kv, "x"),    kv_need(kv, "mu"),
                            kv_need(kv, "sigma2"), kv_need(kv, "b"),
                            kv_need(kv, "eps"),  kv_opt(kv, "c", 0.0)};
      const auto b = bounds::drift_escape_bound(q);
      print_row("T", b.horizon);
      print_row("log_kappa", b.log_kappa);
      print_row("bound", b.bound.value);
    } else if (lemma == "diffusive_barrier") {
      bounds::DiffusiveBarrier q{kv_need(kv, "x"), kv_need(kv, "qvar"),
                                 kv_opt(kv, "c", 0.0), kv_opt(kv, "T", 0.0)};
      const auto b = bounds::diffusive_barrier_bound(q);
      print_row("log_kappa", b.log_kappa);
      print_row("bound", b.bound.value);
    } else if (lemma == "diffusive_escape") {
      bounds::DiffusiveEscape q{kv_need(kv, "x"),      kv_need(kv, "C_mu"),
                                kv_need(kv, "sigma2"), kv_need(kv, "rho"),
                                kv_need(kv, "b"),      kv_opt(kv, "c", 0.0)};
      const auto b = bounds::diffusive_escape_bound(q);
      print_row("T", b.horizon);
      print_row("gamma", b.gamma);
      print_row("log_kappa", b.log_kappa);
      print_row("bound", b.bound.value);
    } else {
      throw UsageError("bounds: unknown lemma '" + lemma + "'");
    }
    did = true;
  }
  if (!did)
    throw UsageError(
        "bounds: nothing to compute (use --kappa/--psi/--gamma-inv/...)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid jump process simulator and concentration-bound "
               "verifier"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", format = "json";
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  int threads = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* copt = sub->add_option("--config", config_path, "JSON config file");
    if (needs_config) copt->required();
    sub->add_option("--seed", seed_flag, "seed override")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads,
                    "worker threads (JUMPCALC_THREADS as fallback)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--format", format, "report format: json|csv|both")
        ->check(CLI::IsMember({"json", "csv", "both"}));
  };

  auto* sim_cmd = app.add_subcommand("simulate", "simulate one path to CSV");
  add_common(sim_cmd, true);
  auto* verify_cmd =
      app.add_subcommand("verify", "run a Monte Carlo verification");
  add_common(verify_cmd, true);
  auto* sweep_cmd =
      app.add_subcommand("sweep", "scaling sweep of log kappa lower bounds");
  add_common(sweep_cmd, true);

  auto* bounds_cmd = app.add_subcommand(
      "bounds", "evaluate concentration functions (key=value parameters)");
  bool f_kappa = false, f_psi = false, f_gamma_inv = false, f_gamma = false,
       f_envelope = false, f_opt = false, f_ode = false;
  std::string lemma_name;
  std::vector<std::string> kv_tokens;
  bounds_cmd->add_flag("--kappa", f_kappa, "kappa_c(gamma,a): gamma= a= c=");
  bounds_cmd->add_flag("--psi", f_psi, "psi(y): y=");
  bounds_cmd->add_flag("--gamma-inv", f_gamma_inv, "Gamma^{-1}(y): y=");
  bounds_cmd->add_flag("--gamma", f_gamma, "Gamma(x): x=");
  bounds_cmd->add_flag("--envelope", f_envelope,
                       "W_t: lambda= a= c= qvar=");
  bounds_cmd->add_flag("--optimize-horizon", f_opt,
                       "fixed-horizon split: delta= c_rho= T= c=");
  bounds_cmd->add_flag("--ode-approx", f_ode,
                       "ODE approximation: delta= c_rho= T= L= c=");
  bounds_cmd->add_option("--lemma", lemma_name,
                         "lemma bound: linear_drift|drift_barrier|"
                         "drift_escape|diffusive_barrier|diffusive_escape");
  bounds_cmd->add_option("params", kv_tokens, "key=value parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string started = iso_now();
    std::optional<std::uint64_t> seed_override;
    if (seed_set) seed_override = seed_flag;

    if (bounds_cmd->parsed())
      return cmd_bounds(f_kappa, f_psi, f_gamma_inv, f_gamma, f_envelope,
                        f_opt, f_ode, lemma_name, kv_tokens);
    const json cfg = load_config(config_path);
    if (sim_cmd->parsed())
      return cmd_simulate(cfg, out_dir, seed_override, started);
    if (verify_cmd->parsed())
      return cmd_verify(cfg, out_dir, seed_override, threads, format, started);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, out_dir, started);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
