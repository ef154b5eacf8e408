#include "cli.hpp"

#include "drscore/extensions.hpp"
#include "drscore/simulation.hpp"
#include "drscore/stats.hpp"
#include "drscore/table.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace drscore::cli {

namespace {

constexpr Scalar kNaN = std::numeric_limits<Scalar>::quiet_NaN();

std::string num(Scalar v) {
  if (std::isnan(v)) return "nan";
  if (v == 0) v = 0;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int threads_from_env() {
  if (const char* v = std::getenv("DRSCORE_THREADS")) {
    char* end = nullptr;
    const long t = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && t >= 1) return static_cast<int>(t);
    throw InputError("DRSCORE_THREADS must be a positive integer");
  }
  return 1;
}

/// Ordered key/value report written as CSV and as aligned text.
class Report {
 public:
  void add(std::string key, std::string value) { rows_.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, Scalar value) { add(std::move(key), num(value)); }
  void add(std::string key, long long value) { add(std::move(key), std::to_string(value)); }

  void csv(std::ostream& os) const {
    os << "key,value\n";
    for (const auto& [k, v] : rows_) os << k << ',' << v << '\n';
  }

  void text(std::ostream& os, const std::string& title) const {
    os << title << '\n';
    std::size_t w = 0;
    for (const auto& r : rows_) w = std::max(w, r.first.size());
    for (const auto& [k, v] : rows_) os << "  " << k << std::string(w - k.size() + 2, ' ') << v << '\n';
  }

  void emit(const std::string& prefix, const std::string& title, std::ostream& out) const {
    if (prefix.empty()) {
      text(out, title);
      return;
    }
    std::ofstream c(prefix + ".csv", std::ios::binary), t(prefix + ".txt", std::ios::binary);
    if (!c || !t) throw InputError("cannot write output '" + prefix + "'");
    csv(c);
    text(t, title);
    out << "wrote " << prefix << ".csv and " << prefix << ".txt\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

// ci ---------------------------------------------------------------------------

struct CiArgs {
  std::string data, outcome, exposure, modifier, covariates, link = "identity", out;
  Scalar alpha = 0.05;
  std::optional<Scalar> center, half_width, step, refine_tol;
  std::optional<int> max_expansions;
  int grid_points = 41;
  std::uint64_t seed = 20190101;
  std::optional<int> threads;
};

GridSpec grid_for(const CiArgs& args, GridSpec g) {
  if (args.center) g.center = *args.center;
  if (args.half_width) g.half_width = *args.half_width;
  if (args.step) g.step = *args.step;
  if (args.refine_tol) g.refine_tol = *args.refine_tol;
  if (args.max_expansions) g.max_expansions = *args.max_expansions;
  validate(g);
  return g;
}

Vector axis(Scalar center, Scalar half_width, int points) {
  return Vector::LinSpaced(points, center - half_width, center + half_width);
}

void add_region(Report& rep, const ConfidenceRegion& reg, const Grid2d& grid) {
  rep.add("alpha", reg.alpha);
  rep.add("empty", reg.empty ? "true" : "false");
  rep.add("lower1", reg.empty ? kNaN : reg.lower1);
  rep.add("upper1", reg.empty ? kNaN : reg.upper1);
  rep.add("lower2", reg.empty ? kNaN : reg.lower2);
  rep.add("upper2", reg.empty ? kNaN : reg.upper2);
  Index best_i = 0, best_j = 0;
  reg.tsq.minCoeff(&best_i, &best_j);
  rep.add("psi_hat1", grid.axis1[best_i]);
  rep.add("psi_hat2", grid.axis2[best_j]);
  rep.add("tsq_at_hat", reg.tsq(best_i, best_j));
  rep.add("accepted_cells", static_cast<long long>(reg.accepted.sum()));
  rep.add("invalid_cells", static_cast<long long>(reg.invalid.sum()));
  const Index n1 = reg.accepted.rows(), n2 = reg.accepted.cols();
  const bool edge = reg.accepted.row(0).any() || reg.accepted.row(n1 - 1).any() || reg.accepted.col(0).any() ||
                    reg.accepted.col(n2 - 1).any();
  rep.add("region_touches_edge", edge ? "true" : "false");
  rep.add("grid1", num(grid.axis1[0]) + ":" + num(grid.axis1[n1 - 1]) + ":" + std::to_string(n1));
  rep.add("grid2", num(grid.axis2[0]) + ":" + num(grid.axis2[n2 - 1]) + ":" + std::to_string(n2));
}

int cmd_ci(const CiArgs& args, std::ostream& out) {
  if (!(args.alpha > 0 && args.alpha < 1)) throw InputError("alpha must lie in (0, 1)");
  if (args.grid_points < 3) throw InputError("grid-points must be at least 3");
  const Table t = read_csv(args.data);
  const Vector y = t.column(args.outcome);
  const Vector a = t.column(args.exposure);

  std::vector<std::string> cov = split_list(args.covariates);
  if (cov.empty())
    for (const auto& name : t.names)
      if (name != args.outcome && name != args.exposure) cov.push_back(name);
  if (!args.modifier.empty() && std::find(cov.begin(), cov.end(), args.modifier) == cov.end())
    cov.push_back(args.modifier);
  for (const auto& name : cov)
    if (name == args.outcome || name == args.exposure)
      throw InputError("column '" + name + "' cannot be both a covariate and the outcome or exposure");
  if (cov.empty()) throw InputError("no covariate columns");
  Matrix X(t.values.rows(), static_cast<Index>(cov.size()));
  for (std::size_t j = 0; j < cov.size(); ++j) X.col(static_cast<Index>(j)) = t.column(cov[j]);
  const DesignMatrix L = DesignMatrix::with_intercept(X);

  HdbrOptions opts;
  if (args.link == "log") opts.link = Link::Log;
  else if (args.link != "identity") throw InputError("link must be identity or log");
  opts.propensity.cv.rng_seed = args.seed;
  opts.outcome_cv.rng_seed = args.seed;
  InversionOptions inv;
  inv.threads = args.threads ? *args.threads : threads_from_env();
  if (inv.threads < 1) throw InputError("threads must be positive");

  bool categorical = false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] == 2.0) categorical = true;
    else if (a[i] != 0.0 && a[i] != 1.0) throw InputError("exposure '" + args.exposure + "' must be coded 0/1 or 0/1/2");
  }
  if (categorical && !args.modifier.empty())
    throw InputError("a modifier is not supported with a three-level exposure");

  Report rep;
  rep.add("outcome", args.outcome);
  rep.add("exposure", args.exposure);
  rep.add("link", args.link);
  rep.add("observations", static_cast<long long>(L.n()));
  rep.add("covariates", static_cast<long long>(cov.size()));

  if (args.modifier.empty() && !categorical) {
    const GridSpec g = grid_for(args, default_grid(y, a, L, opts.link));
    UnivariateScoreSystem sys(y, a, L, opts);
    sys.set_anchor(g.center);
    const ConfidenceInterval ci = invert_ci(sys, args.alpha, g, inv);
    rep.add("system", "binary");
    rep.add("alpha", ci.alpha);
    rep.add("psi_hat", ci.psi_hat);
    rep.add("lower", ci.lower);
    rep.add("upper", ci.upper);
    rep.add("empty", ci.empty ? "true" : "false");
    rep.add("tsq_at_hat", ci.tsq_at_hat);
    rep.add("roots", static_cast<long long>(ci.roots.size()));
    rep.add("lambda_gamma", sys.propensity().lambda_gamma);
    rep.add("lambda_gamma_cv", sys.propensity().lambda_cv);
    rep.add("bumps", static_cast<long long>(sys.propensity().bumped));
    rep.add("lambda_beta", sys.lambda_beta());
    rep.add("grid_center", g.center);
    rep.add("grid_half_width", g.half_width);
    rep.add("grid_expansions", static_cast<long long>(ci.expanded));
    rep.add("grid_evaluations", static_cast<long long>(ci.grid_evaluations));
    rep.add("invalid_points", static_cast<long long>(ci.invalid_points));
    rep.add("evaluations", static_cast<long long>(ci.evaluations));
    rep.emit(args.out, "confidence interval", out);
    return kOk;
  }

  if (categorical) {
    CategoricalScoreSystem sys(y, a, L, opts);
    Grid2d grid;
    for (int j = 0; j < 2; ++j) {
      const GridSpec g = grid_for(args, default_grid(y, sys.indicators().col(j), L, opts.link));
      (j == 0 ? grid.axis1 : grid.axis2) = axis(g.center, g.half_width, args.grid_points);
    }
    const ConfidenceRegion reg = invert_region_2d(sys, args.alpha, grid, inv);
    rep.add("system", "categorical");
    add_region(rep, reg, grid);
    for (int level = 1; level <= 2; ++level) {
      const std::string s = std::to_string(level);
      rep.add("lambda_gamma" + s, sys.propensity(level).lambda_gamma);
      rep.add("bumps" + s, static_cast<long long>(sys.propensity(level).bumped));
      rep.add("lambda_beta" + s, sys.lambda_beta(level));
    }
    rep.emit(args.out, "confidence region (levels 1 and 2 against 0)", out);
    return kOk;
  }

  const Index mod_index =
      1 + static_cast<Index>(std::find(cov.begin(), cov.end(), args.modifier) - cov.begin());
  InteractionSpec spec;
  spec.modifier_index = mod_index;
  InteractionScoreSystem sys(y, a, L, spec, opts);
  const GridSpec g1 = grid_for(args, default_grid(y, a, L, opts.link));
  const GridSpec g2 = grid_for(args, default_grid(y, a.cwiseProduct(sys.modifier()), L, opts.link));
  Grid2d grid{axis(g1.center, g1.half_width, args.grid_points), axis(g2.center, g2.half_width, args.grid_points)};
  const ConfidenceRegion reg = invert_region_2d(sys, args.alpha, grid, inv);
  rep.add("system", "interaction");
  rep.add("modifier", args.modifier);
  add_region(rep, reg, grid);
  rep.add("lambda_gamma", sys.propensity().lambda_gamma);
  rep.add("bumps", static_cast<long long>(sys.propensity().bumped));
  rep.add("lambda_beta1", sys.lambda_beta(0));
  rep.add("lambda_beta2", sys.lambda_beta(1));
  rep.emit(args.out, "confidence region (main effect, effect per unit modifier)", out);
  return kOk;
}

// simulate ---------------------------------------------------------------------

int cmd_simulate(const std::string& config, const std::string& out_override, std::optional<int> threads,
                 std::ostream& out) {
  SimulationConfig cfg = load_simulation_config(config);
  if (!out_override.empty()) cfg.output = out_override;
  if (threads) cfg.mc.threads = *threads;
  else if (std::getenv("DRSCORE_THREADS")) cfg.mc.threads = threads_from_env();
  if (cfg.mc.threads < 1) throw InputError("threads must be positive");
  const SimulationReport report = run_monte_carlo(cfg.dgp, cfg.mc);
  for (ReportFormat f : cfg.formats) {
    const std::string path = cfg.output + (f == ReportFormat::Csv ? ".csv" : ".md");
    emit_report(report, f, path);
    out << "wrote " << path << '\n';
  }
  emit_report(report, ReportFormat::Markdown, out);
  return kOk;
}

// check ------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

Matrix gaussian_matrix(Index n, Index p, std::mt19937_64& rng) {
  std::normal_distribution<Scalar> z;
  Matrix m(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = z(rng);
  return m;
}

CheckResult check_kkt(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(20, 80), pd(5, 60);
  std::uniform_real_distribution<Scalar> wd(0.1, 1.0), fd(0.05, 0.5);
  Scalar worst = 0;
  int bad = 0;
  const int cases = 100;
  for (int c = 0; c < cases; ++c) {
    const Index n = nd(rng), p = pd(rng);
    const DesignMatrix X = DesignMatrix::with_intercept(gaussian_matrix(n, p, rng));
    const Vector noise = gaussian_matrix(n, 1, rng).col(0);
    const Vector lin = X.values().col(1) - 0.5 * X.values().col(2) + noise;
    SolverOptions so;
    if (c % 2 == 0) {
      Vector w(n);
      for (Index i = 0; i < n; ++i) w[i] = wd(rng);
      const ObservationWeights ow(w);
      const Scalar lam = fd(rng) * lambda_max(X, lin, Family::WeightedGaussian, ow, so);
      const PenalizedFit f = fit_weighted_lasso(X, lin, ow, lam, so);
      const Scalar gap = kkt_gap(weighted_lasso_gradient(X, lin, w, f.coefficients), f.coefficients, lam,
                                 penalty_factors(X, w, so));
      worst = std::max(worst, gap);
      bad += !(f.converged && gap <= 1e-6);
    } else {
      Vector a(n);
      for (Index i = 0; i < n; ++i) a[i] = lin[i] > 0 ? 1.0 : 0.0;
      a[0] = 1.0;
      a[1] = 0.0;
      const Scalar lam = std::max(fd(rng), 0.2) * lambda_max(X, a, Family::Logistic, std::nullopt, so);
      const PenalizedFit f = fit_lasso_logistic(X, a, lam, so);
      const Scalar gap = kkt_gap(logistic_gradient(X, a, f.coefficients), f.coefficients, lam,
                                 penalty_factors(X, Vector::Ones(n), so));
      worst = std::max(worst, gap);
      bad += !(f.converged && gap <= 1e-6);
    }
  }
  return {"kkt certificates", bad == 0,
          std::to_string(cases - bad) + "/" + std::to_string(cases) + " fits, worst gap " + num(worst)};
}

CheckResult check_bias_certificate(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(20, 200), pd(5, 150);
  std::uniform_real_distribution<Scalar> wd(0.05, 0.25), fd(0.02, 0.6);
  int bad = 0, fits = 0;
  Scalar worst = 0;
  for (int c = 0; c < 100; ++c) {
    const Index n = nd(rng), p = pd(rng);
    const DesignMatrix L = DesignMatrix::with_intercept(gaussian_matrix(n, p, rng));
    const Vector h = L.values().col(1) + gaussian_matrix(n, 1, rng).col(0);
    Vector w(n);
    for (Index i = 0; i < n; ++i) w[i] = wd(rng);
    const ObservationWeights ow(w);
    const Scalar lam = fd(rng) * lambda_max(L, h, Family::WeightedGaussian, ow);
    const OutcomeNuisanceFit f = estimate_outcome_nuisance(L, h, ow, lam);
    if (!f.converged) continue;
    ++fits;
    worst = std::max(worst, f.bias_gap / lam);
    bad += f.bias_gap > lam * (1 + 1e-6);
  }
  return {"bias certificate", bad == 0 && fits > 0,
          std::to_string(fits - bad) + "/" + std::to_string(fits) + " fits, worst ratio " + num(worst)};
}

Dataset small_dataset(std::uint64_t seed) {
  DgpConfig cfg;
  cfg.n = 100;
  cfg.p = 10;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

HdbrOptions quick_options() {
  HdbrOptions o;
  o.propensity.cv.folds = 5;
  o.outcome_cv.folds = 5;
  return o;
}

CheckResult check_nesting(std::uint64_t seed) {
  int bad = 0;
  const int datasets = 5;
  for (int d = 0; d < datasets; ++d) {
    const Dataset ds = small_dataset(derive_seed(seed, 1, static_cast<std::uint64_t>(d)));
    const GridSpec g = default_grid(ds.y, ds.a, ds.L, Link::Identity);
    UnivariateScoreSystem sys(ds.y, ds.a, ds.L, quick_options());
    sys.set_anchor(g.center);
    const ConfidenceInterval wide = invert_ci(sys, 0.01, g);
    const ConfidenceInterval mid = invert_ci(sys, 0.05, g);
    const ConfidenceInterval narrow = invert_ci(sys, 0.10, g);
    const bool ok = !narrow.empty && !mid.empty && !wide.empty && wide.lower <= mid.lower &&
                    mid.lower <= narrow.lower && narrow.upper <= mid.upper && mid.upper <= wide.upper;
    bad += !ok;
  }
  return {"interval nesting", bad == 0, std::to_string(datasets - bad) + "/" + std::to_string(datasets) +
                                             " datasets nested over alpha 0.01, 0.05, 0.10"};
}

CheckResult check_determinism(std::uint64_t seed) {
  const Dataset ds = small_dataset(derive_seed(seed, 2));
  const GridSpec g = default_grid(ds.y, ds.a, ds.L, Link::Identity);
  auto interval = [&](int threads) {
    UnivariateScoreSystem sys(ds.y, ds.a, ds.L, quick_options());
    sys.set_anchor(g.center);
    return invert_ci(sys, 0.05, g, InversionOptions{threads});
  };
  const ConfidenceInterval one = interval(1), two = interval(2);
  const bool same_ci = one.lower == two.lower && one.upper == two.upper && one.psi_hat == two.psi_hat;

  DgpConfig cfg;
  cfg.n = 80;
  cfg.p = 8;
  MonteCarloOptions mc;
  mc.replications = 2;
  mc.master_seed = seed;
  mc.hdbr = quick_options();
  mc.comparators.cv.folds = 5;
  mc.estimators = {Estimator::Pds, Estimator::Hdbr};
  auto report = [&](int threads) {
    mc.threads = threads;
    std::ostringstream os;
    emit_report(run_monte_carlo(cfg, mc), ReportFormat::Csv, os);
    return os.str();
  };
  const bool same_report = report(1) == report(2);
  return {"determinism", same_ci && same_report,
          std::string("interval ") + (same_ci ? "identical" : "differs") + ", report " +
              (same_report ? "identical" : "differs") + " across thread counts"};
}

int cmd_check(std::uint64_t seed, std::ostream& out) {
  const std::vector<CheckResult> results{check_kkt(seed), check_bias_certificate(seed), check_nesting(seed),
                                         check_determinism(seed)};
  int passed = 0;
  for (const auto& r : results) {
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << '\n';
    passed += r.pass;
  }
  out << passed << '/' << results.size() << " checks passed\n";
  return passed == static_cast<int>(results.size()) ? kOk : kCheckFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust score-test confidence intervals for high-dimensional confounding"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 1 check failure, 2 input error, 3 numerical failure, 4 unbounded interval.");

  CiArgs ci;
  CLI::App* ci_cmd = app.add_subcommand("ci", "Confidence interval for the exposure effect in a CSV file");
  ci_cmd->add_option("--data", ci.data, "CSV file with a header row")->required();
  ci_cmd->add_option("--outcome", ci.outcome, "Outcome column")->required();
  ci_cmd->add_option("--exposure", ci.exposure, "Exposure column coded 0/1 (or 0/1/2)")->required();
  ci_cmd->add_option("--modifier", ci.modifier, "Covariate modifying the effect (two-parameter region)");
  ci_cmd->add_option("--covariates", ci.covariates, "Comma-separated covariates (default: all other columns)");
  ci_cmd->add_option("--link", ci.link, "Effect scale")->check(CLI::IsMember({"identity", "log"}));
  ci_cmd->add_option("--alpha", ci.alpha, "Significance level in (0, 1)");
  ci_cmd->add_option("--grid-center", ci.center, "Grid center (default: partialling-out estimate)");
  ci_cmd->add_option("--grid-half-width", ci.half_width, "Grid half width");
  ci_cmd->add_option("--grid-step", ci.step, "Grid spacing");
  ci_cmd->add_option("--max-expansions", ci.max_expansions, "Grid doublings before giving up");
  ci_cmd->add_option("--refine-tol", ci.refine_tol, "Endpoint tolerance");
  ci_cmd->add_option("--grid-points", ci.grid_points, "Points per axis for two-parameter regions");
  ci_cmd->add_option("--seed", ci.seed, "Cross-validation fold seed");
  ci_cmd->add_option("--threads", ci.threads, "Worker threads (default: DRSCORE_THREADS or 1)");
  ci_cmd->add_option("--out", ci.out, "Write <out>.csv and <out>.txt instead of printing");

  std::string config, sim_out;
  std::optional<int> sim_threads;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study from a key = value config file");
  sim_cmd->add_option("--config", config, "Configuration file")->required();
  sim_cmd->add_option("--out", sim_out, "Output path prefix (overrides the config)");
  sim_cmd->add_option("--threads", sim_threads, "Worker threads (default: config, DRSCORE_THREADS)");

  std::uint64_t check_seed = 20190101;
  CLI::App* check_cmd = app.add_subcommand("check", "Run the fast invariant suite");
  check_cmd->add_option("--seed", check_seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (ci_cmd->parsed()) return cmd_ci(ci, out);
    if (sim_cmd->parsed()) return cmd_simulate(config, sim_out, sim_threads, out);
    if (check_cmd->parsed()) return cmd_check(check_seed, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const UnboundedIntervalError& e) {
    err << "unbounded interval: " << e.what() << '\n';
    return kUnbounded;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  }
  return kInputError;
}

}  // namespace drscore::cli
