#include "drscore/simulation.hpp"

#include "drscore/parallel.hpp"
#include "drscore/stats.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace drscore {

void validate(const DgpConfig& cfg) {
  if (cfg.experiment < 1 || cfg.experiment > 3) throw InputError("experiment must be 1, 2 or 3");
  if (cfg.p < 5) throw InputError("p must be at least 5");
  if (cfg.n < 2) throw InputError("n must be at least 2");
  if (!std::isfinite(cfg.tau) || !std::isfinite(cfg.rho) || !std::isfinite(cfg.psi_true))
    throw InputError("non-finite configuration value");
  if (!(cfg.noise_scale >= 0)) throw InputError("noise_scale must be nonnegative");
}

Matrix toeplitz_covariance(Index dim) {
  Matrix s(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index k = 0; k < dim; ++k) s(j, k) = std::pow(2.0, -static_cast<Scalar>(std::abs(j - k)));
  return s;
}

Vector beta_pattern(Index len, Scalar tau, Scalar rho, BetaPattern kind) {
  Vector b(len);
  for (Index j = 0; j < len; ++j) {
    if (j < 3) b[j] = (j % 2 == 0) ? -1.0 : 1.0;
    else {
      const Scalar base = static_cast<Scalar>(j - 1);
      b[j] = kind == BetaPattern::Decaying ? std::pow(base, -rho) : std::pow(base, rho);
    }
  }
  return tau * b;
}

Vector gamma_pattern(Index len, GammaPattern kind) {
  Vector g(len);
  for (Index j = 0; j < len; ++j) {
    if (j < 3) {
      g[j] = (j % 2 == 0) ? 1.0 : -1.0;
      continue;
    }
    const Scalar mag = std::pow(static_cast<Scalar>(j - 1), -2.0);
    switch (kind) {
      case GammaPattern::Negative: g[j] = -mag; break;
      case GammaPattern::Positive: g[j] = mag; break;
      case GammaPattern::Alternating: g[j] = ((j - 3) % 2 == 0) ? -mag : mag; break;
    }
  }
  return g;
}

namespace {
Vector align(const Vector& pattern, Index p, bool includes_intercept) {
  if (includes_intercept) return pattern.head(p);
  Vector out = Vector::Zero(p);
  out.tail(p - 1) = pattern.head(p - 1);
  return out;
}
}  // namespace

Vector outcome_coefficients(const DgpConfig& cfg) {
  return align(beta_pattern(cfg.p, cfg.tau, cfg.rho, cfg.beta_pattern), cfg.p, cfg.pattern_includes_intercept);
}

Vector exposure_coefficients(const DgpConfig& cfg) {
  return align(gamma_pattern(cfg.p, cfg.gamma_pattern), cfg.p, cfg.pattern_includes_intercept);
}

Matrix sample_toeplitz(Index n, Index dim, std::uint64_t seed) {
  const Eigen::LLT<Matrix> llt(toeplitz_covariance(dim));
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix e(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) e(i, j) = z(rng);
  return e * llt.matrixU();
}

namespace {

struct Streams {
  std::mt19937_64 exposure;
  std::mt19937_64 outcome;
};

Streams streams(std::uint64_t seed) {
  return {std::mt19937_64(derive_seed(seed, 1)), std::mt19937_64(derive_seed(seed, 2))};
}

Vector draw_bernoulli(const Vector& prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector a(prob.size());
  for (Index i = 0; i < prob.size(); ++i) a[i] = u(rng) < prob[i] ? 1.0 : 0.0;
  return a;
}

}  // namespace

Dataset generate_dataset(const DgpConfig& cfg) {
  validate(cfg);
  const Matrix Ls = sample_toeplitz(cfg.n, cfg.p - 1, derive_seed(cfg.seed, 0));
  Dataset d;
  d.L = DesignMatrix::with_intercept(Ls);
  d.psi_true = cfg.psi_true;
  Streams rs = streams(cfg.seed);
  const Vector beta = outcome_coefficients(cfg);
  const Vector gamma = exposure_coefficients(cfg);
  d.pi_true = expit(d.L.values() * gamma);
  d.a = draw_bernoulli(d.pi_true, rs.exposure);

  Vector mean;
  if (cfg.experiment == 2) {
    Matrix X = d.L.values();
    for (Index i = 0; i < cfg.n; ++i) {
      const Scalar l1 = Ls(i, 0), l2 = Ls(i, 1), l3 = Ls(i, 2);
      X(i, 1) = std::abs(std::log(std::abs(5.0 + l1)));
      X(i, 2) = l2 * std::exp(l1);
      X(i, 3) = -(l2 + l3) * (l2 + l3);
    }
    Vector bbar = beta;
    bbar.segment(1, 3).setOnes();
    mean = cfg.psi_true * d.a + X * bbar;
  } else {
    mean = cfg.psi_true * d.a + d.L.values() * beta;
  }
  Vector sd = Vector::Ones(cfg.n);
  if (cfg.experiment == 3) {
    const Scalar scale = 1.0 / std::sqrt(mean.squaredNorm() / static_cast<Scalar>(cfg.n));
    sd = (scale * mean).cwiseAbs();
  }
  std::normal_distribution<double> z(0.0, 1.0);
  d.y.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) d.y[i] = mean[i] + cfg.noise_scale * sd[i] * z(rs.outcome);
  return d;
}

InteractionDataset generate_interaction_dataset(Index n, Index p, Scalar psi1, Scalar psi2,
                                                std::uint64_t seed) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.seed = seed;
  cfg.psi_true = psi1;
  Dataset base = generate_dataset(cfg);
  InteractionDataset d;
  d.L = base.L;
  d.a = base.a;
  d.modifier_index = 1;
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::normal_distribution<double> z(0.0, 1.0);
  const Vector beta = outcome_coefficients(cfg);
  const Vector mean = psi1 * d.a + psi2 * d.a.cwiseProduct(d.L.values().col(1)) + d.L.values() * beta;
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) d.y[i] = mean[i] + z(rng);
  d.psi_true = Vector(2);
  d.psi_true << psi1, psi2;
  return d;
}

TwoPeriodDataset generate_two_period_dataset(Index n, Index p1, Index p2, std::uint64_t seed) {
  if (p1 < 2 || p2 < 1) throw InputError("two-period design needs p1 >= 2 and p2 >= 1");
  const Matrix L1s = sample_toeplitz(n, p1 - 1, derive_seed(seed, 0));
  TwoPeriodDataset d;
  d.L1 = DesignMatrix::with_intercept(L1s);
  std::mt19937_64 rng(derive_seed(seed, 4));
  std::normal_distribution<double> z(0.0, 1.0);

  const Vector g1 = gamma_pattern(p1, GammaPattern::Negative) * 0.5;
  d.a1 = draw_bernoulli(expit(d.L1.values() * g1), rng);

  // L2 = delta A1 + 0.5 L*_{1..} (first p2 covariates, cycled) + noise.
  const Scalar delta = 0.5;
  d.L2.resize(n, p2);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < p2; ++k) d.L2(i, k) = delta * d.a1[i] + 0.5 * L1s(i, k % L1s.cols()) + z(rng);

  Vector eta2 = Vector::Constant(n, -0.3) + 0.5 * d.a1;
  for (Index i = 0; i < n; ++i) {
    eta2[i] += 0.5 * L1s(i, 0) - 0.5 * d.L2(i, 0);
    if (p2 > 1) eta2[i] += 0.25 * d.L2(i, 1);
  }
  d.a2 = draw_bernoulli(expit(eta2), rng);

  const Scalar psi1_struct = 0.2, psi2 = 0.3;
  Vector b = Vector::Zero(p2);
  b[0] = 1.0;
  if (p2 > 1) b[1] = -0.5;
  const Vector beta1 = beta_pattern(p1, 1.0, 2.0, BetaPattern::Decaying);
  const Vector mean = psi2 * d.a2 + psi1_struct * d.a1 + d.L1.values() * beta1 + d.L2 * b;
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) d.y[i] = mean[i] + z(rng);
  d.psi_true = Vector(2);
  d.psi_true << psi1_struct + delta * b.sum(), psi2;
  return d;
}

// ---------------------------------------------------------------------------

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::NaiveOls: return "OLS";
    case Estimator::Pds: return "PDS";
    case Estimator::Po: return "PO";
    case Estimator::PdsCv: return "PDS-CV";
    case Estimator::PoCv: return "PO-CV";
    case Estimator::Hdbr: return "HDBR";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  for (Estimator e : {Estimator::NaiveOls, Estimator::Pds, Estimator::Po, Estimator::PdsCv, Estimator::PoCv,
                      Estimator::Hdbr})
    if (estimator_name(e) == name) return e;
  throw InputError("unknown estimator '" + name + "'");
}

namespace {

ReplicationResult wald(Estimator e, const PointEstimate& pe, Scalar psi, Scalar alpha) {
  ReplicationResult r;
  r.estimator = e;
  r.estimate = pe.estimate;
  r.se = pe.se;
  const Scalar z = normal_quantile(1.0 - alpha / 2.0);
  r.lower = pe.estimate - z * pe.se;
  r.upper = pe.estimate + z * pe.se;
  r.covered = r.lower <= psi && psi <= r.upper;
  r.ok = std::isfinite(r.estimate) && std::isfinite(r.se);
  return r;
}

ReplicationResult run_hdbr(const Dataset& d, const MonteCarloOptions& opts) {
  ReplicationResult r;
  r.estimator = Estimator::Hdbr;
  const GridSpec grid = default_grid(d.y, d.a, d.L, opts.hdbr.link);
  UnivariateScoreSystem sys(d.y, d.a, d.L, opts.hdbr);
  sys.set_anchor(grid.center);
  const ConfidenceInterval ci = invert_ci(sys, opts.alpha, grid);
  r.estimate = ci.psi_hat;
  r.lower = ci.lower;
  r.upper = ci.upper;
  r.covered = !ci.empty && ci.lower <= d.psi_true && d.psi_true <= ci.upper;

  const Scalar n = static_cast<Scalar>(d.L.n());
  const ScoreEvaluation at_truth = score_moments(sys.scores(Vector::Constant(1, d.psi_true)));
  const Scalar h = 1e-3;
  const Scalar up = sys.scores(Vector::Constant(1, d.psi_true + h)).mean();
  const Scalar dn = sys.scores(Vector::Constant(1, d.psi_true - h)).mean();
  const Scalar slope = (up - dn) / (2 * h);
  r.score_se = std::sqrt(at_truth.vhat(0, 0) / n);
  r.se = r.score_se / std::abs(slope);
  r.ok = std::isfinite(r.estimate) && std::isfinite(r.se);
  return r;
}

}  // namespace

std::vector<ReplicationResult> run_replication(const Dataset& d, const MonteCarloOptions& opts) {
  std::vector<ReplicationResult> out;
  for (Estimator e : opts.estimators) {
    ReplicationResult r;
    r.estimator = e;
    try {
      switch (e) {
        case Estimator::NaiveOls:
          r = wald(e, estimate_naive_post_lasso(d.y, d.a, d.L, opts.comparators), d.psi_true, opts.alpha);
          break;
        case Estimator::Pds:
          r = wald(e, estimate_post_double_selection(d.y, d.a, d.L, PenaltyChoice::Plugin, opts.comparators),
                   d.psi_true, opts.alpha);
          break;
        case Estimator::Po:
          r = wald(e, estimate_partialling_out(d.y, d.a, d.L, PenaltyChoice::Plugin, opts.comparators),
                   d.psi_true, opts.alpha);
          break;
        case Estimator::PdsCv:
          r = wald(e,
                   estimate_post_double_selection(d.y, d.a, d.L, PenaltyChoice::CrossValidated, opts.comparators),
                   d.psi_true, opts.alpha);
          break;
        case Estimator::PoCv:
          r = wald(e, estimate_partialling_out(d.y, d.a, d.L, PenaltyChoice::CrossValidated, opts.comparators),
                   d.psi_true, opts.alpha);
          break;
        case Estimator::Hdbr:
          r = run_hdbr(d, opts);
          break;
      }
    } catch (const Error&) {
      r = ReplicationResult{};
      r.estimator = e;
      r.ok = false;
    }
    out.push_back(r);
  }
  return out;
}

SimulationReport summarize(const DgpConfig& cfg, Scalar psi_true,
                           const std::vector<std::vector<ReplicationResult>>& raw,
                           const std::vector<Estimator>& estimators) {
  SimulationReport rep;
  rep.config = cfg;
  rep.requested = static_cast<int>(raw.size());
  rep.raw = raw;
  for (std::size_t k = 0; k < estimators.size(); ++k) {
    EstimatorSummary s;
    s.estimator = estimators[k];
    std::vector<Scalar> est;
    Scalar se_sum = 0, score_sum = 0;
    int covered = 0;
    for (const auto& row : raw) {
      const ReplicationResult& r = row[k];
      if (!r.ok) {
        ++s.failures;
        continue;
      }
      est.push_back(r.estimate);
      se_sum += r.se;
      score_sum += r.score_se;
      covered += r.covered ? 1 : 0;
    }
    s.replications = static_cast<int>(est.size());
    if (s.replications > 0) {
      const MeanSd ms = mean_sd(est);
      const Scalar m = static_cast<Scalar>(s.replications);
      s.bias = 10.0 * (ms.mean - psi_true);
      s.mcsd = 10.0 * ms.sd;
      s.mse = 10.0 * se_sum / m;
      s.score_se = 10.0 * score_sum / m;
      s.coverage = 100.0 * covered / m;
    }
    s.flagged = rep.requested > 0 && s.failures > 0.05 * rep.requested;
    rep.rows.push_back(s);
  }
  return rep;
}

SimulationReport run_monte_carlo(const DgpConfig& cfg, const MonteCarloOptions& opts) {
  validate(cfg);
  if (opts.replications < 1) throw InputError("replications must be at least 1");
  if (opts.estimators.empty()) throw InputError("no estimators requested");
  std::vector<std::vector<ReplicationResult>> raw(static_cast<std::size_t>(opts.replications));
  parallel_for(raw.size(), opts.threads, [&](std::size_t r) {
    DgpConfig c = cfg;
    c.seed = derive_seed(opts.master_seed, 0, r);
    raw[r] = run_replication(generate_dataset(c), opts);
  });
  return summarize(cfg, cfg.psi_true, raw, opts.estimators);
}

// ---------------------------------------------------------------------------

namespace {
std::string fmt1(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  std::string s(buf);
  if (s == "-0.0") s = "0.0";
  return s;
}
}  // namespace

void emit_report(const SimulationReport& report, ReportFormat format, std::ostream& out) {
  const char* cols[] = {"Est", "Bias", "MCSD", "MSE", "Cov", "ScoreSE", "Reps", "Failures"};
  if (format == ReportFormat::Csv) {
    for (int c = 0; c < 8; ++c) out << (c ? "," : "") << cols[c];
    out << "\n";
    for (const EstimatorSummary& s : report.rows)
      out << estimator_name(s.estimator) << ',' << fmt1(s.bias) << ',' << fmt1(s.mcsd) << ',' << fmt1(s.mse)
          << ',' << fmt1(s.coverage) << ',' << fmt1(s.score_se) << ',' << s.replications << ',' << s.failures
          << "\n";
    return;
  }
  out << "|";
  for (const char* c : cols) out << ' ' << c << " |";
  out << "\n|";
  for (int c = 0; c < 8; ++c) out << (c == 0 ? "---|" : "---:|");
  out << "\n";
  for (const EstimatorSummary& s : report.rows)
    out << "| " << estimator_name(s.estimator) << " | " << fmt1(s.bias) << " | " << fmt1(s.mcsd) << " | "
        << fmt1(s.mse) << " | " << fmt1(s.coverage) << " | " << fmt1(s.score_se) << " | " << s.replications
        << " | " << s.failures << (s.flagged ? " (flagged)" : "") << " |\n";
}

void emit_report(const SimulationReport& report, ReportFormat format, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  emit_report(report, format, f);
  if (!f) throw Error("write to '" + path + "' failed");
}

std::vector<EstimatorSummary> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<EstimatorSummary> rows;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw InputError("malformed report row: " + line);
    EstimatorSummary s;
    s.estimator = parse_estimator(f[0]);
    s.bias = std::stod(f[1]);
    s.mcsd = std::stod(f[2]);
    s.mse = std::stod(f[3]);
    s.coverage = std::stod(f[4]);
    s.score_se = std::stod(f[5]);
    s.replications = std::stoi(f[6]);
    s.failures = std::stoi(f[7]);
    rows.push_back(s);
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

SimulationConfig parse_simulation_config(const std::string& text) {
  SimulationConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno);
    if (eq == std::string::npos) throw InputError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto num = [&]() {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != val.size() || val.empty()) throw InputError(where + ": key '" + key + "' needs a number");
      return v;
    };
    auto integer = [&]() {
      const double v = num();
      if (v != std::floor(v) || v < 0) throw InputError(where + ": key '" + key + "' needs a nonnegative integer");
      return v;
    };
    if (key == "experiment") cfg.dgp.experiment = static_cast<int>(integer());
    else if (key == "n") cfg.dgp.n = static_cast<Index>(integer());
    else if (key == "p") cfg.dgp.p = static_cast<Index>(integer());
    else if (key == "tau") cfg.dgp.tau = num();
    else if (key == "rho") cfg.dgp.rho = num();
    else if (key == "psi_true") cfg.dgp.psi_true = num();
    else if (key == "noise_scale") cfg.dgp.noise_scale = num();
    else if (key == "seed") cfg.mc.master_seed = static_cast<std::uint64_t>(integer());
    else if (key == "replications") cfg.mc.replications = static_cast<int>(integer());
    else if (key == "alpha") cfg.mc.alpha = num();
    else if (key == "threads") cfg.mc.threads = static_cast<int>(integer());
    else if (key == "folds") {
      const int k = static_cast<int>(integer());
      cfg.mc.hdbr.propensity.cv.folds = k;
      cfg.mc.hdbr.outcome_cv.folds = k;
      cfg.mc.comparators.cv.folds = k;
    } else if (key == "output") cfg.output = val;
    else if (key == "estimators") {
      cfg.mc.estimators.clear();
      for (const std::string& e : split_list(val)) {
        try {
          cfg.mc.estimators.push_back(parse_estimator(e));
        } catch (const InputError& err) {
          throw InputError(where + ": " + err.what());
        }
      }
    } else if (key == "formats") {
      cfg.formats.clear();
      for (const std::string& f : split_list(val)) {
        if (f == "csv") cfg.formats.push_back(ReportFormat::Csv);
        else if (f == "markdown") cfg.formats.push_back(ReportFormat::Markdown);
        else throw InputError(where + ": unknown format '" + f + "'");
      }
    } else if (key == "beta_pattern") {
      if (val == "decaying") cfg.dgp.beta_pattern = BetaPattern::Decaying;
      else if (val == "literal") cfg.dgp.beta_pattern = BetaPattern::Literal;
      else throw InputError(where + ": beta_pattern must be decaying or literal");
    } else if (key == "gamma_pattern") {
      if (val == "negative") cfg.dgp.gamma_pattern = GammaPattern::Negative;
      else if (val == "alternating") cfg.dgp.gamma_pattern = GammaPattern::Alternating;
      else if (val == "positive") cfg.dgp.gamma_pattern = GammaPattern::Positive;
      else throw InputError(where + ": gamma_pattern must be negative, alternating or positive");
    } else if (key == "pattern_includes_intercept") {
      if (val == "true") cfg.dgp.pattern_includes_intercept = true;
      else if (val == "false") cfg.dgp.pattern_includes_intercept = false;
      else throw InputError(where + ": pattern_includes_intercept must be true or false");
    } else {
      throw InputError(where + ": unknown key '" + key + "'");
    }
  }
  validate(cfg.dgp);
  if (!(cfg.mc.alpha > 0 && cfg.mc.alpha < 1)) throw InputError("alpha must lie in (0,1)");
  if (cfg.mc.replications < 1) throw InputError("replications must be at least 1");
  if (cfg.mc.estimators.empty()) throw InputError("no estimators listed");
  return cfg;
}

SimulationConfig load_simulation_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_simulation_config(ss.str());
}

}  // namespace drscore
