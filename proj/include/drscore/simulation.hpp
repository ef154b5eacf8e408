#pragma once

#include "drscore/comparators.hpp"
#include "drscore/inversion.hpp"

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace drscore {

/// Decaying: tau (-1, 1, -1, 2^-rho, 3^-rho, ...). Literal: tau (-1, 1, -1, 2^rho, 3^rho, ...).
enum class BetaPattern { Decaying, Literal };

/// Negative: (1, -1, 1, -2^-2, -3^-2, ...). Alternating: signs alternate after the
/// third entry starting from -2^-2. Positive: (1, -1, 1, 2^-2, 3^-2, ...).
enum class GammaPattern { Negative, Alternating, Positive };

struct DgpConfig {
  int experiment = 1;
  Index n = 200;
  /// Columns of L including the intercept.
  Index p = 200;
  Scalar tau = 1.0;
  Scalar rho = 2.0;
  Scalar psi_true = 0.3;
  std::uint64_t seed = 1;
  BetaPattern beta_pattern = BetaPattern::Decaying;
  GammaPattern gamma_pattern = GammaPattern::Negative;
  /// When true the first pattern entry is the intercept coefficient; otherwise
  /// the pattern starts at the first covariate and the intercept coefficient is 0.
  bool pattern_includes_intercept = true;
  /// Multiplies the outcome noise (1 reproduces the experiments, 0 is noiseless).
  Scalar noise_scale = 1.0;
};

void validate(const DgpConfig& cfg);

struct Dataset {
  Vector y;
  Vector a;
  DesignMatrix L;
  Scalar psi_true = 0;
  /// True propensity expit(gamma0' L).
  Vector pi_true;
};

/// Toeplitz covariance with entries 2^-|j-k|.
Matrix toeplitz_covariance(Index dim);

/// Length-`len` outcome coefficient pattern scaled by tau.
Vector beta_pattern(Index len, Scalar tau, Scalar rho, BetaPattern kind);
/// Length-`len` exposure coefficient pattern.
Vector gamma_pattern(Index len, GammaPattern kind);

/// Coefficients on L (length p) implied by the configuration.
Vector outcome_coefficients(const DgpConfig& cfg);
Vector exposure_coefficients(const DgpConfig& cfg);

/// Standard normal draws with Toeplitz covariance, n x dim.
Matrix sample_toeplitz(Index n, Index dim, std::uint64_t seed);

Dataset generate_dataset(const DgpConfig& cfg);

// Extension designs ------------------------------------------------------------------

struct InteractionDataset {
  Vector y;
  Vector a;
  DesignMatrix L;
  /// Column of L acting as effect modifier.
  Index modifier_index = 1;
  Vector psi_true;
};

/// Y = psi1 A + psi2 A Z + beta' L + e with Z = L*_1 and the Experiment 1 covariates.
InteractionDataset generate_interaction_dataset(Index n, Index p, Scalar psi1, Scalar psi2,
                                                std::uint64_t seed);

struct TwoPeriodDataset {
  Vector y;
  Vector a1;
  Vector a2;
  /// Baseline covariates with intercept.
  DesignMatrix L1;
  /// Post-baseline covariates without intercept.
  Matrix L2;
  /// (controlled direct effect of A1, effect of A2).
  Vector psi_true;
};

/// L1 -> A1 -> L2 -> A2 -> Y with L2 shifted by A1; the controlled direct effect
/// of A1 includes the path through L2.
TwoPeriodDataset generate_two_period_dataset(Index n, Index p1, Index p2, std::uint64_t seed);

// Monte Carlo ---------------------------------------------------------------------

enum class Estimator { NaiveOls, Pds, Po, PdsCv, PoCv, Hdbr };

std::string estimator_name(Estimator e);
Estimator parse_estimator(const std::string& name);

struct ReplicationResult {
  Estimator estimator = Estimator::Hdbr;
  bool ok = false;
  Scalar estimate = 0;
  Scalar se = 0;
  /// HDBR only: sqrt(vhat / n) of the score at the true effect.
  Scalar score_se = 0;
  Scalar lower = 0;
  Scalar upper = 0;
  bool covered = false;
};

struct MonteCarloOptions {
  int replications = 100;
  std::vector<Estimator> estimators{Estimator::Hdbr};
  Scalar alpha = 0.05;
  std::uint64_t master_seed = 20190101;
  int threads = 1;
  HdbrOptions hdbr;
  ComparatorOptions comparators;
};

/// Runs every estimator on one dataset.
std::vector<ReplicationResult> run_replication(const Dataset& data, const MonteCarloOptions& opts);

struct EstimatorSummary {
  Estimator estimator = Estimator::Hdbr;
  /// Scaled as in the published tables: bias, MCSD and MSE times 10, coverage times 100.
  Scalar bias = 0;
  Scalar mcsd = 0;
  Scalar mse = 0;
  Scalar coverage = 0;
  /// Mean score standard error times 10 (HDBR only, else 0).
  Scalar score_se = 0;
  int replications = 0;
  int failures = 0;
  bool flagged = false;
};

struct SimulationReport {
  DgpConfig config;
  int requested = 0;
  std::vector<EstimatorSummary> rows;
  /// Per-replication results, indexed [replication][estimator].
  std::vector<std::vector<ReplicationResult>> raw;
};

SimulationReport summarize(const DgpConfig& cfg, Scalar psi_true,
                           const std::vector<std::vector<ReplicationResult>>& raw,
                           const std::vector<Estimator>& estimators);

/// Replication r uses the dataset seed derive_seed(master_seed, 0, r).
SimulationReport run_monte_carlo(const DgpConfig& cfg, const MonteCarloOptions& opts);

enum class ReportFormat { Csv, Markdown };

void emit_report(const SimulationReport& report, ReportFormat format, std::ostream& out);
void emit_report(const SimulationReport& report, ReportFormat format, const std::string& path);

/// Reads back rows written by emit_report in CSV format.
std::vector<EstimatorSummary> parse_report_csv(const std::string& text);

// Configuration files ---------------------------------------------------------------

struct SimulationConfig {
  DgpConfig dgp;
  MonteCarloOptions mc;
  std::string output = "report";
  std::vector<ReportFormat> formats{ReportFormat::Csv, ReportFormat::Markdown};
};

/// key = value lines, '#' comments. Throws InputError naming the line on unknown
/// keys or malformed values.
SimulationConfig parse_simulation_config(const std::string& text);
SimulationConfig load_simulation_config(const std::string& path);

}  // namespace drscore
