#pragma once

#include "drscore/core.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace drscore {

enum class Family { Gaussian, WeightedGaussian, Logistic };

/// Raw: penalty lambda * |b_j| on the coefficient as given.
/// Standardized: penalty lambda * sd_w(x_j) * |b_j|, i.e. a Lasso on columns
/// scaled to unit weighted standard deviation, mapped back to the raw scale.
enum class PenaltyScale { Raw, Standardized };

struct SolverOptions {
  Scalar coef_tol = 1e-7;
  Scalar kkt_tol = 1e-6;
  int max_sweeps = 10000;
  int max_outer = 100;
  bool penalize_intercept = false;
  PenaltyScale scale = PenaltyScale::Raw;
  /// Overrides the scale-derived penalty factors when set (length p).
  std::optional<Vector> penalty_factors;
  /// Solve the sign-fixed stationarity system on the active set once coordinate
  /// descent has converged; accepted only when it lowers the KKT gap.
  bool polish = true;
  bool record_trace = false;
};

struct PenalizedFit {
  Vector coefficients;
  Scalar lambda = 0;
  IndexList active_set;
  Scalar kkt_gap = 0;
  int iterations = 0;
  bool converged = false;
  /// Objective after every coordinate sweep (only with record_trace).
  std::vector<Scalar> objective_trace;
};

/// Per-column multipliers of lambda implied by the options (0 for the intercept).
Vector penalty_factors(const DesignMatrix& X, const Vector& w, const SolverOptions& opts);

// Objectives ---------------------------------------------------------------

/// (1/2n) sum_i w_i (y_i - x_i'b)^2 + lambda sum_j pf_j |b_j|
Scalar weighted_lasso_objective(const DesignMatrix& X, const Vector& y, const Vector& w,
                                const Vector& beta, Scalar lambda, const Vector& pf);

/// (1/n) sum_i [log(1 + exp(x_i'b)) - a_i x_i'b] + lambda sum_j pf_j |b_j|
Scalar logistic_lasso_objective(const DesignMatrix& X, const Vector& a, const Vector& beta,
                                Scalar lambda, const Vector& pf);

/// (1/n) X' W (y - X b): the negative gradient of the smooth part.
Vector weighted_lasso_gradient(const DesignMatrix& X, const Vector& y, const Vector& w,
                               const Vector& beta);

/// (1/n) X' (a - expit(X b))
Vector logistic_gradient(const DesignMatrix& X, const Vector& a, const Vector& beta);

/// Sup-norm violation of the Lasso stationarity conditions given the negative
/// smooth gradient.
Scalar kkt_gap(const Vector& neg_gradient, const Vector& beta, Scalar lambda, const Vector& pf);

// Solvers ------------------------------------------------------------------

PenalizedFit fit_weighted_lasso(const DesignMatrix& X, const Vector& y, const ObservationWeights& w,
                                Scalar lambda, const SolverOptions& opts = {});
PenalizedFit fit_weighted_lasso(const DesignMatrix& X, const Vector& y, const ObservationWeights& w,
                                Scalar lambda, const SolverOptions& opts, const Vector& warm_start);

PenalizedFit fit_lasso_logistic(const DesignMatrix& X, const Vector& a, Scalar lambda,
                                const SolverOptions& opts = {});
PenalizedFit fit_lasso_logistic(const DesignMatrix& X, const Vector& a, Scalar lambda,
                                const SolverOptions& opts, const Vector& warm_start);

/// Smallest lambda at which every penalized coefficient is zero.
Scalar lambda_max(const DesignMatrix& X, const Vector& y, Family family,
                  const std::optional<ObservationWeights>& w, const SolverOptions& opts = {});

/// `count` log-spaced values from `lmax` down to `ratio * lmax`.
std::vector<Scalar> log_lambda_grid(Scalar lmax, int count = 100, Scalar ratio = 1e-3);

/// Warm-started fits along a decreasing grid. The logistic path stops early once
/// the training deviance ratio exceeds 0.999 (the remaining fits are omitted).
std::vector<PenalizedFit> weighted_lasso_path(const DesignMatrix& X, const Vector& y,
                                              const ObservationWeights& w,
                                              const std::vector<Scalar>& grid,
                                              const SolverOptions& opts = {});
std::vector<PenalizedFit> logistic_lasso_path(const DesignMatrix& X, const Vector& a,
                                              const std::vector<Scalar>& grid,
                                              const SolverOptions& opts = {});

// Unpenalized refit ----------------------------------------------------------

/// Restricted least squares (Gaussian families) or logistic maximum likelihood
/// on the support columns. Throws RefitError when the restricted problem is
/// singular, separated, or does not converge.
Vector refit_unpenalized(const DesignMatrix& X, const Vector& y, Family family,
                         const IndexList& support,
                         const std::optional<ObservationWeights>& w = std::nullopt);

// Cross-validation -----------------------------------------------------------

struct CvSpec {
  int folds = 20;
  /// Strictly decreasing; empty means the default 100-point grid.
  std::vector<Scalar> lambda_grid;
  std::uint64_t rng_seed = 20190101;
  int default_grid_size = 100;
  Scalar default_grid_ratio = 1e-3;
  /// Fold paths stop refining once coefficient changes fall below this multiple
  /// of the response scale (0 keeps the full solver tolerances).
  Scalar path_tolerance = 1e-3;
};

struct CvResult {
  Scalar lambda = 0;
  Index best = 0;
  std::vector<Scalar> grid;
  std::vector<Scalar> mean_loss;
  std::uint64_t seed_used = 0;
};

/// Fold label for each observation: a seeded shuffle dealt round-robin.
std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed);

/// Grid value minimizing mean out-of-fold loss; ties go to the smaller lambda.
CvResult cross_validate(const DesignMatrix& X, const Vector& y, Family family,
                        const std::optional<ObservationWeights>& w, const CvSpec& spec,
                        const SolverOptions& opts = {});

/// Mean out-of-fold loss of `fit` coefficients on held-out rows.
Scalar heldout_loss(const DesignMatrix& X, const Vector& y, Family family, const Vector& w,
                    const Vector& beta, const IndexList& rows);

}  // namespace drscore
