#pragma once

#include "drscore/penalized.hpp"
#include "drscore/score.hpp"

#include <optional>

namespace drscore {

struct BumpPolicy {
  Scalar factor = 1.05;
  int max_bumps = 100;
};

struct PropensityOptions {
  CvSpec cv;
  BumpPolicy bump;
  SolverOptions solver;
  /// Predict from the maximum-likelihood refit on the selected support; when
  /// false the penalized coefficients are used directly.
  bool refit = true;
};

struct PropensityFit {
  Vector gamma_hat;
  Vector pi_hat;
  Scalar lambda_gamma = 0;
  /// Penalty chosen by cross-validation before any bump.
  Scalar lambda_cv = 0;
  int bumped = 0;
  IndexList refit_support;
  /// Active set of the penalized fit at the final penalty.
  IndexList selected;
};

/// Cross-validated penalized logistic fit of A on L followed by a refit on the
/// selected support. A failed refit raises the penalty by `bump.factor` and
/// repeats the selection; throws NumericalError once `bump.max_bumps` is spent.
PropensityFit estimate_propensity(const DesignMatrix& L, const Vector& a,
                                  const PropensityOptions& opts = {});

struct OutcomeNuisanceFit {
  Vector beta_hat;
  Vector m_hat;
  Scalar lambda_beta = 0;
  EffectParameter psi_at_fit;
  /// max over penalized j of |(1/n) sum_i w_i (H_i - m_i) X_ij|, where X is the
  /// working regressor (L, or L scaled row-wise by the modifier).
  Scalar bias_gap = 0;
  Scalar kkt_gap = 0;
  IndexList active_set;
  bool converged = false;
};

/// Working regressor for the outcome fit: L itself, or diag(z) L with the
/// intercept column left unpenalized.
DesignMatrix outcome_design(const DesignMatrix& L, const std::optional<Vector>& modifier);

/// Penalty factors matching outcome_design.
Vector outcome_penalty_factors(const DesignMatrix& L);

/// Weighted Lasso of H on the working regressor with weights w. The fitted
/// values are m = X beta_hat. Stationarity is enforced to 1e-7 lambda_beta, so a
/// returned fit satisfies bias_gap <= lambda_beta (1 + 1e-7).
OutcomeNuisanceFit estimate_outcome_nuisance(const DesignMatrix& L, const Vector& h,
                                             const ObservationWeights& w, Scalar lambda_beta,
                                             const std::optional<Vector>& modifier = std::nullopt,
                                             const SolverOptions& opts = {},
                                             const std::optional<Vector>& warm_start = std::nullopt);

/// Recomputes the bias certificate for given coefficients.
Scalar bias_gap(const DesignMatrix& X, const Vector& h, const Vector& w, const Vector& beta,
                const Vector& pf);

/// Weighted-Gaussian cross-validation of H(0) on the working regressor.
Scalar select_lambda_beta(const DesignMatrix& L, const Vector& h_at_null, const ObservationWeights& w,
                          const CvSpec& cv, const std::optional<Vector>& modifier = std::nullopt,
                          const SolverOptions& opts = {});

}  // namespace drscore
