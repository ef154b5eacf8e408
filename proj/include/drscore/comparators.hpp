#pragma once

#include "drscore/penalized.hpp"

#include <string>

namespace drscore {

enum class PenaltyChoice { Plugin, CrossValidated };

struct PointEstimate {
  Scalar estimate = 0;
  Scalar se = 0;
  /// Covariate columns retained by the selection step(s), intercept included.
  IndexList support;
};

struct ComparatorOptions {
  CvSpec cv;
  SolverOptions solver;
  Scalar plugin_c = 1.1;
  int plugin_iterations = 15;
};

/// Plugin penalty c * sigma * sqrt(2 log(2p / a) / n) with a = 0.05 / log(max(n, p)),
/// for the objective with standardized penalty loadings.
Scalar plugin_lambda(Index n, Index p, Scalar sigma, Scalar c = 1.1);

/// Lasso with iterated plugin penalty: sigma starts at sd(y) and is updated from
/// post-lasso residuals. Returns the post-lasso coefficients and support.
struct PostLasso {
  Vector coefficients;
  IndexList support;
  Scalar lambda = 0;
};
PostLasso plugin_post_lasso(const DesignMatrix& L, const Vector& y, const ComparatorOptions& opts = {});
PostLasso cv_post_lasso(const DesignMatrix& L, const Vector& y, const ComparatorOptions& opts = {});

/// CV Lasso of Y on (A, L) with A unpenalized, OLS refit on A and the selected
/// covariates, homoscedastic standard error.
PointEstimate estimate_naive_post_lasso(const Vector& y, const Vector& a, const DesignMatrix& L,
                                        const ComparatorOptions& opts = {});

/// OLS of Y on A plus the union of the Y~L and A~L Lasso supports.
PointEstimate estimate_post_double_selection(const Vector& y, const Vector& a, const DesignMatrix& L,
                                             PenaltyChoice penalty, const ComparatorOptions& opts = {});

/// Residual-on-residual regression after post-Lasso fits of Y~L and A~L, HC0 standard error.
PointEstimate estimate_partialling_out(const Vector& y, const Vector& a, const DesignMatrix& L,
                                       PenaltyChoice penalty, const ComparatorOptions& opts = {});

}  // namespace drscore
