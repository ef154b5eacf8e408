#include "drscore/nuisance.hpp"

#include <algorithm>

namespace drscore {

PropensityFit estimate_propensity(const DesignMatrix& L, const Vector& a,
                                  const PropensityOptions& opts) {
  if (a.size() != L.n()) throw InputError("dimension mismatch: exposure");
  if (!(opts.bump.factor > 1.0) || opts.bump.max_bumps < 0)
    throw InputError("invalid bump policy");
  const CvResult cv = cross_validate(L, a, Family::Logistic, std::nullopt, opts.cv, opts.solver);

  PropensityFit out;
  out.lambda_cv = cv.lambda;
  Scalar lambda = cv.lambda;
  std::optional<Vector> warm;
  for (int bump = 0; bump <= opts.bump.max_bumps; ++bump) {
    const PenalizedFit fit = warm ? fit_lasso_logistic(L, a, lambda, opts.solver, *warm)
                                  : fit_lasso_logistic(L, a, lambda, opts.solver);
    if (!fit.converged) throw NumericalError("propensity fit did not converge");
    warm = fit.coefficients;
    out.lambda_gamma = lambda;
    out.bumped = bump;
    out.selected = fit.active_set;
    if (!opts.refit) {
      out.gamma_hat = fit.coefficients;
      out.refit_support = fit.active_set;
      out.pi_hat = fitted_probabilities(L, out.gamma_hat);
      return out;
    }
    IndexList support = fit.active_set;
    if (L.intercept_column() &&
        std::find(support.begin(), support.end(), *L.intercept_column()) == support.end())
      support.push_back(*L.intercept_column());
    std::sort(support.begin(), support.end());
    try {
      out.gamma_hat = refit_unpenalized(L, a, Family::Logistic, support);
      out.refit_support = support;
      out.pi_hat = fitted_probabilities(L, out.gamma_hat);
      return out;
    } catch (const RefitError&) {
      lambda *= opts.bump.factor;
    }
  }
  throw NumericalError("propensity refit infeasible");
}

DesignMatrix outcome_design(const DesignMatrix& L, const std::optional<Vector>& modifier) {
  if (!modifier) return L;
  if (modifier->size() != L.n()) throw InputError("dimension mismatch: modifier");
  if (!modifier->allFinite()) throw InputError("non-finite modifier");
  return DesignMatrix(modifier->asDiagonal() * L.values(), std::nullopt);
}

Vector outcome_penalty_factors(const DesignMatrix& L) {
  Vector pf = Vector::Ones(L.p());
  if (L.intercept_column()) pf[*L.intercept_column()] = 0.0;
  return pf;
}

Scalar bias_gap(const DesignMatrix& X, const Vector& h, const Vector& w, const Vector& beta,
                const Vector& pf) {
  const Vector g = weighted_lasso_gradient(X, h, w, beta);
  Scalar gap = 0;
  for (Index j = 0; j < g.size(); ++j)
    if (pf[j] != 0.0) gap = std::max(gap, std::abs(g[j]));
  return gap;
}

namespace {
/// Stationarity tolerance of outcome fits relative to the penalty.
constexpr Scalar kCertificateTol = 1e-7;

SolverOptions outcome_options(const DesignMatrix& L, SolverOptions opts) {
  if (!opts.penalty_factors) opts.penalty_factors = outcome_penalty_factors(L);
  return opts;
}
}  // namespace

OutcomeNuisanceFit estimate_outcome_nuisance(const DesignMatrix& L, const Vector& h,
                                             const ObservationWeights& w, Scalar lambda_beta,
                                             const std::optional<Vector>& modifier,
                                             const SolverOptions& opts,
                                             const std::optional<Vector>& warm_start) {
  if (!(lambda_beta > 0)) throw InputError("outcome penalty must be positive");
  const DesignMatrix X = outcome_design(L, modifier);
  SolverOptions so = outcome_options(L, opts);
  so.kkt_tol = std::min(so.kkt_tol, kCertificateTol * lambda_beta);
  const PenalizedFit fit = warm_start ? fit_weighted_lasso(X, h, w, lambda_beta, so, *warm_start)
                                      : fit_weighted_lasso(X, h, w, lambda_beta, so);
  if (!fit.converged) throw NumericalError("outcome fit did not converge");
  OutcomeNuisanceFit out;
  out.beta_hat = fit.coefficients;
  out.m_hat = X.values() * fit.coefficients;
  out.lambda_beta = lambda_beta;
  out.bias_gap = bias_gap(X, h, w.values(), fit.coefficients, *so.penalty_factors);
  out.kkt_gap = fit.kkt_gap;
  out.active_set = fit.active_set;
  out.converged = fit.converged;
  return out;
}

Scalar select_lambda_beta(const DesignMatrix& L, const Vector& h_at_null, const ObservationWeights& w,
                          const CvSpec& cv, const std::optional<Vector>& modifier,
                          const SolverOptions& opts) {
  const DesignMatrix X = outcome_design(L, modifier);
  return cross_validate(X, h_at_null, Family::WeightedGaussian, w, cv, outcome_options(L, opts)).lambda;
}

}  // namespace drscore
