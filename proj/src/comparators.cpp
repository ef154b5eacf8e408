#include "drscore/comparators.hpp"

#include <algorithm>
#include <cmath>

namespace drscore {

namespace {

struct OlsResult {
  Vector coefficients;
  Vector residuals;
};

OlsResult ols(const Matrix& X, const Vector& y) {
  if (X.cols() >= X.rows()) throw RefitError("refit failed: support not smaller than n");
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw RefitError("refit failed: singular restricted design");
  OlsResult out;
  out.coefficients = qr.solve(y);
  out.residuals = y - X * out.coefficients;
  return out;
}

Matrix columns(const DesignMatrix& L, const IndexList& cols) {
  Matrix m(L.n(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Index>(k)) = L.values().col(cols[k]);
  return m;
}

IndexList with_intercept(IndexList s, const DesignMatrix& L) {
  if (L.intercept_column()) s.push_back(*L.intercept_column());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

PostLasso post_lasso_at(const DesignMatrix& L, const Vector& y, Scalar lambda, const SolverOptions& so,
                        const std::optional<Vector>& warm) {
  const ObservationWeights ones = ObservationWeights::ones(L.n());
  const PenalizedFit fit = warm ? fit_weighted_lasso(L, y, ones, lambda, so, *warm)
                                : fit_weighted_lasso(L, y, ones, lambda, so);
  PostLasso out;
  out.lambda = lambda;
  out.support = with_intercept(fit.active_set, L);
  out.coefficients = refit_unpenalized(L, y, Family::Gaussian, out.support);
  return out;
}

// Estimate on A from OLS of y on [A, L_support] with homoscedastic SE.
PointEstimate ols_on_exposure(const Vector& y, const Vector& a, const DesignMatrix& L,
                              const IndexList& support) {
  Matrix X(L.n(), 1 + static_cast<Index>(support.size()));
  X.col(0) = a;
  X.rightCols(static_cast<Index>(support.size())) = columns(L, support);
  const OlsResult fit = ols(X, y);
  const Scalar dof = static_cast<Scalar>(X.rows() - X.cols());
  const Scalar s2 = fit.residuals.squaredNorm() / dof;
  const Matrix xtx_inv = (X.transpose() * X).inverse();
  PointEstimate out;
  out.estimate = fit.coefficients[0];
  out.se = std::sqrt(s2 * xtx_inv(0, 0));
  out.support = support;
  return out;
}

}  // namespace

Scalar plugin_lambda(Index n, Index p, Scalar sigma, Scalar c) {
  const Scalar nn = static_cast<Scalar>(n), pp = static_cast<Scalar>(p);
  const Scalar a = 0.05 / std::log(std::max(nn, pp));
  return c * sigma * std::sqrt(2.0 * std::log(2.0 * pp / a) / nn);
}

PostLasso plugin_post_lasso(const DesignMatrix& L, const Vector& y, const ComparatorOptions& opts) {
  SolverOptions so = opts.solver;
  so.scale = PenaltyScale::Standardized;
  const Index n = L.n();
  const Index p_pen = L.p() - (L.intercept_column() ? 1 : 0);
  Scalar sigma = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<Scalar>(n - 1));
  PostLasso out;
  std::optional<Vector> warm;
  for (int it = 0; it < opts.plugin_iterations; ++it) {
    out = post_lasso_at(L, y, plugin_lambda(n, std::max<Index>(p_pen, 1), sigma, opts.plugin_c), so, warm);
    const Vector r = y - L.values() * out.coefficients;
    const Scalar dof = static_cast<Scalar>(std::max<Index>(n - static_cast<Index>(out.support.size()), 1));
    const Scalar next = std::sqrt(r.squaredNorm() / dof);
    const bool done = std::abs(next - sigma) < 1e-4 * std::max(sigma, Scalar{1e-12});
    sigma = next;
    if (done || !(sigma > 0)) break;
  }
  return out;
}

PostLasso cv_post_lasso(const DesignMatrix& L, const Vector& y, const ComparatorOptions& opts) {
  const CvResult cv = cross_validate(L, y, Family::Gaussian, std::nullopt, opts.cv, opts.solver);
  return post_lasso_at(L, y, cv.lambda, opts.solver, std::nullopt);
}

PointEstimate estimate_naive_post_lasso(const Vector& y, const Vector& a, const DesignMatrix& L,
                                        const ComparatorOptions& opts) {
  if (y.size() != L.n() || a.size() != L.n()) throw InputError("dimension mismatch");
  Matrix X(L.n(), L.p() + 1);
  X.col(0) = a;
  X.rightCols(L.p()) = L.values();
  const std::optional<Index> icpt = L.intercept_column() ? std::optional<Index>(*L.intercept_column() + 1)
                                                         : std::nullopt;
  const DesignMatrix D(X, icpt);
  SolverOptions so = opts.solver;
  Vector pf = Vector::Ones(D.p());
  pf[0] = 0.0;
  if (icpt) pf[*icpt] = 0.0;
  so.penalty_factors = pf;
  const CvResult cv = cross_validate(D, y, Family::Gaussian, std::nullopt, opts.cv, so);
  const PenalizedFit fit = fit_weighted_lasso(D, y, ObservationWeights::ones(D.n()), cv.lambda, so);
  IndexList support;
  for (Index j : fit.active_set)
    if (j > 0) support.push_back(j - 1);
  return ols_on_exposure(y, a, L, with_intercept(support, L));
}

PointEstimate estimate_post_double_selection(const Vector& y, const Vector& a, const DesignMatrix& L,
                                             PenaltyChoice penalty, const ComparatorOptions& opts) {
  if (y.size() != L.n() || a.size() != L.n()) throw InputError("dimension mismatch");
  const bool plugin = penalty == PenaltyChoice::Plugin;
  const PostLasso fy = plugin ? plugin_post_lasso(L, y, opts) : cv_post_lasso(L, y, opts);
  const PostLasso fa = plugin ? plugin_post_lasso(L, a, opts) : cv_post_lasso(L, a, opts);
  IndexList u = fy.support;
  u.insert(u.end(), fa.support.begin(), fa.support.end());
  u = with_intercept(u, L);
  if (static_cast<Index>(u.size()) + 1 >= L.n()) throw RefitError("refit failed: union support too large");
  return ols_on_exposure(y, a, L, u);
}

PointEstimate estimate_partialling_out(const Vector& y, const Vector& a, const DesignMatrix& L,
                                       PenaltyChoice penalty, const ComparatorOptions& opts) {
  if (y.size() != L.n() || a.size() != L.n()) throw InputError("dimension mismatch");
  const bool plugin = penalty == PenaltyChoice::Plugin;
  const PostLasso fy = plugin ? plugin_post_lasso(L, y, opts) : cv_post_lasso(L, y, opts);
  const PostLasso fa = plugin ? plugin_post_lasso(L, a, opts) : cv_post_lasso(L, a, opts);
  const Vector ry = y - L.values() * fy.coefficients;
  const Vector ra = a - L.values() * fa.coefficients;
  const Scalar saa = ra.squaredNorm();
  if (!(saa > 1e-12 * static_cast<Scalar>(L.n()))) throw NumericalError("degenerate exposure residual variance");
  PointEstimate out;
  out.estimate = ra.dot(ry) / saa;
  const Vector e = ry - out.estimate * ra;
  out.se = std::sqrt((ra.array().square() * e.array().square()).sum()) / saa;
  IndexList u = fy.support;
  u.insert(u.end(), fa.support.begin(), fa.support.end());
  out.support = with_intercept(u, L);
  return out;
}

}  // namespace drscore
