#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "drscore/nuisance.hpp"
#include "oracles.hpp"

#include <random>

using namespace drscore;

namespace {

struct Draw {
  DesignMatrix L;
  Vector a;
  Vector y;
};

Draw sparse_draw(Index n, Index p_cov, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix Z = oracle::random_matrix(n, p_cov, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector a(n), y(n);
  std::normal_distribution<double> e(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double eta = 0.2 + Z(i, 0) - 0.8 * Z(i, 1);
    a[i] = u(rng) < oracle::expit(eta) ? 1.0 : 0.0;
    y[i] = 0.3 * a[i] - Z(i, 0) + Z(i, 2) + e(rng);
  }
  return {DesignMatrix::with_intercept(Z), a, y};
}

}  // namespace

TEST_CASE("propensity: exposure independent of covariates") {
  std::mt19937_64 rng(8);
  const Index n = 200;
  const DesignMatrix L = DesignMatrix::with_intercept(oracle::random_matrix(n, 10, rng));
  std::bernoulli_distribution coin(0.5);
  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = coin(rng) ? 1.0 : 0.0;
  PropensityOptions opts;
  opts.cv.folds = 10;
  const PropensityFit fit = estimate_propensity(L, a, opts);
  CHECK(fit.bumped == 0);
  CHECK(fit.refit_support.size() <= 4);
  CHECK(fit.lambda_gamma == fit.lambda_cv);
  for (Index i = 0; i < n; ++i) {
    CHECK(fit.pi_hat[i] > 0.0);
    CHECK(fit.pi_hat[i] < 1.0);
  }
  for (Index j : fit.refit_support)
    CHECK((j == 0 || std::find(fit.selected.begin(), fit.selected.end(), j) != fit.selected.end()));
}

TEST_CASE("propensity: planted separating covariates trigger penalty bumps") {
  std::mt19937_64 rng(21);
  const Index n = 60;
  Matrix Z = oracle::random_matrix(n, 6, rng);
  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = (Z(i, 0) + 0.4 * Z(i, 1) > 0) ? 1.0 : 0.0;
  const DesignMatrix L = DesignMatrix::with_intercept(Z);
  const Scalar lmax = lambda_max(L, a, Family::Logistic, std::nullopt);
  PropensityOptions opts;
  opts.cv.lambda_grid = {0.02 * lmax};
  opts.cv.folds = 5;
  const PropensityFit fit = estimate_propensity(L, a, opts);
  CHECK(fit.bumped >= 1);
  CHECK(fit.lambda_gamma == doctest::Approx(0.02 * lmax * std::pow(1.05, fit.bumped)));

  // Rerun the selection trace: the first selection separates, the last one does not.
  const PenalizedFit first = fit_lasso_logistic(L, a, fit.lambda_cv);
  IndexList s0 = first.active_set;
  CHECK_THROWS_AS(refit_unpenalized(L, a, Family::Logistic, s0), RefitError);
  CHECK(fit.refit_support.size() < s0.size());
  const PenalizedFit before = fit_lasso_logistic(L, a, fit.lambda_gamma / 1.05);
  CHECK_THROWS_AS(refit_unpenalized(L, a, Family::Logistic, before.active_set), RefitError);
  CHECK_NOTHROW(refit_unpenalized(L, a, Family::Logistic, fit.refit_support));
}

TEST_CASE("propensity: exhausted bump budget") {
  std::mt19937_64 rng(22);
  const Index n = 40;
  Matrix Z = oracle::random_matrix(n, 3, rng);
  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = Z(i, 0) > 0 ? 1.0 : 0.0;
  const DesignMatrix L = DesignMatrix::with_intercept(Z);
  const Scalar lmax = lambda_max(L, a, Family::Logistic, std::nullopt);
  PropensityOptions opts;
  opts.cv.lambda_grid = {0.01 * lmax};
  opts.cv.folds = 4;
  opts.bump.max_bumps = 2;
  CHECK_THROWS_WITH_AS(estimate_propensity(L, a, opts), "propensity refit infeasible", NumericalError);
}

TEST_CASE("propensity: end-to-end against straight-line select and refit") {
  const Draw d = sparse_draw(150, 12, 31);
  PropensityOptions opts;
  opts.cv.folds = 10;
  const PropensityFit fit = estimate_propensity(d.L, d.a, opts);
  REQUIRE(fit.bumped == 0);

  const Matrix& X = d.L.values();
  Vector pf = Vector::Ones(X.cols());
  pf[0] = 0;
  const Vector g = oracle::prox_grad_logistic(X, d.a, fit.lambda_cv, pf, 1e-13);
  IndexList cols;
  for (Index j = 0; j < g.size(); ++j)
    if (j == 0 || std::abs(g[j]) > 1e-9) cols.push_back(j);
  Matrix Xs(X.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) Xs.col(static_cast<Index>(k)) = X.col(cols[k]);
  const Vector bs = oracle::newton_logistic(Xs, d.a);
  const Vector eta = Xs * bs;
  CHECK(fit.refit_support == cols);
  for (Index i = 0; i < X.rows(); ++i) CHECK(std::abs(fit.pi_hat[i] - oracle::expit(eta[i])) < 1e-8);
}

TEST_CASE("propensity: penalized-only mode and determinism") {
  const Draw d = sparse_draw(120, 8, 32);
  PropensityOptions opts;
  opts.cv.folds = 6;
  const PropensityFit r1 = estimate_propensity(d.L, d.a, opts);
  const PropensityFit r2 = estimate_propensity(d.L, d.a, opts);
  CHECK(r1.gamma_hat == r2.gamma_hat);
  CHECK(r1.pi_hat == r2.pi_hat);
  opts.refit = false;
  const PropensityFit pen = estimate_propensity(d.L, d.a, opts);
  const PenalizedFit direct = fit_lasso_logistic(d.L, d.a, pen.lambda_gamma);
  CHECK((pen.gamma_hat - direct.coefficients).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("outcome: constant weights reduce to the ordinary lasso") {
  const Draw d = sparse_draw(60, 8, 40);
  const ObservationWeights w(Vector::Constant(60, 0.2));
  const OutcomeNuisanceFit fit = estimate_outcome_nuisance(d.L, d.y, w, 0.02);
  const PenalizedFit plain = fit_weighted_lasso(d.L, d.y, ObservationWeights::ones(60), 0.1);
  CHECK((fit.beta_hat - plain.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(fit.bias_gap <= fit.lambda_beta * (1 + 1e-6));
}

TEST_CASE("outcome: realizable target") {
  std::mt19937_64 rng(41);
  const Index n = 50;
  const DesignMatrix L = DesignMatrix::with_intercept(oracle::random_matrix(n, 5, rng));
  Vector beta(6);
  beta << 0.5, 1.0, 0, -2.0, 0, 0;
  const Vector h = L.values() * beta;
  const ObservationWeights w(oracle::random_uniform(n, 0.05, 0.25, rng));
  const OutcomeNuisanceFit fit = estimate_outcome_nuisance(L, h, w, 1e-6);
  CHECK(fit.bias_gap <= 1e-6 * (1 + 1e-6));
  CHECK((h - fit.m_hat).lpNorm<Eigen::Infinity>() < 1e-3);
}

TEST_CASE("outcome: stored bias gap against straight-line recomputation") {
  std::mt19937_64 rng(42);
  const Index n = 25;
  const Matrix X = oracle::with_ones(oracle::random_matrix(n, 5, rng));
  const Vector h = oracle::random_vector(n, rng);
  const Vector w = oracle::random_uniform(n, 0.01, 0.25, rng);
  const OutcomeNuisanceFit fit =
      estimate_outcome_nuisance(DesignMatrix(X), h, ObservationWeights(w), 0.01);
  double gap = 0;
  for (Index j = 1; j < 6; ++j) {
    double s = 0;
    for (Index i = 0; i < n; ++i) {
      double m = 0;
      for (Index k = 0; k < 6; ++k) m += X(i, k) * fit.beta_hat[k];
      s += w[i] * (h[i] - m) * X(i, j);
    }
    gap = std::max(gap, std::abs(s / n));
  }
  CHECK(std::abs(gap - fit.bias_gap) < 1e-10);
  CHECK(fit.bias_gap <= 0.01 * (1 + 1e-6));
}

TEST_CASE("outcome: modifier scales the working regressor") {
  const Draw d = sparse_draw(80, 6, 43);
  const Vector z = d.L.values().col(2);
  const ObservationWeights w(Vector::Constant(80, 0.2));
  const OutcomeNuisanceFit fit = estimate_outcome_nuisance(d.L, d.y, w, 0.01, z);
  const Matrix X = z.asDiagonal() * d.L.values();
  CHECK((fit.m_hat - X * fit.beta_hat).norm() < 1e-12);
  const Vector g = X.transpose() * (w.values().array() * (d.y - fit.m_hat).array()).matrix() / 80.0;
  CHECK(std::abs(g[0]) < 1e-6);
  CHECK(g.tail(6).lpNorm<Eigen::Infinity>() == doctest::Approx(fit.bias_gap).epsilon(1e-12));
  CHECK(fit.bias_gap <= 0.01 * (1 + 1e-6));
}

TEST_CASE("outcome: depends on exposure data only through H and the weights") {
  const Draw d = sparse_draw(70, 6, 44);
  std::mt19937_64 rng(1);
  const ObservationWeights w(oracle::random_uniform(70, 0.1, 0.25, rng));
  Vector psi(1);
  psi << 0.5;
  // Dyadic values keep every shift exact.
  const Vector y = (d.y * 1024.0).array().round().matrix() / 1024.0;
  const Vector h1 = transform_outcome(y, Matrix(d.a), psi, Link::Identity);
  // A different exposure vector with the same H: shift Y accordingly.
  Vector a2 = Vector::Ones(70) - d.a;
  const Vector y2 = h1 + 0.5 * a2;
  const Vector h2 = transform_outcome(y2, Matrix(a2), psi, Link::Identity);
  const OutcomeNuisanceFit f1 = estimate_outcome_nuisance(d.L, h1, w, 0.02);
  const OutcomeNuisanceFit f2 = estimate_outcome_nuisance(d.L, h2, w, 0.02);
  CHECK(h1 == h2);
  CHECK(f1.beta_hat == f2.beta_hat);
}

TEST_CASE("select_lambda_beta: degenerate grid, null signal, brute-force oracle") {
  std::mt19937_64 rng(50);
  const Index n = 200;
  const DesignMatrix L = DesignMatrix::with_intercept(oracle::random_matrix(n, 10, rng));
  const ObservationWeights w(oracle::random_uniform(n, 0.1, 0.25, rng));
  const Vector noise = oracle::random_vector(n, rng);
  CvSpec one;
  one.lambda_grid = {0.123};
  one.folds = 5;
  CHECK(select_lambda_beta(L, noise, w, one) == 0.123);

  CvSpec cv;
  cv.folds = 10;
  cv.rng_seed = 3;
  const Scalar lam = select_lambda_beta(L, noise, w, cv);
  CHECK(estimate_outcome_nuisance(L, noise, w, lam).active_set.size() <= 3);

  const Draw d = sparse_draw(40, 5, 51);
  const ObservationWeights wd(oracle::random_uniform(40, 0.1, 0.25, rng));
  CvSpec small;
  small.folds = 5;
  small.rng_seed = 99;
  small.path_tolerance = 0;
  const Matrix X = d.L.values();
  Vector pf = Vector::Ones(6);
  pf[0] = 0;
  Scalar lmax = 0;
  {
    const double sw = wd.values().sum();
    const double ybar = wd.values().dot(d.y) / sw;
    const Vector g = X.transpose() * (wd.values().array() * (d.y.array() - ybar)).matrix() / 40.0;
    lmax = g.tail(5).lpNorm<Eigen::Infinity>();
  }
  for (int k = 0; k < 20; ++k) small.lambda_grid.push_back(lmax * std::pow(0.7, k));
  const std::vector<int> folds = oracle::folds_straight_line(40, 5, 99);
  double best = 1e300, best_lam = 0;
  for (double lam2 : small.lambda_grid) {
    double total = 0;
    for (int f = 0; f < 5; ++f) {
      std::vector<Index> tr, te;
      for (Index i = 0; i < 40; ++i) (folds[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
      Matrix Xt(static_cast<Index>(tr.size()), 6);
      Vector yt(static_cast<Index>(tr.size())), wt(static_cast<Index>(tr.size()));
      for (std::size_t r = 0; r < tr.size(); ++r) {
        Xt.row(static_cast<Index>(r)) = X.row(tr[r]);
        yt[static_cast<Index>(r)] = d.y[tr[r]];
        wt[static_cast<Index>(r)] = wd[tr[r]];
      }
      const Vector b = oracle::prox_grad_weighted_lasso(Xt, yt, wt, lam2, pf, 1e-13);
      double loss = 0;
      for (Index i : te) {
        const double r = d.y[i] - X.row(i).dot(b);
        loss += wd[i] * r * r;
      }
      total += loss / static_cast<double>(te.size());
    }
    if (total / 5 <= best) {
      best = total / 5;
      best_lam = lam2;
    }
  }
  CHECK(select_lambda_beta(d.L, d.y, wd, small) == best_lam);
}
