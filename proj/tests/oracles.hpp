#pragma once

// Independent reference computations used only by the test suites. Nothing in
// here calls into the coordinate-descent solvers.

#include "drscore/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace drscore::oracle {

inline Matrix random_matrix(Index n, Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = z(rng);
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

inline Vector random_uniform(Index n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Design with a leading column of ones.
inline Matrix with_ones(const Matrix& m) {
  Matrix out(m.rows(), m.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(m.cols()) = m;
  return out;
}

inline double soft(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

/// FISTA with adaptive restart on (1/2n) sum w (y - Xb)^2 + lambda sum pf |b|.
inline Vector prox_grad_weighted_lasso(const Matrix& X, const Vector& y, const Vector& w,
                                       double lambda, const Vector& pf, double tol = 1e-12,
                                       int max_iter = 2000000) {
  const double n = static_cast<double>(X.rows());
  const Matrix G = X.transpose() * w.asDiagonal() * X / n;
  const Vector c = X.transpose() * w.asDiagonal() * y / n;
  Eigen::SelfAdjointEigenSolver<Matrix> es(G);
  const double L = es.eigenvalues().maxCoeff();
  const double step = 1.0 / L;
  Vector b = Vector::Zero(X.cols()), z = b, prev = b;
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector grad = G * z - c;
    Vector nb = z - step * grad;
    for (Index j = 0; j < nb.size(); ++j) nb[j] = soft(nb[j], step * lambda * pf[j]);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Restart momentum when it points uphill.
    if ((z - nb).dot(nb - b) > 0) {
      z = nb;
      t = 1.0;
    } else {
      z = nb + ((t - 1.0) / tn) * (nb - b);
      t = tn;
    }
    const double change = (nb - b).lpNorm<Eigen::Infinity>();
    b = nb;
    if (it > 10 && change < tol) break;
  }
  return b;
}

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Proximal gradient on (1/n) sum [log(1+e^eta) - a eta] + lambda sum pf |b|.
inline Vector prox_grad_logistic(const Matrix& X, const Vector& a, double lambda, const Vector& pf,
                                 double tol = 1e-12, int max_iter = 5000000) {
  const double n = static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(X.transpose() * X / n);
  const double L = 0.25 * es.eigenvalues().maxCoeff();
  const double step = 1.0 / L;
  Vector b = Vector::Zero(X.cols()), z = b;
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector eta = X * z;
    Vector p(eta.size());
    for (Index i = 0; i < eta.size(); ++i) p[i] = expit(eta[i]);
    const Vector grad = X.transpose() * (p - a) / n;
    Vector nb = z - step * grad;
    for (Index j = 0; j < nb.size(); ++j) nb[j] = soft(nb[j], step * lambda * pf[j]);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((z - nb).dot(nb - b) > 0) {
      z = nb;
      t = 1.0;
    } else {
      z = nb + ((t - 1.0) / tn) * (nb - b);
      t = tn;
    }
    const double change = (nb - b).lpNorm<Eigen::Infinity>();
    b = nb;
    if (it > 10 && change < tol) break;
  }
  return b;
}

/// Plain Newton-Raphson logistic MLE on the given columns (full-pivot LU).
inline Vector newton_logistic(const Matrix& X, const Vector& a, int iters = 200) {
  Vector b = Vector::Zero(X.cols());
  for (int it = 0; it < iters; ++it) {
    Vector eta = X * b;
    Vector p(eta.size()), wv(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      p[i] = expit(eta[i]);
      wv[i] = p[i] * (1 - p[i]);
    }
    const Vector g = X.transpose() * (a - p);
    const Matrix H = X.transpose() * wv.asDiagonal() * X;
    const Vector step = H.fullPivLu().solve(g);
    b += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
  }
  return b;
}

/// Fisher-Yates deal identical in spirit to the library's fold assignment,
/// written out independently.
inline std::vector<int> folds_straight_line(Index n, int k, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 eng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(eng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> f(static_cast<std::size_t>(n));
  for (Index pos = 0; pos < n; ++pos) f[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % k);
  return f;
}

/// KKT residual of the weighted Lasso computed from scratch.
inline double kkt_violation(const Matrix& X, const Vector& y, const Vector& w, const Vector& b,
                            double lambda, const Vector& pf) {
  const double n = static_cast<double>(X.rows());
  const Vector g = X.transpose() * (w.array() * (y - X * b).array()).matrix() / n;
  double worst = 0;
  for (Index j = 0; j < b.size(); ++j) {
    const double t = lambda * pf[j];
    double v;
    if (t == 0) v = std::abs(g[j]);
    else if (b[j] != 0) v = std::abs(g[j] - t * (b[j] > 0 ? 1.0 : -1.0));
    else v = std::max(0.0, std::abs(g[j]) - t);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace drscore::oracle
