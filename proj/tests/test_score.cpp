#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "drscore/score.hpp"
#include "drscore/stats.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <random>

using namespace drscore;

TEST_CASE("transform: psi = 0 leaves the outcome unchanged for both links") {
  std::mt19937_64 rng(3);
  const Vector y = oracle::random_vector(12, rng);
  const Matrix a = oracle::random_matrix(12, 2, rng);
  const Vector zero = Vector::Zero(2);
  CHECK((transform_outcome(y, a, zero, Link::Identity) - y).norm() == 0.0);
  CHECK((transform_outcome(y, a, zero, Link::Log) - y).norm() == 0.0);
}

TEST_CASE("transform: identity link arithmetic and reconstruction") {
  Vector y(2), a(2), psi(1);
  y << 3, 1;
  a << 1, 0;
  psi << 0.3;
  const Vector h = transform_outcome(y, Matrix(a), psi, Link::Identity);
  CHECK(h[0] == doctest::Approx(2.7).epsilon(1e-15));
  CHECK(h[1] == 1.0);

  std::mt19937_64 rng(4);
  const Vector yy = oracle::random_vector(20, rng);
  const Matrix aa = oracle::random_matrix(20, 2, rng);
  const Vector pp = oracle::random_vector(2, rng);
  const Vector hh = transform_outcome(yy, aa, pp, Link::Identity);
  CHECK((hh + aa * pp - yy).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("transform: log link with an exposure-modifier column") {
  Vector y(1);
  y << 2;
  Matrix terms(1, 2);
  terms << 1, 1;  // A and A*Z with A = Z = 1
  Vector psi(2);
  psi << 0.5, 0.5;
  const Vector h = transform_outcome(y, terms, psi, Link::Log);
  CHECK(h[0] == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));
  CHECK(h[0] == doctest::Approx(0.735758).epsilon(1e-6));
}

TEST_CASE("transform: expit variant and dimension checks") {
  Vector y(2), psi(1);
  y << 2, 4;
  Matrix a(2, 1);
  a << 1, 0;
  psi << 0.7;
  const Vector h = transform_outcome(y, a, psi, Link::Log, LogTransform::Expit);
  CHECK(h[0] == doctest::Approx(2.0 / (1.0 + std::exp(0.7))));
  CHECK(h[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(transform_outcome(y, Matrix(3, 1), psi, Link::Identity), InputError);
  CHECK_THROWS_AS(transform_outcome(y, Matrix::Ones(2, 2), Vector::Zero(2), Link::Log, LogTransform::Expit),
                  InputError);
}

TEST_CASE("score: residual annihilation and direct arithmetic") {
  std::mt19937_64 rng(5);
  const Index n = 15;
  Matrix a(n, 1);
  for (Index i = 0; i < n; ++i) a(i, 0) = (i % 3 == 0) ? 1.0 : 0.0;
  const Vector h = oracle::random_vector(n, rng);
  const Matrix pi = oracle::random_uniform(n, 0.1, 0.9, rng);
  const Matrix m = oracle::random_vector(n, rng);
  CHECK(score_vector(h, a, a, m).norm() == 0.0);
  CHECK(score_vector(h, a, pi, Matrix(h)).norm() == 0.0);

  Vector h2(2);
  h2 << 2, 1;
  Matrix a2(2, 1), p2(2, 1), m2(2, 1);
  a2 << 1, 0;
  p2 << 0.5, 0.25;
  m2 << 1, 1;
  const Matrix u = score_vector(h2, a2, p2, m2);
  CHECK(u(0, 0) == 0.5);
  CHECK(u(1, 0) == 0.0);
}

TEST_CASE("score: modifiers multiply columns; non-finite input rejected") {
  Vector h(3);
  h << 1, 2, 3;
  Matrix a = Matrix::Ones(3, 2), pi = Matrix::Constant(3, 2, 0.5), m = Matrix::Zero(3, 2);
  Matrix z = Matrix::Ones(3, 2);
  z.col(1) << 2, 0, -1;
  const Matrix u = score_vector(h, a, pi, m, z);
  CHECK(u(0, 1) == doctest::Approx(1.0));
  CHECK(u(1, 1) == 0.0);
  CHECK(u(2, 1) == doctest::Approx(-1.5));
  CHECK((u.col(0) - 0.5 * h).norm() == 0.0);
  h[1] = std::nan("");
  CHECK_THROWS_AS(score_vector(h, a, pi, m), InputError);
}

TEST_CASE("statistic: constant and alternating scores") {
  const Index n = 10;
  const Matrix c = Matrix::Constant(n, 1, -1.7);
  const ScoreEvaluation ev = test_statistic(c);
  CHECK(ev.vhat(0, 0) == doctest::Approx(1.7 * 1.7));
  CHECK(ev.tsq == doctest::Approx(static_cast<double>(n)));
  CHECK(ev.dof == 1);

  Matrix alt(n, 1);
  for (Index i = 0; i < n; ++i) alt(i, 0) = (i % 2 ? -2.0 : 2.0);
  const ScoreEvaluation ea = test_statistic(alt);
  CHECK(ea.mean[0] == 0.0);
  CHECK(ea.tsq == 0.0);
}

TEST_CASE("statistic: seeded 10x1 scores against straight-line arithmetic") {
  std::mt19937_64 rng(2718);
  const Vector s = oracle::random_vector(10, rng);
  double sum = 0, sq = 0;
  for (Index i = 0; i < 10; ++i) {
    sum += s[i];
    sq += s[i] * s[i];
  }
  const double mean = sum / 10, v = sq / 10;
  const double expected = 10 * mean * mean / v;
  CHECK(test_statistic(Matrix(s)).tsq == doctest::Approx(expected).epsilon(1e-13));

  const ScoreEvaluation centered = test_statistic(Matrix(s), VarianceCentering::Centered);
  CHECK(centered.vhat(0, 0) == doctest::Approx(v - mean * mean).epsilon(1e-13));
}

TEST_CASE("statistic: two-column form, scale invariance, PSD") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix s = oracle::random_matrix(30, 2, rng);
    s.col(0).array() += 0.3;
    const ScoreEvaluation ev = test_statistic(s);
    const Vector mean = s.colwise().mean().transpose();
    const Matrix v = s.transpose() * s / 30.0;
    const double direct = 30.0 * mean.dot(v.fullPivLu().solve(mean));
    CHECK(ev.tsq == doctest::Approx(direct).epsilon(1e-10));
    CHECK(ev.tsq >= 0.0);
    for (double c : {-3.0, 1e-3, 250.0}) {
      const Matrix sc = c * s;
      CHECK(std::abs(test_statistic(sc).tsq - ev.tsq) <= 1e-10 * std::max(1.0, ev.tsq));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(ev.vhat);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK((ev.vhat - ev.vhat.transpose()).norm() == 0.0);
  }
}

TEST_CASE("statistic: degenerate variance") {
  CHECK_THROWS_AS(test_statistic(Matrix::Zero(8, 1)), DegenerateVarianceError);
  std::mt19937_64 rng(12);
  Matrix s(20, 2);
  s.col(0) = oracle::random_vector(20, rng);
  s.col(1) = s.col(0);
  CHECK_THROWS_AS(test_statistic(s), DegenerateVarianceError);
  CHECK_THROWS_AS(test_statistic(Matrix::Ones(2, 2)), InputError);
}

TEST_CASE("weights: closed forms and saturation") {
  std::mt19937_64 rng(13);
  const DesignMatrix L = DesignMatrix::with_intercept(oracle::random_matrix(9, 3, rng));
  const ObservationWeights w0 = compute_weights(L, Vector::Zero(4));
  for (Index i = 0; i < 9; ++i) CHECK(w0[i] == 0.25);

  Vector g = Vector::Zero(4);
  g[0] = std::log(0.9 / 0.1);
  const ObservationWeights w1 = compute_weights(L, g);
  for (Index i = 0; i < 9; ++i) CHECK(w1[i] == doctest::Approx(0.09).epsilon(1e-12));

  g[0] = 400.0;
  const ObservationWeights w2 = compute_weights(L, g);
  for (Index i = 0; i < 9; ++i) {
    CHECK(w2[i] >= kProbClamp * (1 - kProbClamp));
    CHECK(w2[i] < 1e-7);
  }
  CHECK_THROWS_AS(compute_weights(L, Vector::Zero(3)), InputError);
}

TEST_CASE("stats helpers") {
  CHECK(chi2_critical(1, 0.05) == doctest::Approx(3.841458820694124).epsilon(1e-12));
  CHECK(chi2_critical(2, 0.05) == doctest::Approx(5.991464547107979).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  const MeanSd ms = mean_sd({1.0, 2.0, 3.0, 4.0});
  CHECK(ms.mean == 2.5);
  CHECK(ms.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
}
