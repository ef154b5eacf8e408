#include "drscore/score.hpp"

#include <Eigen/Eigenvalues>

namespace drscore {

ScoreEvaluation score_moments(const Matrix& scores, VarianceCentering centering) {
  const Index n = scores.rows(), k = scores.cols();
  if (k < 1) throw InputError("score matrix has no columns");
  if (n <= k) throw InputError("need more observations than score components");
  if (!scores.allFinite()) throw InputError("non-finite scores");
  ScoreEvaluation ev;
  ev.per_obs = scores;
  ev.dof = static_cast<int>(k);
  ev.mean = scores.colwise().mean().transpose();
  if (centering == VarianceCentering::Centered) {
    const Matrix c = scores.rowwise() - ev.mean.transpose();
    ev.vhat = c.transpose() * c / static_cast<Scalar>(n);
  } else {
    ev.vhat = scores.transpose() * scores / static_cast<Scalar>(n);
  }
  return ev;
}

ScoreEvaluation test_statistic(const Matrix& scores, VarianceCentering centering) {
  ScoreEvaluation ev = score_moments(scores, centering);
  const Scalar n = static_cast<Scalar>(scores.rows());
  if (ev.dof == 1) {
    const Scalar v = ev.vhat(0, 0);
    if (!(v > 0)) throw DegenerateVarianceError();
    ev.tsq = n * ev.mean[0] * ev.mean[0] / v;
    return ev;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(ev.vhat);
  const Scalar hi = es.eigenvalues().maxCoeff();
  const Scalar lo = es.eigenvalues().minCoeff();
  if (!(hi > 0) || lo / hi < 1e-12) throw DegenerateVarianceError();
  const Vector z = es.eigenvectors().transpose() * ev.mean;
  ev.tsq = n * (z.array().square() / es.eigenvalues().array()).sum();
  return ev;
}

Vector fitted_probabilities(const DesignMatrix& L, const Vector& gamma) {
  if (gamma.size() != L.p()) throw InputError("dimension mismatch: propensity coefficients");
  if (!gamma.allFinite()) throw InputError("non-finite propensity coefficients");
  const Vector eta = L.values() * gamma;
  return eta.unaryExpr([](Scalar e) { return clamp_probability(expit(e)); });
}

ObservationWeights compute_weights(const DesignMatrix& L, const Vector& gamma) {
  const Vector p = fitted_probabilities(L, gamma);
  return ObservationWeights((p.array() * (1.0 - p.array())).matrix());
}

}  // namespace drscore
