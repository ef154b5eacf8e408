#pragma once

#include "drscore/core.hpp"

namespace drscore {

enum class Link { Identity, Log };

/// Log-link outcome transform. Exp: H = Y exp(-A psi). Expit: H = Y expit(-A psi),
/// the single-exposure variant kept for comparison studies.
enum class LogTransform { Exp, Expit };

enum class VarianceCentering { Uncentered, Centered };

/// Effect parameter psi (length k).
using EffectParameter = Vector;

/// H(psi) for an n x k exposure design.
template <typename DY, typename DA, typename DP>
Vector transform_outcome(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DA>& a_terms,
                         const Eigen::MatrixBase<DP>& psi, Link link,
                         LogTransform log_form = LogTransform::Exp) {
  if (a_terms.rows() != y.size() || a_terms.cols() != psi.size())
    throw InputError("dimension mismatch in outcome transform");
  const Vector shift = a_terms * psi;
  if (link == Link::Identity) return y - shift;
  if (log_form == LogTransform::Expit) {
    if (psi.size() != 1) throw InputError("expit log transform is defined for a single exposure term");
    return y.cwiseProduct(shift.unaryExpr([](Scalar s) { return expit(-s); }));
  }
  return y.cwiseProduct((-shift.array()).exp().matrix());
}

/// Per-observation doubly robust scores
///   U_ij = modifier_ij (A_ij - pi_ij)(H_i - m_ij).
template <typename DH, typename DA, typename DP, typename DM, typename DZ>
Matrix score_vector(const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DA>& a_terms,
                    const Eigen::MatrixBase<DP>& pi_hat, const Eigen::MatrixBase<DM>& m_hat,
                    const Eigen::MatrixBase<DZ>& modifiers) {
  const Index n = h.size(), k = a_terms.cols();
  if (a_terms.rows() != n || pi_hat.rows() != n || m_hat.rows() != n || modifiers.rows() != n ||
      pi_hat.cols() != k || m_hat.cols() != k || modifiers.cols() != k)
    throw InputError("dimension mismatch in score");
  if (!h.allFinite() || !a_terms.allFinite() || !pi_hat.allFinite() || !m_hat.allFinite() ||
      !modifiers.allFinite())
    throw InputError("non-finite score input");
  Matrix u(n, k);
  for (Index j = 0; j < k; ++j)
    u.col(j) = (modifiers.col(j).array() * (a_terms.col(j) - pi_hat.col(j)).array() *
                (h - m_hat.col(j)).array())
                   .matrix();
  return u;
}

template <typename DH, typename DA, typename DP, typename DM>
Matrix score_vector(const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DA>& a_terms,
                    const Eigen::MatrixBase<DP>& pi_hat, const Eigen::MatrixBase<DM>& m_hat) {
  return score_vector(h, a_terms, pi_hat, m_hat, Matrix::Ones(a_terms.rows(), a_terms.cols()));
}

struct ScoreEvaluation {
  Matrix per_obs;
  Vector mean;
  Matrix vhat;
  Scalar tsq = 0;
  int dof = 0;
};

/// Mean and second-moment matrix of the scores; no invertibility required.
ScoreEvaluation score_moments(const Matrix& scores,
                              VarianceCentering centering = VarianceCentering::Uncentered);

/// Adds T^2 = n mean' vhat^{-1} mean. Throws DegenerateVarianceError when the
/// reciprocal condition number of vhat is below 1e-12.
ScoreEvaluation test_statistic(const Matrix& scores,
                               VarianceCentering centering = VarianceCentering::Uncentered);

/// expit(L gamma), clamped away from 0 and 1.
Vector fitted_probabilities(const DesignMatrix& L, const Vector& gamma);

/// w_i = pi_i (1 - pi_i) with pi_i = expit(gamma' L_i).
ObservationWeights compute_weights(const DesignMatrix& L, const Vector& gamma);

}  // namespace drscore
