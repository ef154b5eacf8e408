#pragma once

#include "drscore/inversion.hpp"

#include <array>
#include <optional>

namespace drscore {

// Effect modification -------------------------------------------------------------

struct InteractionSpec {
  /// Column of L acting as the modifier Z (never the intercept).
  Index modifier_index = 1;
};

/// Two-component system for psi = (main effect, effect per unit of Z):
///   U1 = (A - pi)(H - m1),  m1 from the weighted Lasso of H on L,
///   U2 = Z (A - pi)(H - m2), m2 from the weighted Lasso of H on diag(Z) L,
/// with H = Y - psi1 A - psi2 A Z (or its log-link analogue) and a single
/// propensity fit shared by both components.
class InteractionScoreSystem : public ScoreSystem {
 public:
  InteractionScoreSystem(Vector y, Vector a, DesignMatrix L, const InteractionSpec& spec,
                         const HdbrOptions& opts = {},
                         const std::array<std::optional<Scalar>, 2>& lambda_beta = {});

  int dof() const override { return 2; }
  Index n() const override { return L_.n(); }
  Matrix scores(const EffectParameter& psi) const override;
  VarianceCentering centering() const override { return opts_.centering; }

  /// Outcome fits (component 1, component 2) at psi.
  std::array<OutcomeNuisanceFit, 2> outcome_fits(const EffectParameter& psi) const;

  const PropensityFit& propensity() const { return prop_; }
  const Vector& modifier() const { return z_; }
  Scalar lambda_beta(int component) const { return lambda_[static_cast<std::size_t>(component)]; }

 private:
  Vector transformed(const EffectParameter& psi) const;

  Vector y_, a_;
  DesignMatrix L_;
  Vector z_;
  HdbrOptions opts_;
  PropensityFit prop_;
  ObservationWeights w_;
  std::array<Scalar, 2> lambda_{};
};

// Three-level exposure --------------------------------------------------------------

/// Exposure coded 0, 1, 2 with indicators A1 = 1{A = 1}, A2 = 1{A = 2}:
///   Uj = (Aj - pi_j)(H - m_j), H = Y - psi1 A1 - psi2 A2,
/// where pi_j is a separate penalized logistic fit of Aj on L and m_j uses
/// the weights pi_j (1 - pi_j) only.
class CategoricalScoreSystem : public ScoreSystem {
 public:
  CategoricalScoreSystem(Vector y, const Vector& a, DesignMatrix L, const HdbrOptions& opts = {});

  int dof() const override { return 2; }
  Index n() const override { return L_.n(); }
  Matrix scores(const EffectParameter& psi) const override;
  VarianceCentering centering() const override { return opts_.centering; }

  const PropensityFit& propensity(int level) const { return prop_[static_cast<std::size_t>(level - 1)]; }
  Scalar lambda_beta(int level) const { return lambda_[static_cast<std::size_t>(level - 1)]; }
  const Matrix& indicators() const { return ind_; }

 private:
  Vector y_;
  Matrix ind_;
  DesignMatrix L_;
  HdbrOptions opts_;
  std::array<PropensityFit, 2> prop_;
  std::array<ObservationWeights, 2> w_;
  std::array<Scalar, 2> lambda_{};
};

// Two time points -------------------------------------------------------------------

struct TwoPeriodData {
  Vector y;
  Vector a1;
  Vector a2;
  /// Baseline covariates with intercept.
  DesignMatrix L1;
  /// Covariates measured between A1 and A2 (no intercept).
  Matrix L2;
};

/// Period-2 design (intercept, L1, A1, L2).
DesignMatrix period_two_design(const TwoPeriodData& data);

/// psi = (controlled direct effect of A1, effect of A2):
///   U1 = (A1 - pi1(L1))(H1 - m1(L1)),     H1 = Y - psi2 A2 - psi1 A1,
///   U2 = (A2 - pi2(D2))(H2 - m2(D2)),     H2 = Y - psi2 A2,
/// with D2 the period-2 design. Log link uses Y exp(-...) in place of the
/// differences.
class CdeScoreSystem : public ScoreSystem {
 public:
  CdeScoreSystem(TwoPeriodData data, const HdbrOptions& opts = {});

  int dof() const override { return 2; }
  Index n() const override { return d_.L1.n(); }
  Matrix scores(const EffectParameter& psi) const override;
  VarianceCentering centering() const override { return opts_.centering; }

  const PropensityFit& propensity(int period) const { return prop_[static_cast<std::size_t>(period - 1)]; }
  Scalar lambda_beta(int period) const { return lambda_[static_cast<std::size_t>(period - 1)]; }
  const DesignMatrix& design(int period) const { return period == 1 ? d_.L1 : d2_; }

  /// Transformed outcomes (H1, H2) at psi.
  std::array<Vector, 2> transformed(const EffectParameter& psi) const;

 private:
  TwoPeriodData d_;
  DesignMatrix d2_;
  HdbrOptions opts_;
  std::array<PropensityFit, 2> prop_;
  std::array<ObservationWeights, 2> w_;
  std::array<Scalar, 2> lambda_{};
};

}  // namespace drscore
