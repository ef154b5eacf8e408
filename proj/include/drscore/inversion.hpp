#pragma once

#include "drscore/nuisance.hpp"
#include "drscore/score.hpp"

#include <optional>
#include <vector>

namespace drscore {

/// A family of estimating functions indexed by psi. Implementations must be
/// safe to evaluate concurrently and must not depend on evaluation order.
class ScoreSystem {
 public:
  virtual ~ScoreSystem() = default;
  virtual int dof() const = 0;
  virtual Index n() const = 0;
  /// n x dof per-observation scores at psi.
  virtual Matrix scores(const EffectParameter& psi) const = 0;
  virtual VarianceCentering centering() const { return VarianceCentering::Uncentered; }
};

/// Score moments and T^2 at psi.
ScoreEvaluation evaluate(const ScoreSystem& system, const EffectParameter& psi);

/// k = 1: mean^2 - chi2_1(alpha) vhat / n.  k >= 2: T^2 - chi2_k(alpha).
/// Negative exactly when psi is inside the confidence set.
Scalar criterion(const ScoreSystem& system, const EffectParameter& psi, Scalar alpha);

// Univariate doubly robust system ---------------------------------------------

struct HdbrOptions {
  Link link = Link::Identity;
  LogTransform log_form = LogTransform::Exp;
  PropensityOptions propensity;
  CvSpec outcome_cv;
  SolverOptions outcome_solver;
  /// Fixed outcome penalty; chosen by cross-validation at psi = 0 when unset.
  std::optional<Scalar> lambda_beta;
  /// Re-select the outcome penalty by cross-validation at every psi.
  bool reselect_lambda_each_psi = false;
  VarianceCentering centering = VarianceCentering::Uncentered;
};

/// Scores (A - pi)(H(psi) - m(psi)) with pi from a single propensity fit and m
/// from the weighted Lasso of H(psi) on L, refitted at every psi.
class UnivariateScoreSystem : public ScoreSystem {
 public:
  UnivariateScoreSystem(Vector y, Vector a, DesignMatrix L, const HdbrOptions& opts = {});

  int dof() const override { return 1; }
  Index n() const override { return L_.n(); }
  Matrix scores(const EffectParameter& psi) const override;
  VarianceCentering centering() const override { return opts_.centering; }

  /// Outcome nuisance fit at psi.
  OutcomeNuisanceFit outcome_fit(Scalar psi) const;

  /// Fixes the warm start used for every subsequent outcome fit to the fit at psi.
  void set_anchor(Scalar psi);

  const PropensityFit& propensity() const { return prop_; }
  const ObservationWeights& weights() const { return w_; }
  Scalar lambda_beta() const { return lambda_beta_; }
  const Vector& y() const { return y_; }
  const Vector& a() const { return a_; }
  const DesignMatrix& covariates() const { return L_; }

 private:
  Vector transformed(Scalar psi) const;

  Vector y_, a_;
  DesignMatrix L_;
  HdbrOptions opts_;
  PropensityFit prop_;
  ObservationWeights w_;
  Scalar lambda_beta_ = 0;
  std::optional<Vector> anchor_;
};

// Interval by test inversion ----------------------------------------------------

struct GridSpec {
  Scalar center = 0;
  Scalar half_width = 1;
  Scalar step = 1.0 / 60.0;
  int max_expansions = 4;
  Scalar refine_tol = 1e-4;
};

void validate(const GridSpec& grid);

struct GridPoint {
  Scalar psi = 0;
  Scalar criterion = 0;
  Scalar tsq = 0;
  bool valid = false;
};

struct ConfidenceInterval {
  Scalar lower = 0;
  Scalar upper = 0;
  Scalar alpha = 0.05;
  Scalar psi_hat = 0;
  Scalar tsq_at_hat = 0;
  int grid_evaluations = 0;
  int expanded = 0;
  /// No grid point was accepted; lower and upper are NaN.
  bool empty = false;
  /// Refined locations of every sign change of the criterion, ascending.
  std::vector<Scalar> roots;
  /// Grid points in ascending psi, including points where the nuisance fit failed.
  std::vector<GridPoint> grid;
  int invalid_points = 0;
  /// Total criterion evaluations including refinement.
  int evaluations = 0;
};

struct InversionOptions {
  int threads = 1;
};

/// Interval for a one-dimensional system. Throws UnboundedIntervalError when the
/// accepted set still reaches a grid edge after max_expansions doublings.
ConfidenceInterval invert_ci(const ScoreSystem& system, Scalar alpha, const GridSpec& grid,
                             const InversionOptions& opts = {});

/// Grid centered at the partialling-out estimate with half width 6 standard
/// errors; falls back to center 0 and half width 1.
GridSpec default_grid(const Vector& y, const Vector& a, const DesignMatrix& L, Link link);

/// Full pipeline: propensity, outcome penalty, anchor at the grid center, inversion.
ConfidenceInterval hdbr_interval(const Vector& y, const Vector& a, const DesignMatrix& L, Scalar alpha,
                                 const HdbrOptions& opts = {},
                                 const std::optional<GridSpec>& grid = std::nullopt,
                                 const InversionOptions& inv = {});

// Two-parameter regions -----------------------------------------------------------

struct Grid2d {
  Vector axis1;
  Vector axis2;
};

struct ConfidenceRegion {
  Scalar alpha = 0.05;
  /// accepted(i, j) = 1 when T^2(axis1[i], axis2[j]) <= chi2_2(alpha).
  Eigen::MatrixXi accepted;
  Matrix tsq;
  /// Cells where the score variance was degenerate or a fit failed.
  Eigen::MatrixXi invalid;
  bool empty = true;
  Scalar lower1 = 0, upper1 = 0, lower2 = 0, upper2 = 0;
};

ConfidenceRegion invert_region_2d(const ScoreSystem& system, Scalar alpha, const Grid2d& grid,
                                  const InversionOptions& opts = {});

}  // namespace drscore
