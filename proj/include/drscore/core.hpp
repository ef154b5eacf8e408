#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace drscore {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using IndexList = std::vector<Index>;

// Error hierarchy. Everything thrown by the library derives from Error so the
// CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (dimensions, values, missing columns).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a usable answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Restricted maximum-likelihood / least-squares refit was infeasible.
class RefitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Score variance not invertible.
class DegenerateVarianceError : public NumericalError {
 public:
  DegenerateVarianceError() : NumericalError("degenerate score variance") {}
};

/// Test inversion never left the acceptance region within the grid budget.
class UnboundedIntervalError : public NumericalError {
 public:
  UnboundedIntervalError() : NumericalError("interval unbounded on grid") {}
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

inline Scalar expit(Scalar x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

inline Scalar logit(Scalar p) { return std::log(p / (1.0 - p)); }

template <typename Derived>
Vector expit(const Eigen::MatrixBase<Derived>& eta) {
  return eta.unaryExpr([](Scalar v) { return expit(v); });
}

/// Probability clamp used wherever a fitted probability feeds a weight.
inline constexpr Scalar kProbClamp = 1e-8;

inline Scalar clamp_probability(Scalar p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

/// n x p covariate matrix with at most one unpenalized intercept column.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  /// Throws InputError when the invariants do not hold.
  explicit DesignMatrix(Matrix values, std::optional<Index> intercept_column = 0);

  /// Prepends a column of ones and flags it as intercept.
  static DesignMatrix with_intercept(const Matrix& covariates);

  const Matrix& values() const { return values_; }
  std::optional<Index> intercept_column() const { return intercept_; }
  Index n() const { return values_.rows(); }
  Index p() const { return values_.cols(); }

  bool is_intercept(Index j) const { return intercept_ && *intercept_ == j; }

  /// Rows selected by `rows`, intercept flag preserved.
  DesignMatrix subset_rows(const IndexList& rows) const;

  /// Columns selected by `cols`; the intercept flag follows its column if kept.
  DesignMatrix subset_cols(const IndexList& cols) const;

 private:
  Matrix values_;
  std::optional<Index> intercept_;
};

/// Nonnegative per-observation weights, not all zero.
class ObservationWeights {
 public:
  ObservationWeights() = default;
  explicit ObservationWeights(Vector w);
  static ObservationWeights ones(Index n) { return ObservationWeights(Vector::Ones(n)); }

  const Vector& values() const { return w_; }
  Index size() const { return w_.size(); }
  Scalar operator[](Index i) const { return w_[i]; }

 private:
  Vector w_;
};

template <typename T>
Vector gather(const Eigen::MatrixBase<T>& v, const IndexList& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
  return out;
}

}  // namespace drscore
