#include "drscore/core.hpp"

namespace drscore {

DesignMatrix::DesignMatrix(Matrix values, std::optional<Index> intercept_column)
    : values_(std::move(values)), intercept_(intercept_column) {
  if (values_.rows() < 2) throw InputError("design matrix needs at least 2 observations");
  if (values_.cols() < 1) throw InputError("design matrix needs at least 1 column");
  if (!values_.allFinite()) throw InputError("design matrix has non-finite entries");
  if (intercept_) {
    if (*intercept_ < 0 || *intercept_ >= values_.cols())
      throw InputError("intercept column index out of range");
    if ((values_.col(*intercept_).array() != 1.0).any())
      throw InputError("intercept column is not constant 1");
  }
}

DesignMatrix DesignMatrix::with_intercept(const Matrix& covariates) {
  Matrix v(covariates.rows(), covariates.cols() + 1);
  v.col(0).setOnes();
  v.rightCols(covariates.cols()) = covariates;
  return DesignMatrix(std::move(v), 0);
}

DesignMatrix DesignMatrix::subset_rows(const IndexList& rows) const {
  Matrix v(static_cast<Index>(rows.size()), p());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Index>(i)) = values_.row(rows[i]);
  return DesignMatrix(std::move(v), intercept_);
}

DesignMatrix DesignMatrix::subset_cols(const IndexList& cols) const {
  Matrix v(n(), static_cast<Index>(cols.size()));
  std::optional<Index> icpt;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    v.col(static_cast<Index>(k)) = values_.col(cols[k]);
    if (is_intercept(cols[k])) icpt = static_cast<Index>(k);
  }
  return DesignMatrix(std::move(v), icpt);
}

ObservationWeights::ObservationWeights(Vector w) : w_(std::move(w)) {
  if (!w_.allFinite()) throw InputError("weights must be finite");
  if ((w_.array() < 0).any()) throw InputError("weights must be nonnegative");
  if (w_.size() == 0 || (w_.array() == 0).all()) throw InputError("weights must not all be zero");
}

}  // namespace drscore
