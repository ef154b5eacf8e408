#pragma once

#include "drscore/core.hpp"

#include <cstdint>

namespace drscore {

/// Upper-alpha critical value of the chi-square distribution with `dof` degrees of freedom.
Scalar chi2_critical(int dof, Scalar alpha);

/// Standard normal quantile.
Scalar normal_quantile(Scalar p);

/// Counter-based seed derivation: independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

/// Sample mean and (n-1)-denominator standard deviation.
struct MeanSd {
  Scalar mean = 0;
  Scalar sd = 0;
};
MeanSd mean_sd(const std::vector<Scalar>& xs);

}  // namespace drscore
