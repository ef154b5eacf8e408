#include "drscore/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace drscore {

Scalar chi2_critical(int dof, Scalar alpha) {
  if (dof < 1) throw InputError("chi-square degrees of freedom must be positive");
  if (!(alpha > 0 && alpha < 1)) throw InputError("alpha must lie in (0,1)");
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

Scalar normal_quantile(Scalar p) {
  if (!(p > 0 && p < 1)) throw InputError("normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal(), p);
}

namespace {
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return mix(mix(mix(master) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

MeanSd mean_sd(const std::vector<Scalar>& xs) {
  MeanSd out;
  if (xs.empty()) return out;
  for (Scalar x : xs) out.mean += x;
  out.mean /= static_cast<Scalar>(xs.size());
  if (xs.size() > 1) {
    Scalar ss = 0;
    for (Scalar x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<Scalar>(xs.size() - 1));
  }
  return out;
}

}  // namespace drscore
