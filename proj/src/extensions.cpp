#include "drscore/extensions.hpp"

namespace drscore {

namespace {

ObservationWeights weights_of(const PropensityFit& f) {
  return ObservationWeights((f.pi_hat.array() * (1.0 - f.pi_hat.array())).matrix());
}

void check_binary(const Vector& a, const char* what) {
  bool zero = false, one = false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) zero = true;
    else if (a[i] == 1.0) one = true;
    else throw InputError(std::string(what) + " must be coded 0/1");
  }
  if (!zero || !one) throw InputError(std::string(what) + " has a single class");
}

Scalar penalty(const std::optional<Scalar>& fixed, const DesignMatrix& L, const Vector& h0,
               const ObservationWeights& w, const HdbrOptions& opts, const std::optional<Vector>& modifier) {
  if (fixed) {
    if (!(*fixed > 0)) throw InputError("outcome penalty must be positive");
    return *fixed;
  }
  return select_lambda_beta(L, h0, w, opts.outcome_cv, modifier, opts.outcome_solver);
}

}  // namespace

// ---------------------------------------------------------------------------

InteractionScoreSystem::InteractionScoreSystem(Vector y, Vector a, DesignMatrix L, const InteractionSpec& spec,
                                               const HdbrOptions& opts,
                                               const std::array<std::optional<Scalar>, 2>& lambda_beta)
    : y_(std::move(y)), a_(std::move(a)), L_(std::move(L)), opts_(opts) {
  if (y_.size() != L_.n() || a_.size() != L_.n()) throw InputError("dimension mismatch");
  if (!y_.allFinite()) throw InputError("non-finite outcome");
  if (spec.modifier_index < 0 || spec.modifier_index >= L_.p()) throw InputError("modifier column out of range");
  if (L_.intercept_column() && *L_.intercept_column() == spec.modifier_index)
    throw InputError("modifier cannot be the intercept column");
  check_binary(a_, "exposure");
  z_ = L_.values().col(spec.modifier_index);
  prop_ = estimate_propensity(L_, a_, opts_.propensity);
  w_ = weights_of(prop_);
  const Vector h0 = transformed(Vector::Zero(2));
  lambda_[0] = penalty(lambda_beta[0], L_, h0, w_, opts_, std::nullopt);
  lambda_[1] = penalty(lambda_beta[1], L_, h0, w_, opts_, z_);
}

Vector InteractionScoreSystem::transformed(const EffectParameter& psi) const {
  Matrix terms(n(), 2);
  terms.col(0) = a_;
  terms.col(1) = a_.cwiseProduct(z_);
  return transform_outcome(y_, terms, psi, opts_.link, LogTransform::Exp);
}

std::array<OutcomeNuisanceFit, 2> InteractionScoreSystem::outcome_fits(const EffectParameter& psi) const {
  if (psi.size() != 2) throw InputError("interaction system takes two effects");
  const Vector h = transformed(psi);
  std::array<OutcomeNuisanceFit, 2> fits{
      estimate_outcome_nuisance(L_, h, w_, lambda_[0], std::nullopt, opts_.outcome_solver),
      estimate_outcome_nuisance(L_, h, w_, lambda_[1], z_, opts_.outcome_solver)};
  for (auto& f : fits) f.psi_at_fit = psi;
  return fits;
}

Matrix InteractionScoreSystem::scores(const EffectParameter& psi) const {
  const std::array<OutcomeNuisanceFit, 2> fits = outcome_fits(psi);
  const Index nn = n();
  Matrix a(nn, 2), pi(nn, 2), m(nn, 2), mod(nn, 2);
  a << a_, a_;
  pi << prop_.pi_hat, prop_.pi_hat;
  m << fits[0].m_hat, fits[1].m_hat;
  mod << Vector::Ones(nn), z_;
  return score_vector(transformed(psi), a, pi, m, mod);
}

// ---------------------------------------------------------------------------

CategoricalScoreSystem::CategoricalScoreSystem(Vector y, const Vector& a, DesignMatrix L, const HdbrOptions& opts)
    : y_(std::move(y)), L_(std::move(L)), opts_(opts) {
  if (y_.size() != L_.n() || a.size() != L_.n()) throw InputError("dimension mismatch");
  if (!y_.allFinite()) throw InputError("non-finite outcome");
  ind_ = Matrix::Zero(L_.n(), 2);
  std::array<int, 3> count{};
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0 && a[i] != 1.0 && a[i] != 2.0) throw InputError("categorical exposure must be coded 0, 1, 2");
    const int level = static_cast<int>(a[i]);
    ++count[static_cast<std::size_t>(level)];
    if (level > 0) ind_(i, level - 1) = 1.0;
  }
  for (int level = 0; level < 3; ++level)
    if (count[static_cast<std::size_t>(level)] == 0)
      throw InputError("exposure level " + std::to_string(level) + " does not occur");
  for (std::size_t j = 0; j < 2; ++j) {
    prop_[j] = estimate_propensity(L_, ind_.col(static_cast<Index>(j)), opts_.propensity);
    w_[j] = weights_of(prop_[j]);
    lambda_[j] = penalty(std::nullopt, L_, y_, w_[j], opts_, std::nullopt);
  }
}

Matrix CategoricalScoreSystem::scores(const EffectParameter& psi) const {
  if (psi.size() != 2) throw InputError("categorical system takes two effects");
  const Vector h = transform_outcome(y_, ind_, psi, opts_.link, LogTransform::Exp);
  Matrix pi(n(), 2), m(n(), 2);
  for (std::size_t j = 0; j < 2; ++j) {
    pi.col(static_cast<Index>(j)) = prop_[j].pi_hat;
    m.col(static_cast<Index>(j)) =
        estimate_outcome_nuisance(L_, h, w_[j], lambda_[j], std::nullopt, opts_.outcome_solver).m_hat;
  }
  return score_vector(h, ind_, pi, m);
}

// ---------------------------------------------------------------------------

DesignMatrix period_two_design(const TwoPeriodData& d) {
  const Index n = d.L1.n();
  if (d.a1.size() != n || d.L2.rows() != n) throw InputError("dimension mismatch");
  Matrix X(n, d.L1.p() + 1 + d.L2.cols());
  X << d.L1.values(), d.a1, d.L2;
  return DesignMatrix(X, d.L1.intercept_column());
}

CdeScoreSystem::CdeScoreSystem(TwoPeriodData data, const HdbrOptions& opts) : d_(std::move(data)), opts_(opts) {
  const Index nn = d_.L1.n();
  if (d_.y.size() != nn || d_.a1.size() != nn || d_.a2.size() != nn || d_.L2.rows() != nn)
    throw InputError("dimension mismatch");
  if (!d_.y.allFinite() || !d_.L2.allFinite()) throw InputError("non-finite input");
  check_binary(d_.a1, "baseline exposure");
  check_binary(d_.a2, "follow-up exposure");
  d2_ = period_two_design(d_);
  prop_[0] = estimate_propensity(d_.L1, d_.a1, opts_.propensity);
  prop_[1] = estimate_propensity(d2_, d_.a2, opts_.propensity);
  const std::array<Vector, 2> h0 = transformed(Vector::Zero(2));
  for (std::size_t t = 0; t < 2; ++t) {
    w_[t] = weights_of(prop_[t]);
    lambda_[t] = penalty(std::nullopt, design(static_cast<int>(t) + 1), h0[t], w_[t], opts_, std::nullopt);
  }
}

std::array<Vector, 2> CdeScoreSystem::transformed(const EffectParameter& psi) const {
  if (psi.size() != 2) throw InputError("two-period system takes two effects");
  Matrix both(n(), 2);
  both << d_.a1, d_.a2;
  return {transform_outcome(d_.y, both, psi, opts_.link, LogTransform::Exp),
          transform_outcome(d_.y, Matrix(d_.a2), psi.tail(1), opts_.link, LogTransform::Exp)};
}

Matrix CdeScoreSystem::scores(const EffectParameter& psi) const {
  const std::array<Vector, 2> h = transformed(psi);
  const std::array<const Vector*, 2> a{&d_.a1, &d_.a2};
  Matrix u(n(), 2);
  for (std::size_t t = 0; t < 2; ++t) {
    const OutcomeNuisanceFit fit = estimate_outcome_nuisance(design(static_cast<int>(t) + 1), h[t], w_[t],
                                                             lambda_[t], std::nullopt, opts_.outcome_solver);
    u.col(static_cast<Index>(t)) = score_vector(h[t], Matrix(*a[t]), Matrix(prop_[t].pi_hat), Matrix(fit.m_hat));
  }
  return u;
}

}  // namespace drscore
