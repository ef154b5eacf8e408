#include "drscore/inversion.hpp"

#include "drscore/comparators.hpp"
#include "drscore/parallel.hpp"
#include "drscore/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace drscore {

ScoreEvaluation evaluate(const ScoreSystem& system, const EffectParameter& psi) {
  if (psi.size() != system.dof()) throw InputError("effect parameter has wrong length");
  if (!psi.allFinite()) throw InputError("non-finite effect parameter");
  return test_statistic(system.scores(psi), system.centering());
}

Scalar criterion(const ScoreSystem& system, const EffectParameter& psi, Scalar alpha) {
  const int k = system.dof();
  const Scalar crit = chi2_critical(k, alpha);
  if (k == 1) {
    const ScoreEvaluation ev = score_moments(system.scores(psi), system.centering());
    return ev.mean[0] * ev.mean[0] - crit * ev.vhat(0, 0) / static_cast<Scalar>(system.n());
  }
  return evaluate(system, psi).tsq - crit;
}

// ---------------------------------------------------------------------------

UnivariateScoreSystem::UnivariateScoreSystem(Vector y, Vector a, DesignMatrix L, const HdbrOptions& opts)
    : y_(std::move(y)), a_(std::move(a)), L_(std::move(L)), opts_(opts) {
  if (y_.size() != L_.n() || a_.size() != L_.n()) throw InputError("dimension mismatch");
  if (!y_.allFinite()) throw InputError("non-finite outcome");
  prop_ = estimate_propensity(L_, a_, opts_.propensity);
  w_ = ObservationWeights((prop_.pi_hat.array() * (1.0 - prop_.pi_hat.array())).matrix());
  if (opts_.lambda_beta) {
    if (!(*opts_.lambda_beta > 0)) throw InputError("outcome penalty must be positive");
    lambda_beta_ = *opts_.lambda_beta;
  } else {
    lambda_beta_ = select_lambda_beta(L_, transformed(0.0), w_, opts_.outcome_cv, std::nullopt,
                                      opts_.outcome_solver);
  }
}

Vector UnivariateScoreSystem::transformed(Scalar psi) const {
  Vector p(1);
  p << psi;
  return transform_outcome(y_, a_, p, opts_.link, opts_.log_form);
}

OutcomeNuisanceFit UnivariateScoreSystem::outcome_fit(Scalar psi) const {
  const Vector h = transformed(psi);
  const Scalar lam = opts_.reselect_lambda_each_psi
                         ? select_lambda_beta(L_, h, w_, opts_.outcome_cv, std::nullopt, opts_.outcome_solver)
                         : lambda_beta_;
  OutcomeNuisanceFit fit = estimate_outcome_nuisance(L_, h, w_, lam, std::nullopt, opts_.outcome_solver, anchor_);
  fit.psi_at_fit = Vector::Constant(1, psi);
  return fit;
}

void UnivariateScoreSystem::set_anchor(Scalar psi) {
  anchor_.reset();
  anchor_ = outcome_fit(psi).beta_hat;
}

Matrix UnivariateScoreSystem::scores(const EffectParameter& psi) const {
  if (psi.size() != 1) throw InputError("univariate system takes a scalar effect");
  const Vector h = transformed(psi[0]);
  const OutcomeNuisanceFit fit = outcome_fit(psi[0]);
  return score_vector(h, Matrix(a_), Matrix(prop_.pi_hat), Matrix(fit.m_hat));
}

// ---------------------------------------------------------------------------

void validate(const GridSpec& grid) {
  if (!std::isfinite(grid.center)) throw InputError("grid center must be finite");
  if (!(grid.half_width > 0) || !std::isfinite(grid.half_width)) throw InputError("grid half width must be positive");
  if (!(grid.step > 0) || !(grid.step < grid.half_width)) throw InputError("grid step must lie in (0, half_width)");
  if (grid.max_expansions < 1) throw InputError("max_expansions must be at least 1");
  if (!(grid.refine_tol > 0)) throw InputError("refine_tol must be positive");
}

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

class Evaluator {
 public:
  Evaluator(const ScoreSystem& sys, Scalar alpha) : sys_(sys), crit_(chi2_critical(1, alpha)) {}

  GridPoint operator()(Scalar psi) const {
    GridPoint g;
    g.psi = psi;
    try {
      const ScoreEvaluation ev = score_moments(sys_.scores(Vector::Constant(1, psi)), sys_.centering());
      const Scalar n = static_cast<Scalar>(sys_.n());
      const Scalar m = ev.mean[0], v = ev.vhat(0, 0);
      g.criterion = m * m - crit_ * v / n;
      g.tsq = v > 0 ? n * m * m / v : (m == 0 ? 0.0 : kInf);
      g.valid = std::isfinite(g.criterion);
    } catch (const NumericalError&) {
      g.valid = false;
    }
    return g;
  }

  Scalar critical() const { return crit_; }

 private:
  const ScoreSystem& sys_;
  Scalar crit_;
};

bool inside(const GridPoint& g) { return g.valid && g.criterion < 0; }

}  // namespace

ConfidenceInterval invert_ci(const ScoreSystem& system, Scalar alpha, const GridSpec& grid,
                             const InversionOptions& opts) {
  validate(grid);
  if (system.dof() != 1) throw InputError("interval inversion needs a one-dimensional system");
  const Evaluator eval(system, alpha);
  ConfidenceInterval ci;
  ci.alpha = alpha;

  std::map<long, GridPoint> pts;
  auto add_range = [&](long lo, long hi) {
    std::vector<long> idx;
    for (long j = lo; j <= hi; ++j)
      if (!pts.count(j)) idx.push_back(j);
    std::vector<GridPoint> out(idx.size());
    parallel_for(idx.size(), opts.threads,
                 [&](std::size_t k) { out[k] = eval(grid.center + static_cast<Scalar>(idx[k]) * grid.step); });
    for (std::size_t k = 0; k < idx.size(); ++k) pts[idx[k]] = out[k];
    ci.grid_evaluations += static_cast<int>(idx.size());
  };
  auto edge_open = [&](bool left) {
    if (left) {
      for (auto it = pts.begin(); it != pts.end(); ++it)
        if (it->second.valid) return it->second.criterion < 0;
    } else {
      for (auto it = pts.rbegin(); it != pts.rend(); ++it)
        if (it->second.valid) return it->second.criterion < 0;
    }
    return false;
  };

  Scalar hw = grid.half_width;
  long m = static_cast<long>(std::ceil(hw / grid.step - 1e-9));
  long left = -m, right = m;
  add_range(left, right);
  for (;;) {
    const bool lo = edge_open(true), hi = edge_open(false);
    if (!lo && !hi) break;
    if (ci.expanded >= grid.max_expansions) throw UnboundedIntervalError();
    ++ci.expanded;
    hw *= 2;
    m = static_cast<long>(std::ceil(hw / grid.step - 1e-9));
    if (lo) {
      add_range(-m, left - 1);
      left = -m;
    }
    if (hi) {
      add_range(right + 1, m);
      right = m;
    }
  }
  int evaluations = ci.grid_evaluations;

  ci.grid.reserve(pts.size());
  for (const auto& kv : pts) {
    ci.grid.push_back(kv.second);
    if (!kv.second.valid) ++ci.invalid_points;
  }
  const auto& G = ci.grid;

  // Point estimate: grid argmin of T^2 refined by golden-section search.
  std::size_t best = G.size();
  for (std::size_t i = 0; i < G.size(); ++i)
    if (G[i].valid && (best == G.size() || G[i].tsq < G[best].tsq)) best = i;
  if (best == G.size()) throw NumericalError("no valid grid point");
  GridPoint hat = G[best];
  {
    Scalar a = best > 0 && G[best - 1].valid ? G[best - 1].psi : G[best].psi;
    Scalar b = best + 1 < G.size() && G[best + 1].valid ? G[best + 1].psi : G[best].psi;
    const Scalar r = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](Scalar x) {
      const GridPoint g = eval(x);
      ++evaluations;
      if (g.valid && g.tsq < hat.tsq) hat = g;
      return g.valid ? g.tsq : kInf;
    };
    if (b - a > grid.refine_tol) {
      Scalar x1 = b - r * (b - a), x2 = a + r * (b - a);
      Scalar f1 = f(x1), f2 = f(x2);
      while (b - a > grid.refine_tol) {
        if (f1 <= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - r * (b - a);
          f1 = f(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + r * (b - a);
          f2 = f(x2);
        }
      }
    }
  }
  ci.psi_hat = hat.psi;
  ci.tsq_at_hat = hat.tsq;

  // Sign changes between consecutive valid points (the refined estimate included).
  std::vector<GridPoint> scan;
  for (const GridPoint& g : G)
    if (g.valid) scan.push_back(g);
  if (hat.psi != G[best].psi) {
    scan.push_back(hat);
    std::sort(scan.begin(), scan.end(), [](const GridPoint& x, const GridPoint& y) { return x.psi < y.psi; });
  }
  for (std::size_t i = 0; i + 1 < scan.size(); ++i) {
    if (inside(scan[i]) == inside(scan[i + 1])) continue;
    Scalar lo = scan[i].psi, hi = scan[i + 1].psi;
    const bool lo_in = inside(scan[i]);
    while (hi - lo > grid.refine_tol) {
      const Scalar mid = 0.5 * (lo + hi);
      const GridPoint g = eval(mid);
      ++evaluations;
      if (!g.valid) break;
      if (inside(g) == lo_in) lo = mid;
      else hi = mid;
    }
    ci.roots.push_back(0.5 * (lo + hi));
  }
  ci.evaluations = evaluations;

  if (ci.roots.empty()) {
    ci.empty = true;
    ci.lower = ci.upper = std::numeric_limits<Scalar>::quiet_NaN();
  } else {
    ci.lower = ci.roots.front();
    ci.upper = ci.roots.back();
  }
  return ci;
}

GridSpec default_grid(const Vector& y, const Vector& a, const DesignMatrix& L, Link link) {
  GridSpec g;
  if (link == Link::Identity) {
    try {
      const PointEstimate po = estimate_partialling_out(y, a, L, PenaltyChoice::Plugin);
      if (std::isfinite(po.estimate) && std::isfinite(po.se)) {
        g.center = po.estimate;
        g.half_width = std::max(6.0 * po.se, 1e-3);
      }
    } catch (const Error&) {
    }
  }
  g.step = g.half_width / 60.0;
  return g;
}

ConfidenceInterval hdbr_interval(const Vector& y, const Vector& a, const DesignMatrix& L, Scalar alpha,
                                 const HdbrOptions& opts, const std::optional<GridSpec>& grid,
                                 const InversionOptions& inv) {
  const GridSpec g = grid ? *grid : default_grid(y, a, L, opts.link);
  UnivariateScoreSystem sys(y, a, L, opts);
  sys.set_anchor(g.center);
  return invert_ci(sys, alpha, g, inv);
}

// ---------------------------------------------------------------------------

ConfidenceRegion invert_region_2d(const ScoreSystem& system, Scalar alpha, const Grid2d& grid,
                                  const InversionOptions& opts) {
  if (system.dof() != 2) throw InputError("region inversion needs a two-dimensional system");
  if (grid.axis1.size() < 1 || grid.axis2.size() < 1) throw InputError("empty region grid");
  const Scalar crit = chi2_critical(2, alpha);
  const Index n1 = grid.axis1.size(), n2 = grid.axis2.size();
  ConfidenceRegion reg;
  reg.alpha = alpha;
  reg.accepted = Eigen::MatrixXi::Zero(n1, n2);
  reg.invalid = Eigen::MatrixXi::Zero(n1, n2);
  reg.tsq = Matrix::Constant(n1, n2, kInf);
  parallel_for(static_cast<std::size_t>(n1 * n2), opts.threads, [&](std::size_t c) {
    const Index i = static_cast<Index>(c) / n2, j = static_cast<Index>(c) % n2;
    Vector psi(2);
    psi << grid.axis1[i], grid.axis2[j];
    try {
      const Scalar t = evaluate(system, psi).tsq;
      reg.tsq(i, j) = t;
      reg.accepted(i, j) = t <= crit ? 1 : 0;
    } catch (const NumericalError&) {
      reg.invalid(i, j) = 1;
    }
  });
  for (Index i = 0; i < n1; ++i)
    for (Index j = 0; j < n2; ++j) {
      if (!reg.accepted(i, j)) continue;
      const Scalar x = grid.axis1[i], y = grid.axis2[j];
      if (reg.empty) {
        reg.lower1 = reg.upper1 = x;
        reg.lower2 = reg.upper2 = y;
        reg.empty = false;
      }
      reg.lower1 = std::min(reg.lower1, x);
      reg.upper1 = std::max(reg.upper1, x);
      reg.lower2 = std::min(reg.lower2, y);
      reg.upper2 = std::max(reg.upper2, y);
    }
  if (reg.empty) {
    reg.lower1 = reg.upper1 = reg.lower2 = reg.upper2 = std::numeric_limits<Scalar>::quiet_NaN();
  }
  return reg;
}

}  // namespace drscore
