#include "drscore/penalized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace drscore {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();
constexpr Scalar kLooseTol = 1e-4;

Scalar soft_threshold(Scalar z, Scalar t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

Scalar sign(Scalar x) { return (x > 0) - (x < 0); }

// log(1 + exp(eta)) without overflow.
Scalar log1pexp(Scalar eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

Scalar logistic_loss(const Vector& eta, const Vector& a) {
  Scalar s = 0;
  for (Index i = 0; i < eta.size(); ++i) s += log1pexp(eta[i]) - a[i] * eta[i];
  return s / static_cast<Scalar>(eta.size());
}

Scalar l1_term(const Vector& beta, Scalar lambda, const Vector& pf) {
  return lambda * (pf.array() * beta.array().abs()).sum();
}

void check_dims(const DesignMatrix& X, const Vector& y, const char* what) {
  if (y.size() != X.n()) throw InputError(std::string("dimension mismatch: ") + what);
  if (!y.allFinite()) throw InputError(std::string("non-finite entries in ") + what);
}

// Quadratic subproblem (1/2n) sum w (y - Xb)^2 + lambda sum pf |b| solved by
// cyclic coordinate descent restricted to a working set.
class QuadraticCd {
 public:
  QuadraticCd(const Matrix& X, const Vector& y, const Vector& w, const Vector& pf, Scalar lambda,
              Vector beta)
      : X_(X), y_(y), w_(w), pf_(pf), lambda_(lambda), n_(static_cast<Scalar>(X.rows())),
        beta_(std::move(beta)), v_(Vector::Constant(X.cols(), -1.0)) {
    r_ = y_ - X_ * beta_;
  }

  const Vector& beta() const { return beta_; }
  const Vector& residual() const { return r_; }

  Scalar curvature(Index j) {
    if (v_[j] < 0) v_[j] = (w_.array() * X_.col(j).array().square()).sum() / n_;
    return v_[j];
  }

  Scalar update(Index j) {
    const Scalar vj = curvature(j);
    const Scalar old = beta_[j];
    Scalar next = 0.0;
    if (vj > 0) {
      const Scalar g = (X_.col(j).array() * w_.array() * r_.array()).sum() / n_;
      next = soft_threshold(g + vj * old, lambda_ * pf_[j]) / vj;
    }
    if (next != old) {
      r_.noalias() -= (next - old) * X_.col(j);
      beta_[j] = next;
    }
    return std::abs(next - old);
  }

  Scalar objective() const {
    return 0.5 * (w_.array() * r_.array().square()).sum() / n_ + l1_term(beta_, lambda_, pf_);
  }

  Vector neg_gradient() const { return X_.transpose() * (w_.array() * r_.array()).matrix() / n_; }

  // Sweeps over `ws` with active-set cycling until the largest coefficient
  // change falls below tol. Returns sweeps used.
  int run(const IndexList& ws, Scalar tol, int budget, std::vector<Scalar>* trace) {
    int sweeps = 0;
    IndexList active;
    while (sweeps < budget) {
      Scalar change = 0;
      for (Index j : ws) change = std::max(change, update(j));
      ++sweeps;
      if (trace) trace->push_back(objective());
      if (change < tol) break;
      active.clear();
      for (Index j : ws)
        if (beta_[j] != 0.0) active.push_back(j);
      while (sweeps < budget) {
        Scalar c = 0;
        for (Index j : active) c = std::max(c, update(j));
        ++sweeps;
        if (trace) trace->push_back(objective());
        if (c < tol) break;
      }
    }
    return sweeps;
  }

  void set_beta(const Vector& beta) {
    beta_ = beta;
    r_ = y_ - X_ * beta_;
  }

 private:
  const Matrix& X_;
  const Vector& y_;
  const Vector& w_;
  const Vector& pf_;
  Scalar lambda_;
  Scalar n_;
  Vector beta_;
  Vector r_;
  Vector v_;
};

IndexList support_of(const Vector& beta) {
  IndexList s;
  for (Index j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0) s.push_back(j);
  return s;
}

Matrix gather_cols(const Matrix& X, const IndexList& cols) {
  Matrix out(X.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = X.col(cols[k]);
  return out;
}

// Columns carried in every working set: unpenalized ones plus the current support.
IndexList polish_set(const Vector& beta, const Vector& pf) {
  IndexList a;
  for (Index j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0 || pf[j] == 0.0) a.push_back(j);
  return a;
}

void merge_into(IndexList& ws, const IndexList& extra) {
  ws.insert(ws.end(), extra.begin(), extra.end());
  std::sort(ws.begin(), ws.end());
  ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
}

IndexList initial_working_set(const Vector& beta, const Vector& pf, const Vector& neg_grad,
                              Scalar threshold) {
  IndexList ws;
  for (Index j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0 || pf[j] == 0.0 || std::abs(neg_grad[j]) >= threshold * pf[j]) ws.push_back(j);
  return ws;
}

struct SolveResult {
  PenalizedFit fit;
  Vector neg_gradient;
};

// Active-set refinement of a coordinate-descent iterate. On the current support
// with fixed signs the objective is quadratic; each pass either takes the
// Newton step to its minimizer, stops where a coefficient reaches zero (and
// drops it), or, when the support matrix is singular, slides along a null
// direction until a coefficient reaches zero. Succeeds when the result has a
// smaller KKT gap than the input.
bool polish_gaussian(const Matrix& X, const Vector& y, const Vector& w, const Vector& pf,
                     Scalar lambda, Vector& beta, Vector& grad, Scalar& gap) {
  const Scalar n = static_cast<Scalar>(X.rows());
  Vector cur = beta;
  for (int pass = 0;; ++pass) {
    const IndexList A = polish_set(cur, pf);
    const Index k = static_cast<Index>(A.size());
    if (k == 0 || k > X.rows() + 10 || pass > k + 2) return false;
    const Matrix XA = gather_cols(X, A);
    const Matrix WXA = w.asDiagonal() * XA;
    const Matrix G = XA.transpose() * WXA / n;
    Vector c = WXA.transpose() * y / n;
    Vector bA(k);
    for (Index q = 0; q < k; ++q) {
      const Index j = A[static_cast<std::size_t>(q)];
      bA[q] = cur[j];
      c[q] -= lambda * pf[j] * sign(cur[j]);
    }

    Vector step;
    bool newton = false;
    Eigen::LLT<Matrix> llt(G);
    if (k <= X.rows() && llt.info() == Eigen::Success && llt.rcond() >= 1e-13) {
      step = llt.solve(c) - bA;
      newton = true;
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(G);
      if (es.info() != Eigen::Success) return false;
      step = es.eigenvectors().col(0);
      if (c.dot(step) < 0) step = -step;
    }
    if (!step.allFinite()) return false;

    // Largest move keeping every penalized sign; the blocking coordinate is zeroed.
    Scalar t = newton ? 1.0 : kInf;
    Index block = -1;
    for (Index q = 0; q < k; ++q) {
      if (pf[A[static_cast<std::size_t>(q)]] == 0.0 || bA[q] * step[q] >= 0) continue;
      const Scalar tq = -bA[q] / step[q];
      if (tq < t) {
        t = tq;
        block = q;
      }
    }
    if (block < 0 && !newton) return false;
    for (Index q = 0; q < k; ++q) cur[A[static_cast<std::size_t>(q)]] = bA[q] + t * step[q];
    if (block < 0) break;
    cur[A[static_cast<std::size_t>(block)]] = 0.0;
  }
  const Vector r = y - X * cur;
  Vector g = X.transpose() * (w.array() * r.array()).matrix() / n;
  const Scalar cand_gap = kkt_gap(g, cur, lambda, pf);
  if (!(cand_gap < gap)) return false;
  beta = std::move(cur);
  grad = std::move(g);
  gap = cand_gap;
  return true;
}

SolveResult solve_gaussian(const Matrix& X, const Vector& y, const Vector& w, const Vector& pf,
                           Scalar lambda, const SolverOptions& opts, Vector beta0,
                           const Vector* strong_grad, Scalar strong_threshold) {
  QuadraticCd cd(X, y, w, pf, lambda, std::move(beta0));
  SolveResult out;
  PenalizedFit& fit = out.fit;
  fit.lambda = lambda;
  std::vector<Scalar>* trace = opts.record_trace ? &fit.objective_trace : nullptr;
  if (trace) trace->push_back(cd.objective());

  Vector g = strong_grad ? *strong_grad : cd.neg_gradient();
  IndexList ws = initial_working_set(cd.beta(), pf, g, strong_grad ? strong_threshold : lambda);
  int sweeps = 0;
  // With polishing, coordinate descent starts loose and the exact active-set
  // solve is attempted after every round.
  Scalar tol = opts.polish ? std::max(opts.coef_tol, kLooseTol) : opts.coef_tol;
  Scalar gap = kInf;
  bool polished = false;
  Vector beta;
  for (int round = 0; round < 64 && sweeps < opts.max_sweeps; ++round) {
    sweeps += cd.run(ws, tol, opts.max_sweeps - sweeps, trace);
    g = cd.neg_gradient();
    IndexList violators;
    for (Index j = 0; j < X.cols(); ++j) {
      if (cd.beta()[j] == 0.0 && std::abs(g[j]) > lambda * pf[j] &&
          !std::binary_search(ws.begin(), ws.end(), j))
        violators.push_back(j);
    }
    if (!violators.empty()) {
      merge_into(ws, violators);
      continue;
    }
    gap = kkt_gap(g, cd.beta(), lambda, pf);
    if (gap <= opts.kkt_tol && tol <= opts.coef_tol) break;
    if (opts.polish) {
      beta = cd.beta();
      if (polish_gaussian(X, y, w, pf, lambda, beta, g, gap)) {
        if (gap <= opts.kkt_tol) {
          polished = true;
          break;
        }
        cd.set_beta(beta);
      }
    }
    tol *= 0.1;
    if (tol < 1e-15) break;
  }
  if (!polished) {
    beta = cd.beta();
    if (opts.polish) polish_gaussian(X, y, w, pf, lambda, beta, g, gap);
  }
  fit.coefficients = std::move(beta);
  fit.active_set = support_of(fit.coefficients);
  fit.kkt_gap = gap;
  fit.iterations = sweeps;
  fit.converged = gap <= opts.kkt_tol;
  out.neg_gradient = std::move(g);
  return out;
}

bool polish_logistic(const Matrix& X, const Vector& a, const Vector& pf, Scalar lambda,
                     Vector& beta, Vector& grad, Scalar& gap) {
  const IndexList A = polish_set(beta, pf);
  if (A.empty() || static_cast<Index>(A.size()) > X.rows()) return false;
  const Scalar n = static_cast<Scalar>(X.rows());
  const Matrix XA = gather_cols(X, A);
  const Index k = XA.cols();
  Vector s(k), bA(k), pen(k);
  for (Index q = 0; q < k; ++q) {
    bA[q] = beta[A[static_cast<std::size_t>(q)]];
    s[q] = sign(bA[q]);
    pen[q] = lambda * pf[A[static_cast<std::size_t>(q)]] * s[q];
  }
  for (int it = 0; it < 30; ++it) {
    const Vector eta = XA * bA;
    const Vector p = expit(eta);
    const Vector grad_obj = XA.transpose() * (p - a) / n + pen;
    if (grad_obj.lpNorm<Eigen::Infinity>() < 1e-14) break;
    const Vector wv = (p.array() * (1.0 - p.array())).matrix();
    const Matrix H = XA.transpose() * wv.asDiagonal() * XA / n;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) return false;
    bA -= llt.solve(grad_obj);
    if (!bA.allFinite()) return false;
  }
  Vector cand = Vector::Zero(beta.size());
  for (Index q = 0; q < k; ++q) {
    const Index j = A[static_cast<std::size_t>(q)];
    if (pf[j] != 0.0 && sign(bA[q]) != s[q]) return false;
    cand[j] = bA[q];
  }
  const Vector p = expit(X * cand);
  Vector g = X.transpose() * (a - p) / n;
  const Scalar cand_gap = kkt_gap(g, cand, lambda, pf);
  if (!(cand_gap < gap)) return false;
  beta = std::move(cand);
  grad = std::move(g);
  gap = cand_gap;
  return true;
}

SolveResult solve_logistic(const Matrix& X, const Vector& a, const Vector& pf, Scalar lambda,
                           const SolverOptions& opts, Vector beta0, const Vector* strong_grad,
                           Scalar strong_threshold) {
  const Scalar n = static_cast<Scalar>(X.rows());
  SolveResult out;
  PenalizedFit& fit = out.fit;
  fit.lambda = lambda;
  Vector beta = std::move(beta0);
  Vector eta = X * beta;
  auto objective = [&](const Vector& e, const Vector& b) {
    return logistic_loss(e, a) + l1_term(b, lambda, pf);
  };
  auto gradient = [&](const Vector& e) -> Vector {
    return X.transpose() * (a - expit(e)) / n;
  };
  Vector g = strong_grad ? *strong_grad : gradient(eta);
  IndexList ws = initial_working_set(beta, pf, g, strong_grad ? strong_threshold : lambda);
  Scalar f = objective(eta, beta);
  if (opts.record_trace) fit.objective_trace.push_back(f);

  int sweeps = 0;
  int outer = 0;
  Scalar tol = opts.polish ? std::max(opts.coef_tol, kLooseTol) : opts.coef_tol;
  Scalar gap = kInf;
  bool polished = false;
  for (int round = 0; round < 64 && outer < opts.max_outer * 4; ++round) {
    for (int it = 0; it < opts.max_outer && sweeps < opts.max_sweeps; ++it, ++outer) {
      Vector wv(X.rows()), z(X.rows());
      for (Index i = 0; i < X.rows(); ++i) {
        const Scalar pc = clamp_probability(expit(eta[i]));
        wv[i] = pc * (1.0 - pc);
        z[i] = eta[i] + (a[i] - pc) / wv[i];
      }
      QuadraticCd cd(X, z, wv, pf, lambda, beta);
      sweeps += cd.run(ws, tol, opts.max_sweeps - sweeps, nullptr);
      Vector next = cd.beta();
      Vector next_eta = z - cd.residual();
      Scalar f_next = objective(next_eta, next);
      // Step halving when the quadratic model overshoots.
      Scalar t = 1.0;
      while (f_next > f + 1e-13 * std::max(1.0, std::abs(f)) && t > 1e-6) {
        t *= 0.5;
        next = beta + t * (cd.beta() - beta);
        next_eta = X * next;
        f_next = objective(next_eta, next);
      }
      const Scalar change = (next - beta).lpNorm<Eigen::Infinity>();
      beta = std::move(next);
      eta = std::move(next_eta);
      f = f_next;
      if (opts.record_trace) fit.objective_trace.push_back(f);
      if (change < tol) break;
    }
    g = gradient(eta);
    IndexList violators;
    for (Index j = 0; j < X.cols(); ++j) {
      if (beta[j] == 0.0 && std::abs(g[j]) > lambda * pf[j] &&
          !std::binary_search(ws.begin(), ws.end(), j))
        violators.push_back(j);
    }
    if (!violators.empty()) {
      merge_into(ws, violators);
      continue;
    }
    gap = kkt_gap(g, beta, lambda, pf);
    if ((gap <= opts.kkt_tol && tol <= opts.coef_tol) || sweeps >= opts.max_sweeps) break;
    if (opts.polish && polish_logistic(X, a, pf, lambda, beta, g, gap) && gap <= opts.kkt_tol) {
      polished = true;
      break;
    }
    eta = X * beta;
    f = objective(eta, beta);
    tol *= 0.1;
    if (tol < 1e-15) break;
  }
  if (opts.polish && !polished) polish_logistic(X, a, pf, lambda, beta, g, gap);
  fit.coefficients = std::move(beta);
  fit.active_set = support_of(fit.coefficients);
  fit.kkt_gap = gap;
  fit.iterations = sweeps;
  fit.converged = gap <= opts.kkt_tol;
  out.neg_gradient = std::move(g);
  return out;
}

void check_binary(const Vector& a) {
  bool has0 = false, has1 = false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) has0 = true;
    else if (a[i] == 1.0) has1 = true;
    else throw InputError("binary response must take values in {0,1}");
  }
  if (!has0 || !has1) throw InputError("binary response has a single class");
}

IndexList unpenalized_columns(const Vector& pf) {
  IndexList u;
  for (Index j = 0; j < pf.size(); ++j)
    if (pf[j] == 0.0) u.push_back(j);
  return u;
}

// Fit restricted to the unpenalized columns (the lambda -> infinity solution).
Vector null_coefficients(const DesignMatrix& X, const Vector& y, Family family, const Vector& w,
                         const Vector& pf) {
  const IndexList u = unpenalized_columns(pf);
  Vector beta = Vector::Zero(X.p());
  if (u.empty()) return beta;
  if (family == Family::Logistic && u.size() == 1 && X.is_intercept(u[0])) {
    beta[u[0]] = logit(clamp_probability(y.mean()));
    return beta;
  }
  // Rows with zero weight do not inform the fit; least squares handles them.
  const Matrix Xu = gather_cols(X.values(), u);
  Vector bu;
  if (family == Family::Logistic) {
    DesignMatrix Du(Xu, std::nullopt);
    IndexList all(u.size());
    std::iota(all.begin(), all.end(), Index{0});
    bu = refit_unpenalized(Du, y, family, all);
  } else {
    const Vector sw = w.array().sqrt();
    bu = (sw.asDiagonal() * Xu).colPivHouseholderQr().solve(sw.asDiagonal() * y);
  }
  for (std::size_t k = 0; k < u.size(); ++k) beta[u[k]] = bu[static_cast<Index>(k)];
  return beta;
}

Vector resolve_weights(Family family, const std::optional<ObservationWeights>& w, Index n) {
  if (family == Family::WeightedGaussian) {
    if (!w) throw InputError("weighted-gaussian family requires observation weights");
    if (w->size() != n) throw InputError("dimension mismatch: weights");
    return w->values();
  }
  return Vector::Ones(n);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------

Vector penalty_factors(const DesignMatrix& X, const Vector& w, const SolverOptions& opts) {
  Vector pf;
  if (opts.penalty_factors) {
    pf = *opts.penalty_factors;
    if (pf.size() != X.p()) throw InputError("dimension mismatch: penalty factors");
    if (!pf.allFinite() || (pf.array() < 0).any()) throw InputError("invalid penalty factors");
  } else if (opts.scale == PenaltyScale::Standardized) {
    const Scalar sw = w.sum();
    pf.resize(X.p());
    for (Index j = 0; j < X.p(); ++j) {
      const auto col = X.values().col(j).array();
      const Scalar mean = (w.array() * col).sum() / sw;
      pf[j] = std::sqrt((w.array() * (col - mean).square()).sum() / sw);
    }
  } else {
    pf = Vector::Ones(X.p());
  }
  if (X.intercept_column() && !opts.penalize_intercept && !opts.penalty_factors)
    pf[*X.intercept_column()] = 0.0;
  return pf;
}

Scalar weighted_lasso_objective(const DesignMatrix& X, const Vector& y, const Vector& w,
                                const Vector& beta, Scalar lambda, const Vector& pf) {
  const Vector r = y - X.values() * beta;
  return 0.5 * (w.array() * r.array().square()).sum() / static_cast<Scalar>(X.n()) +
         l1_term(beta, lambda, pf);
}

Scalar logistic_lasso_objective(const DesignMatrix& X, const Vector& a, const Vector& beta,
                                Scalar lambda, const Vector& pf) {
  return logistic_loss(X.values() * beta, a) + l1_term(beta, lambda, pf);
}

Vector weighted_lasso_gradient(const DesignMatrix& X, const Vector& y, const Vector& w,
                               const Vector& beta) {
  const Vector r = y - X.values() * beta;
  return X.values().transpose() * (w.array() * r.array()).matrix() / static_cast<Scalar>(X.n());
}

Vector logistic_gradient(const DesignMatrix& X, const Vector& a, const Vector& beta) {
  return X.values().transpose() * (a - expit(X.values() * beta)) / static_cast<Scalar>(X.n());
}

Scalar kkt_gap(const Vector& g, const Vector& beta, Scalar lambda, const Vector& pf) {
  Scalar gap = 0;
  for (Index j = 0; j < beta.size(); ++j) {
    const Scalar t = lambda * pf[j];
    Scalar v;
    if (t == 0.0) v = std::abs(g[j]);
    else if (beta[j] != 0.0) v = std::abs(g[j] - t * sign(beta[j]));
    else v = std::max(0.0, std::abs(g[j]) - t);
    gap = std::max(gap, v);
  }
  return gap;
}

PenalizedFit fit_weighted_lasso(const DesignMatrix& X, const Vector& y, const ObservationWeights& w,
                                Scalar lambda, const SolverOptions& opts) {
  return fit_weighted_lasso(X, y, w, lambda, opts, Vector::Zero(X.p()));
}

PenalizedFit fit_weighted_lasso(const DesignMatrix& X, const Vector& y, const ObservationWeights& w,
                                Scalar lambda, const SolverOptions& opts, const Vector& warm_start) {
  check_dims(X, y, "response");
  if (w.size() != X.n()) throw InputError("dimension mismatch: weights");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
  if (warm_start.size() != X.p()) throw InputError("dimension mismatch: warm start");
  const Vector pf = penalty_factors(X, w.values(), opts);
  return solve_gaussian(X.values(), y, w.values(), pf, lambda, opts, warm_start, nullptr, 0).fit;
}

PenalizedFit fit_lasso_logistic(const DesignMatrix& X, const Vector& a, Scalar lambda,
                                const SolverOptions& opts) {
  check_dims(X, a, "binary response");
  check_binary(a);
  const Vector pf = penalty_factors(X, Vector::Ones(X.n()), opts);
  return fit_lasso_logistic(X, a, lambda, opts,
                            null_coefficients(X, a, Family::Logistic, Vector::Ones(X.n()), pf));
}

PenalizedFit fit_lasso_logistic(const DesignMatrix& X, const Vector& a, Scalar lambda,
                                const SolverOptions& opts, const Vector& warm_start) {
  check_dims(X, a, "binary response");
  check_binary(a);
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
  if (warm_start.size() != X.p()) throw InputError("dimension mismatch: warm start");
  const Vector pf = penalty_factors(X, Vector::Ones(X.n()), opts);
  return solve_logistic(X.values(), a, pf, lambda, opts, warm_start, nullptr, 0).fit;
}

Scalar lambda_max(const DesignMatrix& X, const Vector& y, Family family,
                  const std::optional<ObservationWeights>& w, const SolverOptions& opts) {
  check_dims(X, y, "response");
  const Vector wv = resolve_weights(family, w, X.n());
  if (family == Family::Logistic) check_binary(y);
  const Vector pf = penalty_factors(X, wv, opts);
  const Vector beta = null_coefficients(X, y, family, wv, pf);
  const Vector g = family == Family::Logistic ? logistic_gradient(X, y, beta)
                                              : weighted_lasso_gradient(X, y, wv, beta);
  Scalar lmax = 0;
  for (Index j = 0; j < X.p(); ++j)
    if (pf[j] > 0) lmax = std::max(lmax, std::abs(g[j]) / pf[j]);
  return lmax;
}

std::vector<Scalar> log_lambda_grid(Scalar lmax, int count, Scalar ratio) {
  if (!(lmax > 0)) throw InputError("lambda_max must be positive to build a grid");
  if (count < 1) throw InputError("grid size must be positive");
  std::vector<Scalar> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lmax;
    return grid;
  }
  const Scalar step = std::log(ratio) / (count - 1);
  for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = lmax * std::exp(step * k);
  return grid;
}

namespace {
void check_grid(const std::vector<Scalar>& grid) {
  if (grid.empty()) throw InputError("lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0) || !std::isfinite(grid[k])) throw InputError("lambda grid values must be positive");
    if (k > 0 && !(grid[k] < grid[k - 1])) throw InputError("lambda grid must be strictly decreasing");
  }
}
}  // namespace

std::vector<PenalizedFit> weighted_lasso_path(const DesignMatrix& X, const Vector& y,
                                              const ObservationWeights& w,
                                              const std::vector<Scalar>& grid,
                                              const SolverOptions& opts) {
  check_dims(X, y, "response");
  check_grid(grid);
  const Vector pf = penalty_factors(X, w.values(), opts);
  Vector beta = null_coefficients(X, y, Family::WeightedGaussian, w.values(), pf);
  Vector g = weighted_lasso_gradient(X, y, w.values(), beta);
  Scalar prev = 0;
  for (Index j = 0; j < X.p(); ++j)
    if (pf[j] > 0) prev = std::max(prev, std::abs(g[j]) / pf[j]);
  std::vector<PenalizedFit> fits;
  fits.reserve(grid.size());
  for (Scalar lam : grid) {
    const Scalar thr = std::max(0.0, 2 * lam - std::max(prev, lam));
    SolveResult res = solve_gaussian(X.values(), y, w.values(), pf, lam, opts, beta, &g, thr);
    beta = res.fit.coefficients;
    g = std::move(res.neg_gradient);
    prev = lam;
    fits.push_back(std::move(res.fit));
  }
  return fits;
}

std::vector<PenalizedFit> logistic_lasso_path(const DesignMatrix& X, const Vector& a,
                                              const std::vector<Scalar>& grid,
                                              const SolverOptions& opts) {
  check_dims(X, a, "binary response");
  check_binary(a);
  check_grid(grid);
  const Vector ones = Vector::Ones(X.n());
  const Vector pf = penalty_factors(X, ones, opts);
  Vector beta = null_coefficients(X, a, Family::Logistic, ones, pf);
  const Scalar null_loss = logistic_loss(X.values() * beta, a);
  Vector g = logistic_gradient(X, a, beta);
  Scalar prev = 0;
  for (Index j = 0; j < X.p(); ++j)
    if (pf[j] > 0) prev = std::max(prev, std::abs(g[j]) / pf[j]);
  std::vector<PenalizedFit> fits;
  fits.reserve(grid.size());
  for (Scalar lam : grid) {
    const Scalar thr = std::max(0.0, 2 * lam - std::max(prev, lam));
    SolveResult res = solve_logistic(X.values(), a, pf, lam, opts, beta, &g, thr);
    beta = res.fit.coefficients;
    g = std::move(res.neg_gradient);
    prev = lam;
    const bool ok = res.fit.converged;
    fits.push_back(std::move(res.fit));
    if (!ok) break;
    const Scalar loss = logistic_loss(X.values() * beta, a);
    if (null_loss > 0 && 1.0 - loss / null_loss > 0.999) break;
  }
  return fits;
}

// ---------------------------------------------------------------------------

Vector refit_unpenalized(const DesignMatrix& X, const Vector& y, Family family,
                         const IndexList& support, const std::optional<ObservationWeights>& w) {
  check_dims(X, y, "response");
  IndexList s = support;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  for (Index j : s)
    if (j < 0 || j >= X.p()) throw InputError("support index out of range");
  if (X.intercept_column() && !std::binary_search(s.begin(), s.end(), *X.intercept_column()))
    throw InputError("refit support must include the intercept");
  if (s.empty()) throw InputError("refit support is empty");
  if (static_cast<Index>(s.size()) >= X.n()) throw RefitError("refit failed: support not smaller than n");

  const Matrix Xs = gather_cols(X.values(), s);
  const Index k = Xs.cols();
  Vector bs;
  if (family != Family::Logistic) {
    const Vector wv = resolve_weights(family == Family::WeightedGaussian ? family : Family::Gaussian,
                                      family == Family::WeightedGaussian ? w : std::nullopt, X.n());
    const Vector sw = wv.array().sqrt();
    const Matrix Xw = sw.asDiagonal() * Xs;
    Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) throw RefitError("refit failed: singular restricted design");
    bs = qr.solve(sw.asDiagonal() * y);
  } else {
    check_binary(y);
    const Scalar n = static_cast<Scalar>(X.n());
    bs = Vector::Zero(k);
    const auto icpt = std::find_if(s.begin(), s.end(), [&](Index j) { return X.is_intercept(j); });
    if (icpt != s.end()) bs[icpt - s.begin()] = logit(y.mean());
    Vector eta = Xs * bs;
    Scalar loss = logistic_loss(eta, y);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const Vector p = expit(eta);
      const Vector g = Xs.transpose() * (y - p) / n;
      if (g.lpNorm<Eigen::Infinity>() < 1e-10) {
        converged = true;
        break;
      }
      const Vector wv = (p.array() * (1.0 - p.array())).matrix();
      const Matrix H = Xs.transpose() * wv.asDiagonal() * Xs / n;
      Eigen::LDLT<Matrix> ldlt(H);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-10)
        throw RefitError("refit failed: singular Hessian");
      const Vector step = ldlt.solve(g);
      Scalar t = 1.0;
      Vector next = bs + step;
      Vector next_eta = Xs * next;
      Scalar next_loss = logistic_loss(next_eta, y);
      while (next_loss > loss + 1e-14 && t > 1e-8) {
        t *= 0.5;
        next = bs + t * step;
        next_eta = Xs * next;
        next_loss = logistic_loss(next_eta, y);
      }
      bs = std::move(next);
      eta = std::move(next_eta);
      loss = next_loss;
      if (eta.lpNorm<Eigen::Infinity>() > 30) throw RefitError("refit failed: separation");
    }
    if (!converged) throw RefitError("refit failed: no convergence");
    if (eta.lpNorm<Eigen::Infinity>() > 30) throw RefitError("refit failed: separation");
  }
  if (!bs.allFinite()) throw RefitError("refit failed: non-finite coefficients");
  Vector beta = Vector::Zero(X.p());
  for (Index q = 0; q < k; ++q) beta[s[static_cast<std::size_t>(q)]] = bs[q];
  return beta;
}

// ---------------------------------------------------------------------------

std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
  if (folds > n) throw InputError("more folds than observations");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 eng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(eng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k)
    fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = static_cast<int>(k % folds);
  return fold;
}

Scalar heldout_loss(const DesignMatrix& X, const Vector& y, Family family, const Vector& w,
                    const Vector& beta, const IndexList& rows) {
  Scalar s = 0;
  for (Index i : rows) {
    const Scalar eta = X.values().row(i).dot(beta);
    if (family == Family::Logistic) {
      s += log1pexp(eta) - y[i] * eta;
    } else {
      const Scalar r = y[i] - eta;
      s += w[i] * r * r;
    }
  }
  return s / static_cast<Scalar>(rows.size());
}

CvResult cross_validate(const DesignMatrix& X, const Vector& y, Family family,
                        const std::optional<ObservationWeights>& w, const CvSpec& spec,
                        const SolverOptions& opts) {
  check_dims(X, y, "response");
  const Vector wv = resolve_weights(family, w, X.n());
  if (family == Family::Logistic) check_binary(y);
  CvResult res;
  res.grid = spec.lambda_grid;
  if (res.grid.empty()) {
    res.grid = log_lambda_grid(lambda_max(X, y, family, w, opts), spec.default_grid_size,
                               spec.default_grid_ratio);
  }
  check_grid(res.grid);
  if (spec.folds < 2 || spec.folds > X.n()) throw InputError("invalid number of folds");
  const std::size_t m = res.grid.size();
  if (m == 1) {
    res.lambda = res.grid[0];
    res.mean_loss.assign(1, 0.0);
    res.seed_used = spec.rng_seed;
    return res;
  }

  std::uint64_t seed = spec.rng_seed;
  std::vector<int> fold = assign_folds(X.n(), spec.folds, seed);
  if (family == Family::Logistic) {
    auto training_ok = [&](const std::vector<int>& f) {
      for (int k = 0; k < spec.folds; ++k) {
        Scalar lo = 1, hi = 0;
        for (Index i = 0; i < X.n(); ++i)
          if (f[static_cast<std::size_t>(i)] != k) {
            lo = std::min(lo, y[i]);
            hi = std::max(hi, y[i]);
          }
        if (lo == hi) return false;
      }
      return true;
    };
    if (!training_ok(fold)) {
      seed = splitmix64(seed);
      fold = assign_folds(X.n(), spec.folds, seed);
      if (!training_ok(fold)) throw InputError("cross-validation fold contains a single class");
    }
  }
  res.seed_used = seed;

  SolverOptions path_opts = opts;
  if (spec.path_tolerance > 0) {
    Scalar scale = 1.0;
    if (family != Family::Logistic) {
      const Scalar sw = wv.sum();
      const Scalar mean = wv.dot(y) / sw;
      scale = std::sqrt((wv.array() * (y.array() - mean).square()).sum() / sw);
      if (!(scale > 0)) scale = 1.0;
    }
    path_opts.polish = false;
    path_opts.record_trace = false;
    path_opts.coef_tol = std::max(opts.coef_tol, spec.path_tolerance * scale);
    path_opts.kkt_tol = std::max(opts.kkt_tol, 10 * path_opts.coef_tol);
  }

  std::vector<Scalar> total(m, 0.0);
  for (int k = 0; k < spec.folds; ++k) {
    IndexList train, test;
    for (Index i = 0; i < X.n(); ++i)
      (fold[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    const DesignMatrix Xtr = X.subset_rows(train);
    const Vector ytr = gather(y, train);
    std::vector<PenalizedFit> path;
    if (family == Family::Logistic) {
      path = logistic_lasso_path(Xtr, ytr, res.grid, path_opts);
    } else {
      path = weighted_lasso_path(Xtr, ytr, ObservationWeights(gather(wv, train)), res.grid, path_opts);
    }
    for (std::size_t l = 0; l < m; ++l) {
      total[l] += l < path.size() ? heldout_loss(X, y, family, wv, path[l].coefficients, test) : kInf;
    }
  }
  res.mean_loss.resize(m);
  Scalar best = kInf;
  for (std::size_t l = 0; l < m; ++l) {
    res.mean_loss[l] = total[l] / spec.folds;
    if (res.mean_loss[l] <= best) {
      best = res.mean_loss[l];
      res.best = static_cast<Index>(l);
    }
  }
  if (!std::isfinite(best)) throw NumericalError("cross-validation produced no finite loss");
  res.lambda = res.grid[static_cast<std::size_t>(res.best)];
  return res;
}

}  // namespace drscore
