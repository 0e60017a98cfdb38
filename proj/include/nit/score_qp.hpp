#pragma once

// Score program: minimize hᵀ(K + ρ·d̄·I)h + 2hᵀ(∇K·1) over a convex set V,
// with d̄ the mean diagonal of K (so the ridge is invariant to the n⁻² scale).
//
// Equality-only problems (zero-sum or none) are solved through the dense
// KKT system. Box and monotone constraints go through an ADMM
// (operator-splitting) loop whose iterate is periodically polished by
// solving the equality problem on the guessed active set.

#include "nit/common.hpp"
#include "nit/metric_kernel.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace nit {

// Monotonicity of δ = y + σ²h along the y-sorted order (no auxiliaries):
// σ²h_(i-1) - σ²h_(i) <= y_(i) - y_(i-1).
template <typename Scalar>
struct MonotoneOrder {
  Vector<Scalar> y;
  Scalar sigma2 = Scalar(1);
};

template <typename Scalar>
struct ConstraintSet {
  bool zero_sum = true;
  // |h_i| <= box[i]. A zero entry pins h_i to 0; negative entries are infeasible.
  std::optional<Vector<Scalar>> box;
  std::optional<MonotoneOrder<Scalar>> monotone;

  bool has_inequalities() const { return box.has_value() || monotone.has_value(); }
};

template <typename Scalar>
struct SolveOptions {
  Scalar ridge = Scalar(1e-8);
  Scalar tol = Scalar(1e-8);
  int max_iter = 20000;
};

template <typename Scalar>
struct ScoreSolution {
  Vector<Scalar> h;
  Scalar objective = 0;     // Ŝ(h), without the ridge
  Scalar kkt_residual = 0;  // relative; see solve_score
  int iterations = 0;       // 0 for the direct solve
  // Active inequality rows: i in [0, n) is the box bound on h_i; n + r is
  // the r-th monotone row in y-sorted order.
  std::vector<Index> active_constraints;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, Eigen::VectorXd best, double primal_residual,
              double dual_residual, int iterations)
      : Error(what),
        best_iterate(std::move(best)),
        primal_residual(primal_residual),
        dual_residual(dual_residual),
        iterations(iterations) {}

  Eigen::VectorXd best_iterate;
  double primal_residual;
  double dual_residual;
  int iterations;
};

// Ŝ(h) = hᵀKh + 2hᵀ∇K·1 + 1ᵀ∇²K·1.
template <typename Scalar>
Scalar ksd_objective(const Vector<Scalar>& h, const KernelMatrices<Scalar>& km) {
  if (h.size() != km.size()) throw InvalidInput("ksd_objective: length of h does not match n");
  const Vector<Scalar> grad_row = km.grad_k.rowwise().sum();
  return h.dot(km.k * h) + Scalar(2) * h.dot(grad_row) + km.grad2_k.sum();
}

// κ_λ[h](u, v) with the unscaled kernel. Averaging over all ordered sample
// pairs reproduces ksd_objective.
template <typename Scalar, typename ScoreFn>
Scalar kappa_eval(ScoreFn&& score, std::span<const Scalar> u, std::span<const Scalar> v,
                  const KernelConfig<Scalar>& cfg) {
  const KernelPoint<Scalar> kp = kernel_point<Scalar>(u, v, cfg);
  const Scalar hu = score(u);
  const Scalar hv = score(v);
  return kp.value * hu * hv + kp.d_v1 * hu + kp.d_u1 * hv + kp.d_u1v1;
}

namespace detail {

template <typename Scalar>
Scalar inf_norm(const Vector<Scalar>& v) {
  return v.size() ? v.template lpNorm<Eigen::Infinity>() : Scalar(0);
}

// Constraint rows in l <= Cx <= u form.
template <typename Scalar>
struct ConstraintRows {
  Eigen::SparseMatrix<Scalar> c;
  Vector<Scalar> lower, upper;
  std::vector<Index> label;  // ScoreSolution::active_constraints numbering, -1 for zero-sum
};

template <typename Scalar>
ConstraintRows<Scalar> build_rows(const ConstraintSet<Scalar>& cons, Index n) {
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  std::vector<Eigen::Triplet<Scalar>> trip;
  std::vector<Scalar> lo, up;
  std::vector<Index> label;
  Index row = 0;
  if (cons.zero_sum) {
    for (Index i = 0; i < n; ++i) trip.emplace_back(row, i, Scalar(1));
    lo.push_back(0);
    up.push_back(0);
    label.push_back(-1);
    ++row;
  }
  if (cons.box) {
    for (Index i = 0; i < n; ++i) {
      trip.emplace_back(row++, i, Scalar(1));
      lo.push_back(-(*cons.box)(i));
      up.push_back((*cons.box)(i));
      label.push_back(i);
    }
  }
  if (cons.monotone) {
    const auto& mono = *cons.monotone;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return mono.y(a) < mono.y(b); });
    for (Index r = 1; r < n; ++r) {
      const Index prev = order[r - 1], cur = order[r];
      trip.emplace_back(row, prev, mono.sigma2);
      trip.emplace_back(row, cur, -mono.sigma2);
      lo.push_back(-inf);
      up.push_back(mono.y(cur) - mono.y(prev));
      label.push_back(n + r - 1);
      ++row;
    }
  }
  ConstraintRows<Scalar> out;
  out.c.resize(row, n);
  out.c.setFromTriplets(trip.begin(), trip.end());
  out.lower = Eigen::Map<Vector<Scalar>>(lo.data(), static_cast<Index>(lo.size()));
  out.upper = Eigen::Map<Vector<Scalar>>(up.data(), static_cast<Index>(up.size()));
  out.label = std::move(label);
  return out;
}

template <typename Scalar>
struct Candidate {
  Vector<Scalar> x, y;
  Scalar primal = 0, dual = 0;
};

// Residuals of (x, y) for min ½xᵀPx + qᵀx s.t. l <= Cx <= u.
template <typename Scalar>
void residuals(const Matrix<Scalar>& p, const Vector<Scalar>& q, const ConstraintRows<Scalar>& rows,
               Candidate<Scalar>& cand) {
  const Vector<Scalar> cx = rows.c * cand.x;
  Scalar viol = 0;
  for (Index r = 0; r < cx.size(); ++r)
    viol = std::max({viol, rows.lower(r) - cx(r), cx(r) - rows.upper(r)});
  const Vector<Scalar> px = p * cand.x;
  const Vector<Scalar> cty = rows.c.transpose() * cand.y;
  cand.primal = viol / (Scalar(1) + inf_norm<Scalar>(cx));
  cand.dual = inf_norm<Scalar>(Vector<Scalar>(px + q + cty)) /
              (Scalar(1) + std::max({inf_norm(px), inf_norm(q), inf_norm(cty)}));
}

// Equality-constrained solve on a guessed active set; returns nullopt when
// the guess is not optimal (wrong multiplier signs or violated rows).
template <typename Scalar>
std::optional<Candidate<Scalar>> polish(const Matrix<Scalar>& p, const Vector<Scalar>& q,
                                        const ConstraintRows<Scalar>& rows, const Vector<Scalar>& z,
                                        const Vector<Scalar>& y, Scalar tol) {
  const Index n = p.rows();
  const Index m = rows.c.rows();
  // Row state: 0 inactive, -1 at lower, +1 at upper, 2 equality.
  std::vector<int> state(static_cast<std::size_t>(m), 0);
  for (Index r = 0; r < m; ++r) {
    if (rows.lower(r) == rows.upper(r))
      state[r] = 2;
    else if (z(r) - rows.lower(r) < -y(r))
      state[r] = -1;
    else if (rows.upper(r) - z(r) < y(r))
      state[r] = 1;
  }

  // Single-variable rows fix a coordinate; the rest stay as general rows.
  Vector<Scalar> x = Vector<Scalar>::Zero(n);
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  std::vector<Index> general;
  const Eigen::SparseMatrix<Scalar, Eigen::RowMajor> c_rows(rows.c);
  for (Index r = 0; r < m; ++r) {
    if (state[r] == 0) continue;
    const Scalar target = state[r] == -1 ? rows.lower(r) : rows.upper(r);
    typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(c_rows, r);
    const Index nnz = c_rows.outerIndexPtr()[r + 1] - c_rows.outerIndexPtr()[r];
    if (nnz == 1) {
      const Index col = it.col();
      if (fixed[col]) return std::nullopt;
      fixed[col] = 1;
      x(col) = target / it.value();
    } else {
      general.push_back(r);
    }
  }
  std::vector<Index> free_idx;
  for (Index i = 0; i < n; ++i)
    if (!fixed[i]) free_idx.push_back(i);
  const Index nf = static_cast<Index>(free_idx.size());
  const Index ng = static_cast<Index>(general.size());

  if (nf > 0) {
    Matrix<Scalar> pff(nf, nf);
    Vector<Scalar> rhs(nf);
    for (Index a = 0; a < nf; ++a) {
      for (Index b = 0; b < nf; ++b) pff(a, b) = p(free_idx[a], free_idx[b]);
      rhs(a) = -q(free_idx[a]) - p.row(free_idx[a]).dot(x);
    }
    Matrix<Scalar> cg = Matrix<Scalar>::Zero(ng, nf);
    Vector<Scalar> bg(ng);
    std::vector<Index> pos(static_cast<std::size_t>(n), -1);
    for (Index a = 0; a < nf; ++a) pos[free_idx[a]] = a;
    for (Index g = 0; g < ng; ++g) {
      const Index r = general[g];
      Scalar target = state[r] == -1 ? rows.lower(r) : rows.upper(r);
      for (typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(c_rows, r); it; ++it) {
        if (pos[it.col()] >= 0)
          cg(g, pos[it.col()]) = it.value();
        else
          target -= it.value() * x(it.col());
      }
      bg(g) = target;
    }
    Eigen::LLT<Matrix<Scalar>> llt(pff);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Vector<Scalar> xf = llt.solve(rhs);
    Vector<Scalar> nu = Vector<Scalar>::Zero(ng);
    if (ng > 0) {
      const Matrix<Scalar> w = llt.solve(cg.transpose());
      const Matrix<Scalar> schur = cg * w;
      Eigen::LDLT<Matrix<Scalar>> ldlt(schur);
      if (ldlt.info() != Eigen::Success) return std::nullopt;
      nu = ldlt.solve(Vector<Scalar>(cg * xf - bg));
      if (!nu.allFinite()) return std::nullopt;
      xf -= w * nu;
    }
    for (Index a = 0; a < nf; ++a) x(free_idx[a]) = xf(a);
    Candidate<Scalar> cand;
    cand.x = x;
    cand.y = Vector<Scalar>::Zero(m);
    for (Index g = 0; g < ng; ++g) cand.y(general[g]) = nu(g);
    // Multipliers of fixing rows absorb the remaining stationarity residual.
    const Vector<Scalar> grad = p * x + q + rows.c.transpose() * cand.y;
    for (Index r = 0; r < m; ++r) {
      if (state[r] == 0) continue;
      typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(c_rows, r);
      const Index nnz = c_rows.outerIndexPtr()[r + 1] - c_rows.outerIndexPtr()[r];
      if (nnz == 1) cand.y(r) = -grad(it.col()) / it.value();
    }
    for (Index r = 0; r < m; ++r) {
      if (state[r] == -1 && cand.y(r) > tol) return std::nullopt;
      if (state[r] == 1 && cand.y(r) < -tol) return std::nullopt;
    }
    residuals(p, q, rows, cand);
    if (cand.primal > tol || cand.dual > tol) return std::nullopt;
    return cand;
  }

  Candidate<Scalar> cand;
  cand.x = x;
  cand.y = Vector<Scalar>::Zero(m);
  const Vector<Scalar> grad = p * x + q;
  for (Index r = 0; r < m; ++r) {
    if (state[r] == 0) continue;
    typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(c_rows, r);
    const Index nnz = c_rows.outerIndexPtr()[r + 1] - c_rows.outerIndexPtr()[r];
    if (nnz == 1) cand.y(r) = -grad(it.col()) / it.value();
  }
  for (Index r = 0; r < m; ++r) {
    if (state[r] == -1 && cand.y(r) > tol) return std::nullopt;
    if (state[r] == 1 && cand.y(r) < -tol) return std::nullopt;
  }
  residuals(p, q, rows, cand);
  if (cand.primal > tol || cand.dual > tol) return std::nullopt;
  return cand;
}

template <typename Scalar>
ScoreSolution<Scalar> solve_iterative(const Matrix<Scalar>& a, const Vector<Scalar>& b,
                                      const ConstraintSet<Scalar>& cons,
                                      const SolveOptions<Scalar>& opt) {
  const Index n = a.rows();
  const ConstraintRows<Scalar> rows = build_rows(cons, n);
  const Index m = rows.c.rows();

  // Normalize so the Hessian has unit mean diagonal.
  const Scalar scale = a.diagonal().mean();
  const Matrix<Scalar> p = (Scalar(2) / scale) * a;
  const Vector<Scalar> q = (Scalar(2) / scale) * b;

  const Scalar sigma = Scalar(1e-6);
  const Scalar relax = Scalar(1.6);
  Scalar rho = Scalar(0.1);
  auto rho_vector = [&](Scalar base) {
    Vector<Scalar> r(m);
    for (Index i = 0; i < m; ++i) r(i) = rows.lower(i) == rows.upper(i) ? Scalar(1e3) * base : base;
    return r;
  };
  Vector<Scalar> rho_v = rho_vector(rho);
  auto factor = [&](const Vector<Scalar>& rv) {
    Eigen::SparseMatrix<Scalar> crc = rows.c.transpose() * rv.asDiagonal() * rows.c;
    Matrix<Scalar> kkt = p + Matrix<Scalar>(crc);
    kkt.diagonal().array() += sigma;
    return Eigen::LLT<Matrix<Scalar>>(kkt);
  };
  Eigen::LLT<Matrix<Scalar>> llt = factor(rho_v);
  if (llt.info() != Eigen::Success) throw SolverError("solve_score: factorization failed", {}, 0, 0, 0);

  Vector<Scalar> x = Vector<Scalar>::Zero(n);
  Vector<Scalar> z = Vector<Scalar>::Zero(m);
  Vector<Scalar> y = Vector<Scalar>::Zero(m);
  Candidate<Scalar> best;
  best.primal = best.dual = std::numeric_limits<Scalar>::infinity();
  std::optional<Candidate<Scalar>> done;
  int iter = 0;

  for (iter = 1; iter <= opt.max_iter; ++iter) {
    const Vector<Scalar> rhs = sigma * x - q + rows.c.transpose() * Vector<Scalar>(rho_v.cwiseProduct(z) - y);
    const Vector<Scalar> xt = llt.solve(rhs);
    const Vector<Scalar> zt = rows.c * xt;
    x = relax * xt + (Scalar(1) - relax) * x;
    const Vector<Scalar> zr = relax * zt + (Scalar(1) - relax) * z;
    Vector<Scalar> znew = zr + y.cwiseQuotient(rho_v);
    znew = znew.cwiseMax(rows.lower).cwiseMin(rows.upper);
    y += rho_v.cwiseProduct(zr - znew);
    z = znew;

    if (iter % 10 != 0 && iter != opt.max_iter) continue;
    Candidate<Scalar> cur{x, y, 0, 0};
    residuals(p, q, rows, cur);
    if (std::max(cur.primal, cur.dual) < std::max(best.primal, best.dual)) best = cur;
    if (cur.primal <= opt.tol && cur.dual <= opt.tol) {
      auto pol = polish(p, q, rows, z, y, opt.tol);
      done = pol ? *pol : cur;
      break;
    }
    if (iter % 100 == 0) {
      if (auto pol = polish(p, q, rows, z, y, opt.tol)) {
        done = *pol;
        break;
      }
      // Rebalance ρ between primal and dual progress.
      const Vector<Scalar> cx = rows.c * x;
      const Scalar pn = cur.primal * (Scalar(1) + inf_norm<Scalar>(cx)) /
                        std::max(inf_norm<Scalar>(cx), inf_norm<Scalar>(z)) ;
      const Scalar dn = cur.dual;
      if (std::isfinite(pn) && pn > 0 && dn > 0) {
        const Scalar ratio = std::sqrt(pn / dn);
        if (ratio > Scalar(5) || ratio < Scalar(0.2)) {
          rho = std::clamp(rho * ratio, Scalar(1e-6), Scalar(1e6));
          rho_v = rho_vector(rho);
          llt = factor(rho_v);
          if (llt.info() != Eigen::Success)
            throw SolverError("solve_score: factorization failed", best.x.template cast<double>(),
                              double(best.primal), double(best.dual), iter);
        }
      }
    }
  }
  if (!done) {
    if (auto pol = polish(p, q, rows, z, y, opt.tol)) done = *pol;
  }
  if (!done)
    throw SolverError("solve_score: no convergence within " + std::to_string(opt.max_iter) +
                          " iterations",
                      best.x.template cast<double>(), double(best.primal), double(best.dual),
                      opt.max_iter);

  ScoreSolution<Scalar> sol;
  sol.h = done->x;
  sol.kkt_residual = std::max(done->primal, done->dual);
  sol.iterations = std::min(iter, opt.max_iter);
  const Vector<Scalar> cx = rows.c * sol.h;
  const Scalar act_tol = std::sqrt(opt.tol);
  for (Index r = 0; r < m; ++r) {
    if (rows.label[r] < 0) continue;
    const Scalar gap = std::min(cx(r) - rows.lower(r), rows.upper(r) - cx(r));
    if (gap <= act_tol * (Scalar(1) + std::abs(cx(r)))) sol.active_constraints.push_back(rows.label[r]);
  }
  return sol;
}

template <typename Scalar>
ScoreSolution<Scalar> solve_direct(const Matrix<Scalar>& a, const Vector<Scalar>& b, bool zero_sum) {
  const Index n = a.rows();
  ScoreSolution<Scalar> sol;
  const Vector<Scalar> ones = Vector<Scalar>::Ones(n);
  Scalar half_mu = 0;

  Eigen::LLT<Matrix<Scalar>> llt(a);
  if (llt.info() == Eigen::Success) {
    const Vector<Scalar> x1 = llt.solve(b);
    if (zero_sum) {
      const Vector<Scalar> x2 = llt.solve(ones);
      half_mu = -x1.sum() / x2.sum();
      sol.h = -x1 - half_mu * x2;
      // One step of iterative refinement on the full KKT system.
      const Vector<Scalar> r = a * sol.h + b + half_mu * ones;
      const Vector<Scalar> d1 = llt.solve(Vector<Scalar>(-r));
      const Scalar d_mu = (d1.sum() + sol.h.sum()) / x2.sum();
      sol.h += d1 - d_mu * x2;
      half_mu += d_mu;
    } else {
      sol.h = -x1;
      const Vector<Scalar> r = a * sol.h + b;
      sol.h -= llt.solve(r);
    }
  } else {
    // Singular Hessian: minimum-norm solution of the KKT system.
    const Index dim = zero_sum ? n + 1 : n;
    Matrix<Scalar> kkt = Matrix<Scalar>::Zero(dim, dim);
    kkt.topLeftCorner(n, n) = a;
    Vector<Scalar> rhs = Vector<Scalar>::Zero(dim);
    rhs.head(n) = -b;
    if (zero_sum) {
      kkt.block(0, n, n, 1) = ones;
      kkt.block(n, 0, 1, n) = ones.transpose();
    }
    const Vector<Scalar> sol_full = kkt.completeOrthogonalDecomposition().solve(rhs);
    sol.h = sol_full.head(n);
    if (zero_sum) half_mu = sol_full(n);
  }

  // Normwise backward error of the stationarity condition 2Ah + 2b + μ1 = 0
  // (μ = 2·half_mu).
  const Vector<Scalar> stat = a * sol.h + b + half_mu * ones;
  const Scalar a_norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  const Scalar denom = std::max(a_norm * inf_norm<Scalar>(sol.h) + inf_norm<Scalar>(b) + std::abs(half_mu),
                                std::numeric_limits<Scalar>::min());
  Scalar residual = inf_norm<Scalar>(stat) / denom;
  if (zero_sum)
    residual = std::max(residual, std::abs(sol.h.sum()) /
                                      (Scalar(n) * std::max(Scalar(1), inf_norm<Scalar>(sol.h))));
  sol.kkt_residual = residual;
  return sol;
}

}  // namespace detail

// Minimizer of hᵀ(K + ridge·mean(diag K)·I)h + 2hᵀ∇K·1 over the constraint set.
// kkt_residual is the normwise backward error of the KKT conditions (direct
// path) or the larger of the scaled primal/dual ADMM residuals; the solve
// fails with SolverError when it cannot be brought below tol.
template <typename Scalar>
ScoreSolution<Scalar> solve_score(const KernelMatrices<Scalar>& km, const ConstraintSet<Scalar>& cons,
                                  const SolveOptions<Scalar>& opt = {}) {
  const Index n = km.size();
  if (n < 1 || km.grad_k.rows() != n || km.grad_k.cols() != n || km.k.cols() != n)
    throw InvalidInput("solve_score: malformed kernel matrices");
  if (opt.ridge < 0) throw InvalidInput("solve_score: ridge must be >= 0");
  if (!(opt.tol > 0)) throw InvalidInput("solve_score: tol must be positive");
  if (cons.box) {
    if (cons.box->size() != n) throw InvalidInput("solve_score: box bound length does not match n");
    for (Index i = 0; i < n; ++i)
      if (!((*cons.box)(i) >= 0))
        throw InvalidInput("solve_score: infeasible constraint set (box bound " + std::to_string(i) +
                           " is negative)");
  }
  if (cons.monotone && cons.monotone->y.size() != n)
    throw InvalidInput("solve_score: monotone order length does not match n");

  Matrix<Scalar> a = km.k;
  a.diagonal().array() += opt.ridge * km.k.diagonal().mean();
  const Vector<Scalar> b = km.grad_k.rowwise().sum();

  ScoreSolution<Scalar> sol = cons.has_inequalities() ? detail::solve_iterative(a, b, cons, opt)
                                                      : detail::solve_direct(a, b, cons.zero_sum);
  if (!sol.h.allFinite())
    throw SolverError("solve_score: non-finite solution", {}, 0, 0, sol.iterations);
  if (!cons.has_inequalities() && sol.kkt_residual > opt.tol)
    throw SolverError("solve_score: KKT residual " + std::to_string(double(sol.kkt_residual)) +
                          " exceeds tolerance",
                      sol.h.template cast<double>(), 0, double(sol.kkt_residual), 0);
  sol.objective = ksd_objective(sol.h, km);
  return sol;
}

}  // namespace nit
