// Copyright 2026 The pooltrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Decoders for real-valued (viral load) pooled measurements.
//
//   comp             every sample in a zero-valued pool is negative
//   lasso_nonneg     min ||y - Ax||^2 + rho ||x||_1,              x >= 0
//   sqrt_lasso       min ||y - Ax||   + rho ||x||_1,              x >= 0
//   sqrt_glasso      min ||y - Ax||   + rho sum_g ||x_g||,        x >= 0
//   sqrt_oglasso     min ||y - Ax||   + rho Omega_overlap(x),     x >= 0
//
// Omega_overlap(x) = min { sum_g ||v_g|| : sum_g v_g = x, supp(v_g) in g }.
//
// lasso_nonneg runs monotone FISTA. sqrt_glasso runs a primal-dual hybrid
// gradient iteration with adaptive step balancing. sqrt_lasso alternates a
// noise-level update with an inner lasso (the scaled-lasso fixed point), a
// separate route from sqrt_glasso so the two can be checked against each
// other. sqrt_oglasso works in the latent space (one coordinate per group
// member, so the groups become disjoint) and runs the same PDHG iteration
// without forming the duplicated columns; with v >= 0 the
// latent constraint is equivalent to x >= 0 because any nonnegative x with a
// signed decomposition has a nonnegative one of no larger norm (clip the
// negative parts, then shrink the positives to restore the sum).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pooltrace/common.hpp"
#include "pooltrace/pool_design.hpp"

namespace pooltrace {

using SparseMatrix = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// COMP and problem reduction

/// Samples that appear in at least one zero-valued pool; sorted.
template <typename T>
std::vector<int> comp(const PoolingMatrix& a, std::span<const T> y) {
  if (static_cast<int>(y.size()) != a.m) throw StructuralError("comp: y length does not match pool count");
  std::vector<std::uint8_t> neg(static_cast<std::size_t>(a.n), 0);
  for (int i = 0; i < a.m; ++i) {
    if (static_cast<double>(y[static_cast<std::size_t>(i)]) < 0) throw DomainError("comp: negative measurement");
    if (static_cast<double>(y[static_cast<std::size_t>(i)]) == 0)
      for (int j : a.row_columns[static_cast<std::size_t>(i)]) neg[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<int> out;
  for (int j = 0; j < a.n; ++j)
    if (neg[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

struct ReducedProblem {
  int n = 0;                        // original column count
  std::vector<int> kept_columns;    // reduced column -> original column
  std::vector<int> kept_rows;       // reduced row -> original row
  std::vector<int> definite_negatives;
  SparseMatrix a;
  Eigen::VectorXd y;

  bool empty() const { return kept_columns.empty(); }

  /// Embeds a reduced solution into the full index space (zeros elsewhere).
  std::vector<double> scatter(const Eigen::VectorXd& x) const {
    if (x.size() != static_cast<Eigen::Index>(kept_columns.size()))
      throw StructuralError("scatter: solution length does not match kept columns");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (std::size_t c = 0; c < kept_columns.size(); ++c)
      out[static_cast<std::size_t>(kept_columns[c])] = x[static_cast<Eigen::Index>(c)];
    return out;
  }
};

/// Drops the given columns and the zero-valued rows.
inline ReducedProblem reduce_problem(const PoolingMatrix& a, std::span<const double> y,
                                     std::span<const int> definite_negatives) {
  if (static_cast<int>(y.size()) != a.m) throw StructuralError("reduce_problem: y length does not match pool count");
  ReducedProblem r;
  r.n = a.n;
  r.definite_negatives.assign(definite_negatives.begin(), definite_negatives.end());
  std::vector<int> col_map(static_cast<std::size_t>(a.n), 0);
  for (int j : definite_negatives) {
    if (j < 0 || j >= a.n) throw StructuralError("reduce_problem: negative index out of range");
    col_map[static_cast<std::size_t>(j)] = -1;
  }
  for (int j = 0; j < a.n; ++j)
    if (col_map[static_cast<std::size_t>(j)] == 0) {
      col_map[static_cast<std::size_t>(j)] = static_cast<int>(r.kept_columns.size());
      r.kept_columns.push_back(j);
    } else {
      col_map[static_cast<std::size_t>(j)] = -1;
    }
  std::vector<int> row_map(static_cast<std::size_t>(a.m), -1);
  for (int i = 0; i < a.m; ++i)
    if (y[static_cast<std::size_t>(i)] != 0) {
      row_map[static_cast<std::size_t>(i)] = static_cast<int>(r.kept_rows.size());
      r.kept_rows.push_back(i);
    }
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t c = 0; c < r.kept_columns.size(); ++c)
    for (int i : a.column_rows[static_cast<std::size_t>(r.kept_columns[c])])
      if (row_map[static_cast<std::size_t>(i)] >= 0)
        trip.emplace_back(row_map[static_cast<std::size_t>(i)], static_cast<int>(c), 1.0);
  r.a.resize(static_cast<Eigen::Index>(r.kept_rows.size()), static_cast<Eigen::Index>(r.kept_columns.size()));
  r.a.setFromTriplets(trip.begin(), trip.end());
  r.y.resize(static_cast<Eigen::Index>(r.kept_rows.size()));
  for (std::size_t i = 0; i < r.kept_rows.size(); ++i)
    r.y[static_cast<Eigen::Index>(i)] = y[static_cast<std::size_t>(r.kept_rows[i])];
  return r;
}

// ---------------------------------------------------------------------------
// Groups

struct GroupStructure {
  std::vector<std::vector<int>> groups;
  bool overlapping = false;

  /// Checks indices, optional coverage of 0..n-1 and disjointness when not
  /// flagged as overlapping.
  void validate(int n, bool require_cover = true) const {
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    for (const auto& g : groups) {
      if (g.empty()) throw StructuralError("GroupStructure: empty group");
      for (int j : g) {
        if (j < 0 || j >= n) throw StructuralError("GroupStructure: index " + std::to_string(j) + " out of range");
        ++count[static_cast<std::size_t>(j)];
      }
    }
    for (int j = 0; j < n; ++j) {
      if (require_cover && count[static_cast<std::size_t>(j)] == 0)
        throw StructuralError("GroupStructure: column " + std::to_string(j) + " is in no group");
      if (!overlapping && count[static_cast<std::size_t>(j)] > 1)
        throw StructuralError("GroupStructure: groups overlap but structure is flagged disjoint");
    }
  }

  static GroupStructure singletons(int n) {
    GroupStructure g;
    for (int j = 0; j < n; ++j) g.groups.push_back({j});
    return g;
  }

  /// Restricts to the kept columns of a reduction, renumbering. Empty groups
  /// are dropped, and so is any group contained in another one: its latent
  /// vector can be folded into the larger group's without raising the
  /// penalty (triangle inequality), so the overlap norm is unchanged.
  GroupStructure restrict_to(std::span<const int> kept_columns, int n) const {
    std::vector<int> map(static_cast<std::size_t>(n), -1);
    for (std::size_t c = 0; c < kept_columns.size(); ++c) map[static_cast<std::size_t>(kept_columns[c])] = static_cast<int>(c);
    GroupStructure out;
    out.overlapping = overlapping;
    for (const auto& g : groups) {
      std::vector<int> h;
      for (int j : g)
        if (map[static_cast<std::size_t>(j)] >= 0) h.push_back(map[static_cast<std::size_t>(j)]);
      std::sort(h.begin(), h.end());
      if (!h.empty()) out.groups.push_back(std::move(h));
    }
    std::sort(out.groups.begin(), out.groups.end());
    out.groups.erase(std::unique(out.groups.begin(), out.groups.end()), out.groups.end());
    std::vector<std::vector<int>> member_of(kept_columns.size());
    for (std::size_t g = 0; g < out.groups.size(); ++g)
      for (int j : out.groups[g]) member_of[static_cast<std::size_t>(j)].push_back(static_cast<int>(g));
    std::vector<std::vector<int>> kept;
    for (std::size_t g = 0; g < out.groups.size(); ++g) {
      const auto& grp = out.groups[g];
      bool covered = false;
      for (int h : member_of[static_cast<std::size_t>(grp.front())]) {
        const auto& big = out.groups[static_cast<std::size_t>(h)];
        if (static_cast<std::size_t>(h) != g && big.size() > grp.size() &&
            std::includes(big.begin(), big.end(), grp.begin(), grp.end())) {
          covered = true;
          break;
        }
      }
      if (!covered) kept.push_back(grp);
    }
    out.groups = std::move(kept);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Solvers

struct SolverOptions {
  int max_iterations = 20000;
  // Stopping tolerance: gradient-mapping norm for lasso_nonneg, relative
  // duality gap for the square-root estimators.
  double tol = 1e-6;
  bool record_objective = false;
};

struct SolveResult {
  Eigen::VectorXd x;
  double objective = 0;
  double residual = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  // sqrt_oglasso only: latent vectors, one per group, indexed like the groups.
  std::vector<Eigen::VectorXd> latent;
};

namespace detail {

// Linear maps used by the square-root solvers: a plain matrix, and the
// latent expansion x = sum_g v_g followed by A, applied without forming the
// duplicated columns.
struct MatrixOp {
  const SparseMatrix& a;
  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index cols() const { return a.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return a * x; }
  Eigen::VectorXd adjoint(const Eigen::VectorXd& z) const { return a.transpose() * z; }
};

struct LatentOp {
  const SparseMatrix& a;
  const std::vector<int>& owner;  // latent coordinate -> column of a
  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(owner.size()); }
  Eigen::VectorXd collapse(const Eigen::VectorXd& v) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
    for (std::size_t c = 0; c < owner.size(); ++c) x[owner[c]] += v[static_cast<Eigen::Index>(c)];
    return x;
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return a * collapse(v); }
  Eigen::VectorXd adjoint(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd s = a.transpose() * z;
    Eigen::VectorXd out(cols());
    for (std::size_t c = 0; c < owner.size(); ++c) out[static_cast<Eigen::Index>(c)] = s[owner[c]];
    return out;
  }
};

template <typename Op>
double operator_norm_sq(const Op& op) {
  if (op.cols() == 0 || op.rows() == 0) return 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(op.cols()) / std::sqrt(static_cast<double>(op.cols()));
  double est = 0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd w = op.adjoint(op.apply(v));
    const double nw = w.norm();
    if (nw == 0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    if (std::abs(next - est) <= 1e-10 * next) {
      est = next;
      break;
    }
    est = next;
  }
  return est * 1.01;  // power iteration approaches from below
}

inline double operator_norm_sq(const SparseMatrix& a) {
  if (a.nonZeros() == 0) return 0.0;
  return operator_norm_sq(MatrixOp{a});
}

inline void project_nonneg(Eigen::VectorXd& x) { x = x.cwiseMax(0.0); }

// prox of t * sum_g ||x_g|| + indicator(x >= 0) for disjoint groups.
inline void prox_group_nonneg(Eigen::VectorXd& x, const std::vector<std::vector<int>>& groups, double t) {
  project_nonneg(x);
  for (const auto& g : groups) {
    double nrm = 0;
    for (int j : g) nrm += x[j] * x[j];
    nrm = std::sqrt(nrm);
    const double s = nrm > t ? 1.0 - t / nrm : 0.0;
    for (int j : g) x[j] *= s;
  }
}

inline double group_norm_sum(const Eigen::VectorXd& x, const std::vector<std::vector<int>>& groups) {
  double s = 0;
  for (const auto& g : groups) {
    double nrm = 0;
    for (int j : g) nrm += x[j] * x[j];
    s += std::sqrt(nrm);
  }
  return s;
}

}  // namespace detail

inline double lasso_objective(const SparseMatrix& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x, double rho) {
  return (y - a * x).squaredNorm() + rho * x.lpNorm<1>();
}

inline double sqrt_glasso_objective(const SparseMatrix& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                    const std::vector<std::vector<int>>& groups, double rho) {
  return (y - a * x).norm() + rho * detail::group_norm_sum(x, groups);
}

namespace detail {
inline void check_problem(const SparseMatrix& a, const Eigen::VectorXd& y, double rho, const char* who) {
  if (y.size() != a.rows()) throw StructuralError(std::string(who) + ": y length does not match matrix rows");
  if (!(rho > 0)) throw DomainError(std::string(who) + ": rho must be positive");
}

// ||x - prox(x - grad)||_inf with the given prox; unit step.
template <typename Prox>
double gradient_mapping(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, Prox&& prox) {
  Eigen::VectorXd z = x - grad;
  prox(z);
  return x.size() ? (x - z).lpNorm<Eigen::Infinity>() : 0.0;
}
}  // namespace detail

/// Nonnegative LASSO by monotone FISTA. The residual is the gradient mapping
/// at step 1/L.
inline SolveResult lasso_nonneg(const SparseMatrix& a, const Eigen::VectorXd& y, double rho,
                                const SolverOptions& opt = {}, const Eigen::VectorXd* warm = nullptr) {
  detail::check_problem(a, y, rho, "lasso_nonneg");
  const Eigen::Index n = a.cols();
  SolveResult res;
  res.x = warm ? *warm : Eigen::VectorXd::Zero(n);
  detail::project_nonneg(res.x);
  const double lip = 2.0 * detail::operator_norm_sq(a);
  if (n == 0 || lip == 0) {
    res.x.setZero();
    res.objective = lasso_objective(a, y, res.x, rho);
    res.converged = true;
    return res;
  }
  const double step = 1.0 / lip;
  auto prox = [&](Eigen::VectorXd& v) { v = (v.array() - rho * step).cwiseMax(0.0).matrix(); };
  auto grad = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return 2.0 * (a.transpose() * (a * v - y)); };
  Eigen::VectorXd x = res.x, w = res.x, z(n);
  double fx = lasso_objective(a, y, x, rho);
  double t = 1.0;
  if (opt.record_objective) res.objective_trace.push_back(fx);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    z = w - step * grad(w);
    prox(z);
    const double fz = lasso_objective(a, y, z, rho);
    const Eigen::VectorXd x_prev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    w = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;
    if (opt.record_objective) res.objective_trace.push_back(fx);
    res.iterations = it;
    if (it % 10 == 0 || it == opt.max_iterations) {
      res.residual = detail::gradient_mapping(x, step * grad(x), prox) * lip;
      if (res.residual < opt.tol) {
        res.converged = true;
        break;
      }
    }
  }
  res.x = x;
  res.objective = fx;
  return res;
}

namespace detail {
template <typename Op>
double duality_gap(const Op& op, const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::VectorXd& ax,
                   Eigen::VectorXd u, const std::vector<std::vector<int>>& groups, double rho) {
  const double un = u.norm();
  if (un > 1.0) u /= un;
  const Eigen::VectorXd s = -op.adjoint(u);
  double worst = 0;
  for (const auto& g : groups) {
    double nrm = 0;
    for (int j : g) nrm += std::max(0.0, s[j]) * std::max(0.0, s[j]);
    worst = std::max(worst, std::sqrt(nrm));
  }
  if (worst > rho) u *= rho / worst;
  const double primal = (y - ax).norm() + rho * group_norm_sum(x, groups);
  return std::max(0.0, primal + u.dot(y));
}
}  // namespace detail

/// Duality gap of the sqrt group objective at primal x and dual candidate u.
/// The dual is  max -<u, y>  s.t. ||u|| <= 1 and ||(-A^T u)_g^+|| <= rho;
/// u is scaled into the feasible set first. The gap bounds the distance of
/// the primal objective from the optimum.
inline double sqrt_glasso_duality_gap(const SparseMatrix& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                      Eigen::VectorXd u, const std::vector<std::vector<int>>& groups, double rho) {
  return detail::duality_gap(detail::MatrixOp{a}, y, x, a * x, std::move(u), groups, rho);
}

/// Nonnegative square-root LASSO by noise-level alternation: with
/// sigma = ||y - Ax|| fixed, x solves a LASSO with penalty 2 sigma rho.
/// Each half-step lowers ||y - Ax|| + rho ||x||_1.
inline SolveResult sqrt_lasso_nonneg(const SparseMatrix& a, const Eigen::VectorXd& y, double rho,
                                     const SolverOptions& opt = {}) {
  detail::check_problem(a, y, rho, "sqrt_lasso_nonneg");
  SolveResult res;
  res.x = Eigen::VectorXd::Zero(a.cols());
  SolverOptions inner = opt;
  inner.record_objective = false;
  inner.tol = std::min(opt.tol, 1e-9);
  auto singles = GroupStructure::singletons(static_cast<int>(a.cols())).groups;
  auto objective = [&](const Eigen::VectorXd& x) { return (y - a * x).norm() + rho * x.lpNorm<1>(); };
  res.objective = objective(res.x);
  if (opt.record_objective) res.objective_trace.push_back(res.objective);
  for (int it = 1; it <= 500; ++it) {
    const double sigma = (y - a * res.x).norm();
    if (sigma < 1e-14) break;
    auto step = lasso_nonneg(a, y, 2.0 * sigma * rho, inner, &res.x);
    const double f = objective(step.x);
    res.iterations += step.iterations;
    if (f <= res.objective) {
      res.x = step.x;
      res.objective = f;
    }
    if (opt.record_objective) res.objective_trace.push_back(res.objective);
    const Eigen::VectorXd r = a * res.x - y;
    const double rn = r.norm();
    if (rn < 1e-14) break;
    res.residual = sqrt_glasso_duality_gap(a, y, res.x, r / rn, singles, rho);
    if (res.residual < opt.tol * std::max(1.0, res.objective)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct PdhgOptions {
  double alpha0 = 0.5;
  double eta = 0.95;
  double balance = 1.5;
};

namespace detail {

// Adaptive PDHG on  min ||y - K x|| + rho sum_g ||x_g||,  x >= 0,  disjoint
// groups. Returns the lowest-objective iterate among those checked.
template <typename Op>
SolveResult sqrt_group_pdhg(const Op& op, const Eigen::VectorXd& y, const std::vector<std::vector<int>>& g, double rho,
                            const SolverOptions& opt, const PdhgOptions& pd) {
  const Eigen::Index n = op.cols();
  SolveResult res;
  res.x = Eigen::VectorXd::Zero(n);
  res.objective = y.norm();
  const double l2 = operator_norm_sq(op);
  if (n == 0 || l2 == 0 || y.norm() == 0) {
    res.converged = true;
    return res;
  }
  double tau = 0.95 / std::sqrt(l2), sigma = 0.95 / std::sqrt(l2), alpha = pd.alpha0;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), z = Eigen::VectorXd::Zero(op.rows());
  Eigen::VectorXd ax = Eigen::VectorXd::Zero(op.rows()), atz = Eigen::VectorXd::Zero(n);
  if (opt.record_objective) res.objective_trace.push_back(res.objective);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Eigen::VectorXd x_new = x - tau * atz;
    prox_group_nonneg(x_new, g, tau * rho);
    const Eigen::VectorXd ax_new = op.apply(x_new);
    Eigen::VectorXd z_new = z + sigma * (2.0 * ax_new - ax) - sigma * y;
    const double zn = z_new.norm();
    if (zn > 1.0) z_new /= zn;
    const Eigen::VectorXd atz_new = op.adjoint(z_new);
    // Primal and dual residuals drive the step balancing.
    const double p = ((x - x_new) / tau - (atz - atz_new)).lpNorm<1>();
    const double d = ((z - z_new) / sigma - (ax - ax_new)).lpNorm<1>();
    x = std::move(x_new);
    z = std::move(z_new);
    ax = ax_new;
    atz = atz_new;
    if (p > pd.balance * d) {
      tau /= (1 - alpha);
      sigma *= (1 - alpha);
      alpha *= pd.eta;
    } else if (p < d / pd.balance) {
      tau *= (1 - alpha);
      sigma /= (1 - alpha);
      alpha *= pd.eta;
    }
    res.iterations = it;
    if (it % 20 == 0 || it == opt.max_iterations) {
      const double f = (y - ax).norm() + rho * group_norm_sum(x, g);
      if (f <= res.objective) {
        res.objective = f;
        res.x = x;
      }
      if (opt.record_objective) res.objective_trace.push_back(res.objective);
      res.residual = duality_gap(op, y, x, ax, z, g, rho);
      if (res.residual < opt.tol * std::max(1.0, f)) {
        res.x = x;
        res.objective = f;
        res.converged = true;
        break;
      }
    }
  }
  return res;
}

}  // namespace detail

/// Nonnegative square-root group LASSO (disjoint groups) by adaptive PDHG.
/// Returns the lowest-objective iterate among those checked.
inline SolveResult sqrt_glasso(const SparseMatrix& a, const Eigen::VectorXd& y, const GroupStructure& groups,
                               double rho, const SolverOptions& opt = {}, const PdhgOptions& pd = {}) {
  detail::check_problem(a, y, rho, "sqrt_glasso");
  groups.validate(static_cast<int>(a.cols()));
  if (groups.overlapping) throw StructuralError("sqrt_glasso: groups must be disjoint (use sqrt_oglasso)");
  return detail::sqrt_group_pdhg(detail::MatrixOp{a}, y, groups.groups, rho, opt, pd);
}

/// Overlapping-group variant through the latent expansion: one latent
/// coordinate per (group, member) pair, disjoint groups in latent space.
inline SolveResult sqrt_oglasso(const SparseMatrix& a, const Eigen::VectorXd& y, const GroupStructure& groups,
                                double rho, const SolverOptions& opt = {}, const PdhgOptions& pd = {}) {
  detail::check_problem(a, y, rho, "sqrt_oglasso");
  const Eigen::Index n = a.cols();
  GroupStructure check = groups;
  check.overlapping = true;
  check.validate(static_cast<int>(n));
  std::vector<int> owner;
  std::vector<std::vector<int>> latent_groups;
  for (const auto& g : groups.groups) {
    std::vector<int> lg;
    for (int j : g) {
      lg.push_back(static_cast<int>(owner.size()));
      owner.push_back(j);
    }
    latent_groups.push_back(std::move(lg));
  }
  const detail::LatentOp op{a, owner};
  auto inner = detail::sqrt_group_pdhg(op, y, latent_groups, rho, opt, pd);
  SolveResult res;
  res.x = op.collapse(inner.x);
  for (const auto& lg : latent_groups) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int c : lg) v[owner[static_cast<std::size_t>(c)]] = inner.x[c];
    res.latent.push_back(std::move(v));
  }
  res.objective = inner.objective;
  res.residual = inner.residual;
  res.iterations = inner.iterations;
  res.converged = inner.converged;
  res.objective_trace = std::move(inner.objective_trace);
  return res;
}

/// Binary calls: positive iff x_hat > tau.
inline std::vector<std::uint8_t> threshold_positives(std::span<const double> x_hat, double tau) {
  if (!(tau >= 0)) throw DomainError("threshold_positives: tau must be >= 0");
  std::vector<std::uint8_t> out(x_hat.size());
  for (std::size_t i = 0; i < x_hat.size(); ++i) out[i] = x_hat[i] > tau ? 1 : 0;
  return out;
}

}  // namespace pooltrace
