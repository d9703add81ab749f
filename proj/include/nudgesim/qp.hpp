#pragma once

/**
 * @file
 * @brief Dense strictly convex quadratic programming.
 *
 * Solves
 *
 *   minimize    1/2 z^T H z + g^T z
 *   subject to  A_in z <= b_in,  lb <= z <= ub
 *
 * with the dual active-set method of Goldfarb and Idnani. The method starts at
 * the unconstrained minimizer and adds violated constraints one at a time while
 * keeping dual feasibility, so every iterate is optimal for the current working
 * set. The factor J = L^{-T} of H = L L^T is computed once per Hessian and can be
 * reused across problems sharing H (see DenseQpSolver).
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "numerics.hpp"

namespace nudgesim {

struct QpProblem
{
  Matrix H;     ///< n x n, symmetric positive semidefinite
  Vector g;     ///< n
  Matrix A_in;  ///< m x n
  Vector b_in;  ///< m
  Vector lb;    ///< n, entries may be -inf
  Vector ub;    ///< n, entries may be +inf

  /// Problem with n unbounded variables and no inequality rows.
  static QpProblem unconstrained(Matrix h, Vector g)
  {
    const auto n = g.size();
    QpProblem p;
    p.H = std::move(h);
    p.g = std::move(g);
    p.A_in = Matrix(0, n);
    p.b_in = Vector(0);
    p.lb = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    p.ub = Vector::Constant(n, std::numeric_limits<double>::infinity());
    return p;
  }

  Eigen::Index num_variables() const { return g.size(); }
  Eigen::Index num_inequalities() const { return b_in.size(); }

  void validate() const
  {
    const auto n = g.size();
    require_dims(H.rows() == n && H.cols() == n, "QpProblem: H must be n x n");
    require_dims(A_in.cols() == n || A_in.rows() == 0, "QpProblem: A_in must have n columns");
    require_dims(A_in.rows() == b_in.size(), "QpProblem: A_in rows must match b_in");
    require_dims(lb.size() == n && ub.size() == n, "QpProblem: bounds must have length n");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lb[i] > ub[i]) throw Error(Errc::InvalidArgument, "QpProblem: lb > ub at index " + std::to_string(i));
    }
  }
};

enum class QpStatus { Optimal, MaxIterations, Infeasible };

inline const char * to_string(QpStatus s)
{
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::MaxIterations: return "MaxIterations";
    case QpStatus::Infeasible: return "Infeasible";
  }
  return "Unknown";
}

struct QpSolution
{
  Vector z;
  double objective = 0;
  QpStatus status = QpStatus::MaxIterations;
  double kkt_residual = std::numeric_limits<double>::infinity();
  /// largest constraint violation at z (the infeasibility certificate when status = Infeasible)
  double infeasibility = 0;
  int iterations = 0;

  /// multipliers, all nonnegative at optimality
  Vector lambda_in, lambda_lb, lambda_ub;
};

struct QpSettings
{
  double tol = 1e-8;
  int max_iter = 50000;
  /// curvature threshold below which H is regularized by `regularization * I`
  double regularization = 1e-9;
};

/// Components of the KKT conditions at (z, multipliers) for problem p.
struct KktReport
{
  double primal = 0;          ///< max constraint violation
  double dual = 0;            ///< max negative multiplier
  double stationarity = 0;    ///< |H z + g + A^T l_in - l_lb + l_ub|_inf
  double complementarity = 0; ///< max |multiplier * slack|

  double max() const { return std::max({primal, dual, stationarity, complementarity}); }
};

/// KKT residual of a candidate solution, recomputed from the problem data.
inline KktReport kkt_report(const QpProblem & p, const QpSolution & s)
{
  KktReport r;
  const auto n = p.num_variables();
  Vector grad = p.H * s.z + p.g;
  if (p.num_inequalities() > 0) {
    const Vector ax = p.A_in * s.z;
    grad += p.A_in.transpose() * s.lambda_in;
    for (Eigen::Index i = 0; i < p.num_inequalities(); ++i) {
      const double slack = p.b_in[i] - ax[i];
      r.primal = std::max(r.primal, -slack);
      r.dual = std::max(r.dual, -s.lambda_in[i]);
      r.complementarity = std::max(r.complementarity, std::abs(s.lambda_in[i] * slack));
    }
  }
  grad -= s.lambda_lb;
  grad += s.lambda_ub;
  for (Eigen::Index j = 0; j < n; ++j) {
    r.dual = std::max({r.dual, -s.lambda_lb[j], -s.lambda_ub[j]});
    if (std::isfinite(p.lb[j])) {
      const double slack = s.z[j] - p.lb[j];
      r.primal = std::max(r.primal, -slack);
      r.complementarity = std::max(r.complementarity, std::abs(s.lambda_lb[j] * slack));
    } else if (s.lambda_lb[j] != 0) {
      r.complementarity = std::numeric_limits<double>::infinity();
    }
    if (std::isfinite(p.ub[j])) {
      const double slack = p.ub[j] - s.z[j];
      r.primal = std::max(r.primal, -slack);
      r.complementarity = std::max(r.complementarity, std::abs(s.lambda_ub[j] * slack));
    } else if (s.lambda_ub[j] != 0) {
      r.complementarity = std::numeric_limits<double>::infinity();
    }
  }
  r.stationarity = inf_norm(grad);
  return r;
}

/**
 * @brief Goldfarb-Idnani solver bound to one Hessian.
 *
 * Construction factors H (regularizing it when its curvature is below
 * `QpSettings::regularization`). `solve` may then be called concurrently for
 * any linear term and constraint set of matching dimension.
 */
class DenseQpSolver
{
public:
  explicit DenseQpSolver(const Matrix & h, const QpSettings & settings = {}) : settings_(settings)
  {
    require_dims(h.rows() == h.cols(), "DenseQpSolver: H must be square");
    h_ = 0.5 * (h + h.transpose());
    const auto n = h_.rows();

    if (n > 0 && n <= 50) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(h_, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-9) {
        throw Error(Errc::NotConvex, "QP Hessian has a negative eigenvalue");
      }
    }

    Eigen::LLT<Matrix> llt(h_);
    bool ok = llt.info() == Eigen::Success;
    if (ok && n > 0) {
      const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
      ok = min_pivot * min_pivot >= settings_.regularization;
    }
    if (!ok) {
      regularized_ = true;
      llt.compute(h_ + settings_.regularization * Matrix::Identity(n, n));
      if (llt.info() != Eigen::Success) throw Error(Errc::NotConvex, "QP Hessian is not positive semidefinite");
    }
    // J = L^{-T}
    j0_ = Matrix::Identity(n, n);
    llt.matrixU().solveInPlace(j0_);
  }

  Eigen::Index dimension() const { return h_.rows(); }
  bool regularized() const { return regularized_; }
  const Matrix & hessian() const { return h_; }

  QpSolution solve(const QpProblem & p, const std::optional<QpSettings> & override_settings = std::nullopt) const;

private:
  // Constraint in "n^T z >= c" form with a sparse normal.
  struct Constraint
  {
    enum class Kind { Row, Lower, Upper, Fixed } kind;
    Eigen::Index index;  // row of A_in or variable index
    std::vector<std::pair<Eigen::Index, double>> normal;
    double rhs;
  };

  Matrix h_;
  Matrix j0_;
  QpSettings settings_;
  bool regularized_ = false;
};

namespace detail {

inline double dot_sparse(const std::vector<std::pair<Eigen::Index, double>> & a, const Vector & x)
{
  double s = 0;
  for (const auto & [i, v] : a) s += v * x[i];
  return s;
}

// d = J^T np for a sparse np.
inline void jt_times(const Matrix & J, const std::vector<std::pair<Eigen::Index, double>> & np, Vector & d)
{
  d.setZero();
  for (const auto & [i, v] : np) d.noalias() += v * J.row(i).transpose();
}

// Givens rotation zeroing b in (a, b); returns (c, s, h) with [c s; -s c][a; b] = [h; 0].
inline void givens(double a, double b, double & c, double & s, double & h)
{
  h = std::hypot(a, b);
  if (h == 0) {
    c = 1;
    s = 0;
    return;
  }
  c = a / h;
  s = b / h;
}

inline void rotate_columns(Matrix & J, Eigen::Index j0, Eigen::Index j1, double c, double s)
{
  const auto n = J.rows();
  double * a = J.col(j0).data();
  double * b = J.col(j1).data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = a[i], y = b[i];
    a[i] = c * x + s * y;
    b[i] = -s * x + c * y;
  }
}

}  // namespace detail

inline QpSolution DenseQpSolver::solve(const QpProblem & p, const std::optional<QpSettings> & override_settings) const
{
  p.validate();
  const QpSettings st = override_settings.value_or(settings_);
  if (!(st.tol > 0)) throw Error(Errc::InvalidArgument, "solve_qp: tol must be positive");
  const auto n = p.num_variables();
  require_dims(n == h_.rows(), "solve_qp: problem dimension differs from the factored Hessian");
  const auto m = p.num_inequalities();

  // Build constraint list: equalities (fixed variables) first.
  std::vector<Constraint> cons;
  cons.reserve(static_cast<std::size_t>(m + 2 * n));
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(p.lb[j]) && p.lb[j] == p.ub[j]) {
      cons.push_back({Constraint::Kind::Fixed, j, {{j, 1.0}}, p.lb[j]});
    }
  }
  const std::size_t meq = cons.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(p.lb[j]) && p.lb[j] == p.ub[j]) continue;
    if (std::isfinite(p.lb[j])) cons.push_back({Constraint::Kind::Lower, j, {{j, 1.0}}, p.lb[j]});
    if (std::isfinite(p.ub[j])) cons.push_back({Constraint::Kind::Upper, j, {{j, -1.0}}, -p.ub[j]});
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    Constraint c{Constraint::Kind::Row, i, {}, -p.b_in[i]};
    for (Eigen::Index j = 0; j < n; ++j) {
      if (p.A_in(i, j) != 0) c.normal.emplace_back(j, -p.A_in(i, j));
    }
    cons.push_back(std::move(c));
  }
  const std::size_t total = cons.size();

  Matrix J = j0_;
  Matrix R = Matrix::Zero(n, n);
  std::vector<std::size_t> active;  // indices into cons, in R column order
  active.reserve(static_cast<std::size_t>(n));
  Vector u = Vector::Zero(n);        // multipliers of the active set
  std::vector<char> is_active(total, 0);

  Vector x = -(J * (J.transpose() * p.g));
  Vector d(n), z(n), r(n);

  const double eps = std::numeric_limits<double>::epsilon();
  double r_norm = 1.0;

  auto compute_step = [&](const Constraint & c) {
    const auto q = static_cast<Eigen::Index>(active.size());
    detail::jt_times(J, c.normal, d);
    z.noalias() = J.rightCols(n - q) * d.tail(n - q);
    if (q > 0) {
      r.head(q) = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
    }
  };

  // Appends the constraint whose J^T n is in d. Returns false on linear dependence.
  auto add_constraint = [&](std::size_t ci) {
    const auto q = static_cast<Eigen::Index>(active.size());
    for (Eigen::Index j = n - 1; j > q; --j) {
      if (d[j] == 0) continue;
      double c, s, h;
      detail::givens(d[j - 1], d[j], c, s, h);
      d[j - 1] = h;
      d[j] = 0;
      detail::rotate_columns(J, j - 1, j, c, s);
    }
    R.col(q).head(q + 1) = d.head(q + 1);
    r_norm = std::max(r_norm, std::abs(d[q]));
    if (std::abs(d[q]) <= eps * r_norm) return false;
    active.push_back(ci);
    is_active[ci] = 1;
    return true;
  };

  auto drop_constraint = [&](Eigen::Index pos) {
    const auto q = static_cast<Eigen::Index>(active.size());
    is_active[active[static_cast<std::size_t>(pos)]] = 0;
    for (Eigen::Index k = pos; k + 1 < q; ++k) {
      R.col(k) = R.col(k + 1);
      u[k] = u[k + 1];
      active[static_cast<std::size_t>(k)] = active[static_cast<std::size_t>(k + 1)];
    }
    active.pop_back();
    R.col(q - 1).setZero();
    u[q - 1] = 0;
    const auto nq = q - 1;
    for (Eigen::Index j = pos; j < nq; ++j) {
      double c, s, h;
      detail::givens(R(j, j), R(j + 1, j), c, s, h);
      if (s == 0) continue;
      for (Eigen::Index k = j; k < nq; ++k) {
        const double a = R(j, k), b = R(j + 1, k);
        R(j, k) = c * a + s * b;
        R(j + 1, k) = -s * a + c * b;
      }
      R(j + 1, j) = 0;
      detail::rotate_columns(J, j, j + 1, c, s);
    }
  };

  QpSolution sol;
  int iterations = 0;
  bool infeasible = false;
  bool out_of_iterations = false;

  // Equality constraints.
  for (std::size_t ci = 0; ci < meq; ++ci) {
    const auto & c = cons[ci];
    const auto q = static_cast<Eigen::Index>(active.size());
    compute_step(c);
    const double ztn = detail::dot_sparse(c.normal, z);
    double t2 = 0;
    if (std::abs(ztn) > eps) t2 = (c.rhs - detail::dot_sparse(c.normal, x)) / ztn;
    x += t2 * z;
    u[q] = t2;
    if (q > 0) u.head(q) -= t2 * r.head(q);
    if (!add_constraint(ci)) {
      infeasible = true;
      break;
    }
  }

  auto feas_tol = [&](const Constraint & c) {
    return 1e-12 * std::max({1.0, std::abs(c.rhs), inf_norm(x)});
  };

  while (!infeasible) {
    if (++iterations > st.max_iter) {
      out_of_iterations = true;
      break;
    }
    // Most violated inactive inequality.
    std::size_t pick = total;
    double worst = 0;
    for (std::size_t ci = meq; ci < total; ++ci) {
      if (is_active[ci]) continue;
      const double s = detail::dot_sparse(cons[ci].normal, x) - cons[ci].rhs;
      if (s < -feas_tol(cons[ci]) && s < worst) {
        worst = s;
        pick = ci;
      }
    }
    if (pick == total) break;

    const Constraint & cp = cons[pick];
    double slack = worst;
    double u_plus = 0;
    for (;;) {
      compute_step(cp);
      const auto q = static_cast<Eigen::Index>(active.size());
      // Dual step length: the first active inequality whose multiplier hits zero.
      double t1 = std::numeric_limits<double>::infinity();
      Eigen::Index drop = -1;
      for (Eigen::Index k = static_cast<Eigen::Index>(meq); k < q; ++k) {
        if (r[k] > 0) {
          const double t = u[k] / r[k];
          if (t < t1) {
            t1 = t;
            drop = k;
          }
        }
      }
      const double ztn = detail::dot_sparse(cp.normal, z);
      const double z_norm = z.lpNorm<Eigen::Infinity>();
      double t2 = std::numeric_limits<double>::infinity();
      if (z_norm > eps * std::max(1.0, d.lpNorm<Eigen::Infinity>()) && ztn > 0) t2 = -slack / ztn;

      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        infeasible = true;
        break;
      }
      if (!std::isfinite(t2)) {
        // Pure dual step: move multipliers, drop the blocking constraint.
        if (q > 0) u.head(q) -= t1 * r.head(q);
        u_plus += t1;
        drop_constraint(drop);
        continue;
      }
      const double t = std::min(t1, t2);
      x += t * z;
      if (q > 0) u.head(q) -= t * r.head(q);
      u_plus += t;
      if (t2 <= t1) {
        u[q] = u_plus;
        if (!add_constraint(pick)) {
          u[q] = 0;
          infeasible = true;
        }
        break;
      }
      drop_constraint(drop);
      slack = detail::dot_sparse(cp.normal, x) - cp.rhs;
      if (slack >= -feas_tol(cp)) break;
      if (++iterations > st.max_iter) {
        out_of_iterations = true;
        break;
      }
    }
    if (out_of_iterations) break;
  }

  sol.z = x;
  sol.iterations = iterations;
  sol.lambda_in = Vector::Zero(m);
  sol.lambda_lb = Vector::Zero(n);
  sol.lambda_ub = Vector::Zero(n);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto & c = cons[active[k]];
    const double mult = u[static_cast<Eigen::Index>(k)];
    switch (c.kind) {
      case Constraint::Kind::Row: sol.lambda_in[c.index] = mult; break;
      case Constraint::Kind::Lower: sol.lambda_lb[c.index] = mult; break;
      case Constraint::Kind::Upper: sol.lambda_ub[c.index] = mult; break;
      case Constraint::Kind::Fixed:
        if (mult >= 0) sol.lambda_lb[c.index] = mult;
        else sol.lambda_ub[c.index] = -mult;
        break;
    }
  }
  sol.objective = 0.5 * x.dot(p.H * x) + p.g.dot(x);
  const KktReport rep = kkt_report(p, sol);
  sol.kkt_residual = rep.max();
  sol.infeasibility = rep.primal;
  if (infeasible) {
    sol.status = QpStatus::Infeasible;
  } else if (out_of_iterations) {
    sol.status = QpStatus::MaxIterations;
  } else {
    sol.status = sol.kkt_residual <= st.tol ? QpStatus::Optimal : QpStatus::MaxIterations;
  }
  return sol;
}

/// One-shot solve; factors p.H on every call.
inline QpSolution solve_qp(const QpProblem & p, double tol = 1e-8, int max_iter = 50000)
{
  p.validate();
  QpSettings st;
  st.tol = tol;
  st.max_iter = max_iter;
  return DenseQpSolver(p.H, st).solve(p, st);
}

/**
 * @brief Solve with a guessed support taken from an initial point z0.
 *
 * Variables with z0_j at a finite lower bound are fixed there and the QP is
 * solved over the remaining ones. Fixed variables whose bound multiplier comes
 * out negative are released and the reduced problem is solved again, so the
 * result satisfies the KKT conditions of the full problem. This pays off when
 * most bounds are active at the optimum (MPC plans are mostly zero). Falls back
 * to `full` (or a fresh solver) if the reduced problems do not certify.
 */
inline QpSolution solve_qp_warm(const QpProblem & p, const Vector & z0, const DenseQpSolver * full = nullptr,
                                const QpSettings & st = {})
{
  p.validate();
  const auto n = p.num_variables();
  const auto m = p.num_inequalities();
  require_dims(z0.size() == n, "solve_qp_warm: z0 must have length n");
  auto fallback = [&] { return full ? full->solve(p, st) : DenseQpSolver(p.H, st).solve(p, st); };

  std::vector<char> is_free(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) is_free[static_cast<std::size_t>(j)] = !std::isfinite(p.lb[j]) || z0[j] > p.lb[j];

  int total_iterations = 0;
  for (Eigen::Index round = 0; round <= n; ++round) {
    std::vector<Eigen::Index> fr;
    for (Eigen::Index j = 0; j < n; ++j)
      if (is_free[static_cast<std::size_t>(j)]) fr.push_back(j);
    const auto nf = static_cast<Eigen::Index>(fr.size());
    if (nf == n) return fallback();

    Vector z = p.lb;
    for (Eigen::Index j : fr) z[j] = 0;
    QpProblem r;
    r.H.resize(nf, nf);
    r.g.resize(nf);
    r.A_in.resize(m, nf);
    r.lb.resize(nf);
    r.ub.resize(nf);
    const Vector h_fixed = p.H * z;  // z holds only fixed values here
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index b = 0; b < nf; ++b) r.H(a, b) = p.H(fr[a], fr[b]);
      r.g[a] = p.g[fr[a]] + h_fixed[fr[a]];
      r.A_in.col(a) = p.A_in.col(fr[a]);
      r.lb[a] = p.lb[fr[a]];
      r.ub[a] = p.ub[fr[a]];
    }
    r.b_in = p.b_in - (m > 0 ? Vector(p.A_in * z) : Vector(0));

    QpSolution rs;
    if (nf == 0) {
      if (m > 0 && r.b_in.minCoeff() < -st.tol) return fallback();
      rs.z = Vector(0);
      rs.lambda_in = Vector::Zero(m);
      rs.lambda_lb = rs.lambda_ub = Vector(0);
    } else {
      rs = DenseQpSolver(r.H, st).solve(r, st);
      total_iterations += rs.iterations;
      if (rs.status != QpStatus::Optimal) return fallback();
    }

    QpSolution sol;
    for (Eigen::Index a = 0; a < nf; ++a) z[fr[a]] = rs.z[a];
    sol.z = z;
    sol.lambda_in = rs.lambda_in;
    sol.lambda_lb = Vector::Zero(n);
    sol.lambda_ub = Vector::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a) {
      sol.lambda_lb[fr[a]] = rs.lambda_lb[a];
      sol.lambda_ub[fr[a]] = rs.lambda_ub[a];
    }
    Vector grad = p.H * z + p.g;
    if (m > 0) grad += p.A_in.transpose() * sol.lambda_in;
    bool released = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (is_free[static_cast<std::size_t>(j)]) continue;
      sol.lambda_lb[j] = std::max(0.0, grad[j]);
      if (grad[j] < -st.tol) {
        is_free[static_cast<std::size_t>(j)] = 1;
        released = true;
      }
    }
    if (released) continue;

    sol.iterations = total_iterations;
    sol.objective = 0.5 * z.dot(p.H * z) + p.g.dot(z);
    const KktReport rep = kkt_report(p, sol);
    sol.kkt_residual = rep.max();
    sol.infeasibility = rep.primal;
    if (sol.kkt_residual > st.tol) return fallback();
    sol.status = QpStatus::Optimal;
    return sol;
  }
  return fallback();
}

}  // namespace nudgesim
