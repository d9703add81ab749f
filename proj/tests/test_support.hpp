#pragma once

// Test-only oracles. Nothing here calls into the library's solvers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#include "nudgesim/qp.hpp"

namespace testing_support {

using nudgesim::Matrix;
using nudgesim::Vector;

inline Matrix random_matrix(std::mt19937_64 & rng, int rows, int cols, double lo = -1, double hi = 1)
{
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

/// Roots of a monic polynomial x^n + c[n-1] x^{n-1} + ... + c[0] by Durand-Kerner.
inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double> & c)
{
  const std::size_t n = c.size();
  auto eval = [&](std::complex<double> x) {
    std::complex<double> v = 1.0;
    for (std::size_t k = n; k-- > 0;) v = v * x + c[k];
    return v;
  };
  std::vector<std::complex<double>> roots(n);
  const std::complex<double> seed(0.4, 0.9);
  for (std::size_t i = 0; i < n; ++i) roots[i] = std::pow(seed, static_cast<double>(i));
  for (int it = 0; it < 2000; ++it) {
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> denom = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) denom *= roots[i] - roots[j];
      const auto delta = eval(roots[i]) / denom;
      roots[i] -= delta;
      change = std::max(change, std::abs(delta));
    }
    if (change < 1e-15) break;
  }
  return roots;
}

/// Spectral radius from the characteristic polynomial (n = 2 or 3).
inline double spectral_radius_charpoly(const Matrix & a)
{
  std::vector<double> c;
  if (a.rows() == 2) {
    c = {a.determinant(), -a.trace()};
  } else {
    const double c2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0) +
                      a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    c = {-a.determinant(), c2, -a.trace()};
  }
  double rho = 0;
  for (const auto & r : polynomial_roots(c)) rho = std::max(rho, std::abs(r));
  return rho;
}

/// Independent KKT check of (z, multipliers) against the raw problem data.
inline double kkt_residual_check(const nudgesim::QpProblem & p, const nudgesim::QpSolution & s)
{
  const auto n = p.g.size();
  double worst = 0;
  Vector grad = p.H * s.z + p.g;
  for (int i = 0; i < p.b_in.size(); ++i) {
    double ai_z = 0;
    for (int j = 0; j < n; ++j) {
      ai_z += p.A_in(i, j) * s.z[j];
      grad[j] += p.A_in(i, j) * s.lambda_in[i];
    }
    const double slack = p.b_in[i] - ai_z;
    worst = std::max({worst, -slack, -s.lambda_in[i], std::abs(slack * s.lambda_in[i])});
  }
  for (int j = 0; j < n; ++j) {
    grad[j] += s.lambda_ub[j] - s.lambda_lb[j];
    worst = std::max({worst, -s.lambda_lb[j], -s.lambda_ub[j]});
    if (std::isfinite(p.lb[j])) {
      const double slack = s.z[j] - p.lb[j];
      worst = std::max({worst, -slack, std::abs(slack * s.lambda_lb[j])});
    } else if (s.lambda_lb[j] != 0) {
      return std::numeric_limits<double>::infinity();
    }
    if (std::isfinite(p.ub[j])) {
      const double slack = p.ub[j] - s.z[j];
      worst = std::max({worst, -slack, std::abs(slack * s.lambda_ub[j])});
    } else if (s.lambda_ub[j] != 0) {
      return std::numeric_limits<double>::infinity();
    }
  }
  for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(grad[j]));
  return worst;
}

/// Random strictly convex QP with n, m <= 3 whose feasible set contains a ball
/// of radius >= 0.1 inside the box [-1, 1]^n.
///
/// With `grid_aligned`, constraint normals have entries in {-1, 0, 1} and the
/// right-hand sides sit on the 1e-3 lattice, so every constraint face carries
/// grid points and a 1e-3 grid search can resolve the argmin on it.
inline nudgesim::QpProblem random_small_qp(std::mt19937_64 & rng, int n, int m, bool grid_aligned = true)
{
  std::uniform_real_distribution<double> unit(-1, 1);
  std::uniform_int_distribution<int> tri(-1, 1);
  nudgesim::QpProblem p;
  const Matrix b = random_matrix(rng, n, n);
  p.H = b.transpose() * b + 0.5 * Matrix::Identity(n, n);
  p.g = 2.0 * random_matrix(rng, n, 1);
  Vector center(n);
  for (int j = 0; j < n; ++j) center[j] = 0.5 * unit(rng);
  p.lb = Vector::Constant(n, -1.0);
  p.ub = Vector::Constant(n, 1.0);
  p.A_in.resize(m, n);
  p.b_in.resize(m);
  for (int i = 0; i < m; ++i) {
    do {
      for (int j = 0; j < n; ++j) p.A_in(i, j) = grid_aligned ? tri(rng) : unit(rng);
    } while (p.A_in.row(i).norm() < 0.5);
    const double norm = p.A_in.row(i).norm();
    p.b_in[i] = p.A_in.row(i).dot(center) + norm * (0.1 + 0.4 * std::abs(unit(rng)));
    if (grid_aligned) p.b_in[i] = std::round(p.b_in[i] * 1000.0) / 1000.0;
  }
  return p;
}

/// Exact minimizer by enumerating every candidate active set of at most n
/// constraints and solving its KKT system directly.
inline Vector enumerate_qp(const nudgesim::QpProblem & p)
{
  const int n = static_cast<int>(p.g.size());
  std::vector<Vector> normals;
  std::vector<double> rhs;  // rows as a^T z <= b
  for (int i = 0; i < p.b_in.size(); ++i) {
    normals.push_back(p.A_in.row(i).transpose());
    rhs.push_back(p.b_in[i]);
  }
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(p.ub[j])) {
      normals.push_back(Vector::Unit(n, j));
      rhs.push_back(p.ub[j]);
    }
    if (std::isfinite(p.lb[j])) {
      normals.push_back(-Vector::Unit(n, j));
      rhs.push_back(-p.lb[j]);
    }
  }
  const int total = static_cast<int>(normals.size());
  Vector best;
  double best_f = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << total); ++mask) {
    std::vector<int> act;
    for (int k = 0; k < total; ++k)
      if (mask & (1 << k)) act.push_back(k);
    if (static_cast<int>(act.size()) > n) continue;
    const int q = static_cast<int>(act.size());
    Matrix kkt = Matrix::Zero(n + q, n + q);
    Vector r(n + q);
    kkt.topLeftCorner(n, n) = p.H;
    r.head(n) = -p.g;
    for (int k = 0; k < q; ++k) {
      kkt.block(0, n + k, n, 1) = normals[act[k]];
      kkt.block(n + k, 0, 1, n) = normals[act[k]].transpose();
      r[n + k] = rhs[act[k]];
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (lu.rank() < n + q) continue;
    const Vector sol = lu.solve(r);
    const Vector z = sol.head(n);
    bool ok = true;
    for (int k = 0; k < q; ++k) ok = ok && sol[n + k] >= -1e-12;
    for (int k = 0; k < total; ++k) ok = ok && normals[k].dot(z) <= rhs[k] + 1e-12;
    if (!ok) continue;
    const double f = 0.5 * z.dot(p.H * z) + p.g.dot(z);
    if (f < best_f) {
      best_f = f;
      best = z;
    }
  }
  return best;
}

/// Grid search: coarse pass at 0.02 over the box, then windows at 0.005 and 1e-3.
inline Vector brute_force_qp(const nudgesim::QpProblem & p)
{
  const int n = static_cast<int>(p.g.size());
  // Lattice points that lie exactly on a face must count as feasible even when
  // round-off puts a_i'z a few ulps above b_i; otherwise the search is pushed a
  // full step inside every active face.
  constexpr double slack = 1e-9;
  auto feasible = [&](const Vector & z) {
    for (int i = 0; i < p.b_in.size(); ++i)
      if (p.A_in.row(i).dot(z) > p.b_in[i] + slack) return false;
    for (int j = 0; j < n; ++j)
      if (z[j] < p.lb[j] - slack || z[j] > p.ub[j] + slack) return false;
    return true;
  };
  auto objective = [&](const Vector & z) { return 0.5 * z.dot(p.H * z) + p.g.dot(z); };

  auto search = [&](const Vector & lo, const Vector & hi, double step) {
    std::vector<int> counts(n);
    for (int j = 0; j < n; ++j) counts[j] = static_cast<int>(std::floor((hi[j] - lo[j]) / step + 1e-9)) + 1;
    Vector best = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<int> idx(n, 0);
    Vector z(n);
    for (;;) {
      for (int j = 0; j < n; ++j) z[j] = lo[j] + step * idx[j];
      if (feasible(z)) {
        const double f = objective(z);
        if (f < best_f) {
          best_f = f;
          best = z;
        }
      }
      int j = 0;
      while (j < n && ++idx[j] == counts[j]) idx[j++] = 0;
      if (j == n) break;
    }
    return best;
  };

  // Re-center windows on the incumbent until it stops moving, so the search can
  // slide along a constraint boundary past the coarse cell.
  auto refine = [&](Vector best, double radius, double step) {
    for (int pass = 0; pass < 200; ++pass) {
      const Vector lo = (best.array() - radius).max(p.lb.array()).matrix();
      const Vector hi = (best.array() + radius).min(p.ub.array()).matrix();
      const Vector next = search(lo, hi, step);
      if ((next - best).lpNorm<Eigen::Infinity>() < 0.5 * step) return next;
      best = next;
    }
    return best;
  };
  Vector best = search(p.lb, p.ub, 0.02);
  best = refine(best, 0.06, 0.005);
  return refine(best, 0.03, 1e-3);
}

}  // namespace testing_support
