#pragma once

/**
 * @file
 * @brief Dense linear-algebra kernels: linear solves, spectral radius and the
 * discrete Lyapunov equation.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "error.hpp"

namespace nudgesim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerances shared by the numerical kernels.
struct Tolerances
{
  /// LU pivots below this magnitude flag a singular system
  double pivot = 1e-12;
  /// Lyapunov series stops once the increment infinity-norm drops below this
  double lyapunov_increment = 1e-12;
  /// cap on doubling steps of the Lyapunov series (2^cap terms)
  int lyapunov_max_doublings = 64;
  /// default accuracy requested from spectral_radius
  double spectral = 1e-10;
};

inline bool all_finite(const Matrix & m) { return m.allFinite(); }

inline double inf_norm(const Vector & v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Induced infinity norm (max absolute row sum).
inline double inf_norm(const Matrix & m)
{
  return m.size() ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
}

/**
 * @brief Solve A z = b with partial-pivoting LU.
 *
 * Throws SingularMatrix when a pivot of the factorization falls below
 * `tol.pivot` in magnitude.
 */
inline Matrix solve_linear(const Matrix & a, const Matrix & b, const Tolerances & tol = {})
{
  require_dims(a.rows() == a.cols(), "solve_linear: matrix must be square");
  require_dims(b.rows() == a.rows(), "solve_linear: rhs length must equal matrix rows");
  if (a.rows() == 0) return Matrix(0, b.cols());

  const Eigen::PartialPivLU<Matrix> lu(a);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(min_pivot >= tol.pivot)) {
    throw Error(Errc::SingularMatrix, "pivot magnitude " + std::to_string(min_pivot) + " below threshold");
  }
  return lu.solve(b);
}

template <typename Rhs>
  requires(Rhs::ColsAtCompileTime == 1)
inline Vector solve_linear(const Matrix & a, const Eigen::MatrixBase<Rhs> & b, const Tolerances & tol = {})
{
  return solve_linear(a, Matrix(b), tol).col(0);
}

/// Spectral radius max |eig(A)|, computed from the real Schur form.
inline double spectral_radius(const Matrix & a, double tol = Tolerances{}.spectral)
{
  require_dims(a.rows() == a.cols(), "spectral_radius: matrix must be square");
  if (!(tol > 0)) throw Error(Errc::InvalidArgument, "spectral_radius: tol must be positive");
  if (a.rows() == 0) return 0.0;

  Eigen::EigenSolver<Matrix> es(a, /* computeEigenvectors = */ false);
  if (es.info() != Eigen::Success) {
    throw Error(Errc::NoConvergence, "spectral_radius: eigenvalue iteration did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/**
 * @brief Solve A^T Q A - Q = -I for symmetric Q.
 *
 * Sums Q = sum_k (A^T)^k A^k by repeated doubling: Q <- Q + B^T Q B, B <- B^2.
 * After j doublings Q holds the first 2^j terms of the series.
 */
inline Matrix solve_discrete_lyapunov(const Matrix & a, const Tolerances & tol = {})
{
  require_dims(a.rows() == a.cols(), "solve_discrete_lyapunov: matrix must be square");
  const auto n = a.rows();
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    throw Error(Errc::UnstableMatrix, "spectral radius " + std::to_string(rho) + " >= 1");
  }

  Matrix q = Matrix::Identity(n, n);
  Matrix b = a;
  for (int j = 0; j < tol.lyapunov_max_doublings; ++j) {
    const Matrix increment = b.transpose() * q * b;
    q += increment;
    q = 0.5 * (q + q.transpose()).eval();
    if (inf_norm(increment) < tol.lyapunov_increment) return q;
    b = (b * b).eval();
  }
  throw Error(Errc::NoConvergence, "Lyapunov series did not reach the increment threshold");
}

}  // namespace nudgesim
