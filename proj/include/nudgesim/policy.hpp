#pragma once

/**
 * @file
 * @brief Budget accounting and the intervention policies: constant, saturated
 * feedback, optimized constant control (CCP) and receding-horizon MPC.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "dynamics.hpp"
#include "error.hpp"
#include "network.hpp"
#include "numerics.hpp"
#include "qp.hpp"

namespace nudgesim {

/// Total budget beta and cumulative spend.
struct Budget
{
  double beta = 0;
  double spent = 0;

  double remaining() const { return std::max(0.0, beta - spent); }
  void spend(const Vector & u_c) { spent += u_c.sum(); }
};

inline double budget_remaining(const Budget & b) { return b.remaining(); }

/// Clip an action to the reservoir envelope u + u_c <= 1 - delta, to
/// nonnegative values, then scale it down uniformly to fit the remaining budget.
inline Vector enforce_feasibility(Vector u_c, const Vector & u_now, const Budget & budget, double delta)
{
  require_dims(u_c.size() == u_now.size(), "enforce_feasibility: dimension mismatch");
  const Vector room = ((1.0 - delta) - u_now.array()).max(0.0).matrix();
  u_c = u_c.cwiseMax(0.0).cwiseMin(room);
  const double total = u_c.sum();
  const double available = budget.remaining();
  if (total > available) u_c *= total > 0 ? available / total : 0.0;
  return u_c;
}

// ---------------------------------------------------------------------------
// Constant policy

struct ConstantPolicy
{
  Vector nu;          ///< baseline per-agent intervention
  int horizon_T = 1;  ///< number of steps nu is enacted

  void validate() const
  {
    if (horizon_T < 1) throw Error(Errc::InvalidArgument, "constant policy horizon must be >= 1");
    if ((nu.array() < 0).any()) throw Error(Errc::InvalidArgument, "constant policy nu must be nonnegative");
  }
};

/**
 * @brief One step of the constant policy.
 *
 * Full nu while the budget covers it, nu scaled to the remaining budget when it
 * does not, zero once the budget is exhausted. Components that would push the
 * reservoir above 1 - delta are truncated to the remaining room.
 */
inline Vector constant_action(const ConstantPolicy & p, const Vector & u_now, const Budget & b, double delta)
{
  require_dims(p.nu.size() == u_now.size(), "constant_action: dimension mismatch");
  const double remaining = b.remaining();
  const double total = p.nu.sum();
  Vector action = Vector::Zero(p.nu.size());
  if (total <= 0 || remaining <= 0) return action;
  action = remaining >= total ? p.nu : Vector(p.nu * (remaining / total));
  const Vector room = ((1.0 - delta) - u_now.array()).max(0.0).matrix();
  return action.cwiseMin(room);
}

/// The remainder step taken right after the policy horizon: nu rescaled to
/// deplete what is left of the budget in one step, within the envelope.
inline Vector constant_remainder_action(const ConstantPolicy & p, const Vector & u_now, const Budget & b, double delta)
{
  require_dims(p.nu.size() == u_now.size(), "constant_remainder_action: dimension mismatch");
  const double total = p.nu.sum();
  if (total <= 0 || b.remaining() <= 0) return Vector::Zero(p.nu.size());
  const Vector room = ((1.0 - delta) - u_now.array()).max(0.0).matrix();
  return Vector(p.nu * (b.remaining() / total)).cwiseMin(room);
}

/// Constant policy schedule: nu for t < T, the remainder step at t = T, zero afterwards.
inline Vector constant_schedule_action(const ConstantPolicy & p, int t, const Vector & u_now, const Budget & b, double delta)
{
  if (t < p.horizon_T) return constant_action(p, u_now, b, delta);
  if (t == p.horizon_T) return constant_remainder_action(p, u_now, b, delta);
  return Vector::Zero(u_now.size());
}

// ---------------------------------------------------------------------------
// Feedback policy

/// Saturated static feedback u_c = K (1 - mu).
class FeedbackPolicy
{
public:
  /// Rejects gains with rho(Lambda P - (I - Lambda) K) >= 1 and bounds outside 0 <= min <= max.
  FeedbackPolicy(const InfluenceNetwork & net, Matrix gain, Vector u_c_min, Vector u_c_max)
      : gain_(std::move(gain)), min_(std::move(u_c_min)), max_(std::move(u_c_max))
  {
    const auto n = net.size();
    require_dims(gain_.rows() == n && gain_.cols() == n, "feedback gain must be N x N");
    require_dims(min_.size() == n && max_.size() == n, "feedback bounds must have length N");
    if ((min_.array() < 0).any() || (min_.array() > max_.array()).any()) {
      throw Error(Errc::InvalidArgument, "feedback bounds must satisfy 0 <= u_c_min <= u_c_max");
    }
    closed_loop_radius_ = spectral_radius(closed_loop_matrix(net, gain_));
    if (!(closed_loop_radius_ < 1.0)) {
      throw Error(Errc::InvalidArgument,
                  "feedback gain rejected: closed-loop spectral radius " + std::to_string(closed_loop_radius_) + " >= 1");
    }
  }

  static Matrix closed_loop_matrix(const InfluenceNetwork & net, const Matrix & gain)
  {
    return net.social_matrix() - net.bias_weight().asDiagonal() * gain;
  }

  /// Largest kappa in {1, 1/2, 1/4, ...} such that K = kappa I is admissible.
  static double default_kappa(const InfluenceNetwork & net)
  {
    const auto n = net.size();
    for (double kappa = 1.0; kappa > 1e-6; kappa *= 0.5) {
      if (spectral_radius(closed_loop_matrix(net, kappa * Matrix::Identity(n, n))) < 1.0) return kappa;
    }
    throw Error(Errc::InvalidArgument, "no admissible kappa * I feedback gain found");
  }

  const Matrix & gain() const { return gain_; }
  const Vector & lower() const { return min_; }
  const Vector & upper() const { return max_; }
  double closed_loop_radius() const { return closed_loop_radius_; }

private:
  Matrix gain_;
  Vector min_, max_;
  double closed_loop_radius_ = 0;
};

/// K (1 - mu), clamped to [u_c_min, u_c_max] and to nonnegative values, then
/// scaled down uniformly when it exceeds the remaining budget.
inline Vector feedback_action(const FeedbackPolicy & p, const Vector & mu_estimate, const Budget & b)
{
  require_dims(mu_estimate.size() == p.gain().rows(), "feedback_action: dimension mismatch");
  Vector action = p.gain() * (Vector::Ones(mu_estimate.size()) - mu_estimate);
  action = action.cwiseMax(p.lower()).cwiseMin(p.upper()).cwiseMax(0.0);
  const double total = action.sum();
  const double remaining = b.remaining();
  if (total > remaining) action *= total > 0 ? remaining / total : 0.0;
  return action;
}

// ---------------------------------------------------------------------------
// Optimized constant control

struct CcpPolicy
{
  int horizon_T = 1;
  Matrix R;
  double S = 0;
  Vector solved_u;      ///< constant intervention enacted for t < T
  Vector predicted_mu;  ///< asymptotic mean inclinations under solved_u
  double objective = 0; ///< full cost including constant terms
  QpSolution qp;
};

/**
 * @brief Design the optimized constant intervention.
 *
 * With G = (I - Lambda P)^{-1} (I - Lambda) and mu_inf = G (u_o + T u), minimizes
 *
 *   |1 - mu_inf|^2 + |T u|_R^2 + S (beta - T 1^T u)^2
 *
 * subject to u >= 0, T 1^T u <= beta and u_o + T u <= 1 - delta.
 */
inline CcpPolicy design_ccp(const InfluenceNetwork & net, const Vector & u_o, double beta, int T, const Matrix & R, double S,
                            double delta)
{
  const auto n = net.size();
  require_dims(u_o.size() == n, "design_ccp: u_o length must equal N");
  require_dims(R.rows() == n && R.cols() == n, "design_ccp: R must be N x N");
  if (T < 1) throw Error(Errc::InvalidArgument, "design_ccp: T must be >= 1");
  if (!(S >= 0)) throw Error(Errc::InvalidArgument, "design_ccp: S must be >= 0");
  if (!(beta >= 0)) throw Error(Errc::InvalidArgument, "design_ccp: beta must be >= 0");

  const Matrix gain = steady_state_gain(net);
  const Vector m0 = gain * u_o;
  const Vector residual0 = Vector::Ones(n) - m0;
  const double t = T;
  const Matrix ones = Matrix::Ones(n, n);

  QpProblem p;
  p.H = 2.0 * t * t * (gain.transpose() * gain + R + S * ones);
  p.g = -2.0 * t * (gain.transpose() * residual0) - 2.0 * S * beta * t * Vector::Ones(n);
  p.A_in = Matrix::Constant(1, n, t);
  p.b_in = Vector::Constant(1, beta);
  p.lb = Vector::Zero(n);
  p.ub = (((1.0 - delta) - u_o.array()).max(0.0) / t).matrix();

  CcpPolicy policy;
  policy.horizon_T = T;
  policy.R = R;
  policy.S = S;
  policy.qp = solve_qp(p);
  if (policy.qp.status != QpStatus::Optimal) {
    throw Error(Errc::SolverFailure, std::string("design_ccp: QP status ") + to_string(policy.qp.status));
  }
  policy.solved_u = policy.qp.z.cwiseMax(0.0).cwiseMin(p.ub);
  // the solver may overshoot the budget row by round-off; pull back onto it exactly
  const double spend = t * policy.solved_u.sum();
  if (spend > beta) policy.solved_u *= beta / spend;
  policy.predicted_mu = m0 + t * gain * policy.solved_u;
  policy.objective = policy.qp.objective + residual0.squaredNorm() + S * beta * beta;
  return policy;
}

/// Cost |1 - mu_inf|^2 + |T u|_R^2 + S (beta - T sum u)^2 evaluated directly.
inline double ccp_cost(const InfluenceNetwork & net, const Vector & u_o, double beta, int T, const Matrix & R, double S,
                       const Vector & u)
{
  const Vector mu = steady_state(net, u_o + T * u);
  const Vector tu = T * u;
  const double spend = beta - tu.sum();
  return (Vector::Ones(net.size()) - mu).squaredNorm() + tu.dot(R * tu) + S * spend * spend;
}

inline Vector ccp_schedule_action(const CcpPolicy & p, int t)
{
  if (t < p.horizon_T) return p.solved_u;
  return Vector::Zero(p.solved_u.size());
}

// ---------------------------------------------------------------------------
// Receding-horizon MPC

/// Which predicted state carries the terminal weight Q.
enum class TerminalIndex { AtL, AtLMinus1 };

/// How the spend over the prediction horizon is limited by the remaining budget U.
///  - Paper: cum(0) <= U and cum(k) <= U - cum(k-1) for k = 1..L-1
///  - Total: cum(L-1) <= U
/// where cum(k) is the planned spend over steps 0..k.
enum class BudgetConstraint { Paper, Total };

/// Prediction model used by the controller.
enum class PredictionModel { LongTerm, ShortTerm };

struct MpcSettings
{
  int horizon = 5;
  Matrix R;  ///< N x N input weight, positive definite
  TerminalIndex terminal = TerminalIndex::AtL;
  BudgetConstraint budget_constraint = BudgetConstraint::Paper;
  PredictionModel model = PredictionModel::LongTerm;
};

struct MpcPlan
{
  Matrix controls;   ///< N x L, column k is the planned u_c(k)
  Matrix predicted;  ///< N x (L+1), column k is the predicted mean inclination mu(k)
  Vector first;      ///< applied action (first column, clipped to feasibility)
  double cost = 0;   ///< predicted cost including constant terms
  QpSolution qp;
};

/**
 * @brief Condensed receding-horizon controller.
 *
 * Long-term prediction (reservoir accumulates):
 *
 *   mu(0)   = Lambda P mu_now + (I - Lambda) u_now         (next state, fixed by the current reservoir)
 *   mu(k+1) = Lambda P mu(k)  + (I - Lambda) (u_now + sum_{j<=k} u_c(j))
 *
 * Short-term prediction (interventions act once):
 *
 *   mu(0)   = mu_now
 *   mu(k+1) = Lambda P mu(k) + (I - Lambda) (u_o + u_c(k))
 *
 * Both give mu(k) = F(k) + sum_j Gamma(k, j) u_c(j). The cost
 *
 *   sum_{k<L} |1 - mu(k)|^2 + |u_c(k)|_R^2 + |1 - mu(k_T)|_Q^2,  k_T in {L, L-1}
 *
 * with (Lambda P)^T Q (Lambda P) - Q = -I is condensed to a QP over the N L
 * stacked controls. The Hessian and constraint matrix do not depend on the
 * current state, so they are built and factored once.
 */
class MpcPolicy
{
public:
  MpcPolicy(const InfluenceNetwork & net, MpcSettings settings, const Vector & u_o)
      : settings_(std::move(settings)), u_o_(u_o), n_(net.size()), L_(settings_.horizon)
  {
    if (L_ < 1) throw Error(Errc::InvalidArgument, "MPC horizon must be >= 1");
    require_dims(settings_.R.rows() == n_ && settings_.R.cols() == n_, "MPC: R must be N x N");
    require_dims(u_o_.size() == n_, "MPC: u_o length must equal N");

    a_ = net.social_matrix();
    b_ = net.bias_weight();
    Q_ = solve_discrete_lyapunov(a_);

    const Eigen::Index nv = n_ * L_;
    // powers_[m] = A^m, m = 0..L
    std::vector<Matrix> powers(static_cast<std::size_t>(L_ + 1));
    powers[0] = Matrix::Identity(n_, n_);
    for (int m = 1; m <= L_; ++m) powers[static_cast<std::size_t>(m)] = a_ * powers[static_cast<std::size_t>(m - 1)];
    // sums_[m] = sum_{i=0}^{m} A^i
    sums_.resize(static_cast<std::size_t>(L_ + 1));
    sums_[0] = powers[0];
    for (int m = 1; m <= L_; ++m) sums_[static_cast<std::size_t>(m)] = sums_[static_cast<std::size_t>(m - 1)] + powers[static_cast<std::size_t>(m)];
    powers_ = std::move(powers);

    // Gamma: rows stack mu(0..L), columns stack u_c(0..L-1).
    gamma_ = Matrix::Zero(n_ * (L_ + 1), nv);
    for (int k = 1; k <= L_; ++k) {
      for (int j = 0; j < k; ++j) {
        const int m = k - 1 - j;
        const Matrix & block = settings_.model == PredictionModel::LongTerm ? sums_[static_cast<std::size_t>(m)] : powers_[static_cast<std::size_t>(m)];
        gamma_.block(k * n_, j * n_, n_, n_) = block * b_.asDiagonal();
      }
    }

    // Stage weights: I on mu(0..L-1), plus Q on the terminal state.
    weights_.assign(static_cast<std::size_t>(L_ + 1), Matrix::Zero(n_, n_));
    for (int k = 0; k < L_; ++k) weights_[static_cast<std::size_t>(k)] = Matrix::Identity(n_, n_);
    weights_[static_cast<std::size_t>(terminal_step())] += Q_;

    Matrix weighted_gamma(gamma_.rows(), nv);
    for (int k = 0; k <= L_; ++k) {
      weighted_gamma.middleRows(k * n_, n_) = weights_[static_cast<std::size_t>(k)] * gamma_.middleRows(k * n_, n_);
    }
    weighted_gamma_t_ = weighted_gamma.transpose();
    Matrix h = gamma_.transpose() * weighted_gamma;
    for (int k = 0; k < L_; ++k) h.block(k * n_, k * n_, n_, n_) += settings_.R;
    h *= 2.0;
    hessian_ = 0.5 * (h + h.transpose());
    solver_ = std::make_shared<const DenseQpSolver>(hessian_);

    build_constraints();
  }

  const MpcSettings & settings() const { return settings_; }
  const Matrix & terminal_weight() const { return Q_; }
  const Matrix & hessian() const { return hessian_; }
  int terminal_step() const { return settings_.terminal == TerminalIndex::AtL ? L_ : L_ - 1; }

  /// Free response F(k), k = 0..L, stacked.
  Vector free_response(const Vector & mu_now, const Vector & u_now) const
  {
    Vector f(n_ * (L_ + 1));
    if (settings_.model == PredictionModel::LongTerm) {
      const Vector m0 = a_ * mu_now + b_.cwiseProduct(u_now);
      const Vector bu = b_.cwiseProduct(u_now);
      for (int k = 0; k <= L_; ++k) {
        Vector fk = powers_[static_cast<std::size_t>(k)] * m0;
        if (k >= 1) fk += sums_[static_cast<std::size_t>(k - 1)] * bu;
        f.segment(k * n_, n_) = fk;
      }
    } else {
      const Vector bu = b_.cwiseProduct(u_o_);
      for (int k = 0; k <= L_; ++k) {
        Vector fk = powers_[static_cast<std::size_t>(k)] * mu_now;
        if (k >= 1) fk += sums_[static_cast<std::size_t>(k - 1)] * bu;
        f.segment(k * n_, n_) = fk;
      }
    }
    return f;
  }

  /// Build the QP for the current state and remaining budget.
  QpProblem problem(const Vector & mu_now, const Vector & u_now, double remaining, double delta) const
  {
    require_dims(mu_now.size() == n_ && u_now.size() == n_, "MPC: state dimension mismatch");
    const Vector target = Vector::Ones(n_ * (L_ + 1)) - free_response(mu_now, u_now);
    QpProblem p;
    p.H = hessian_;
    p.g = -2.0 * (weighted_gamma_t_ * target);
    p.A_in = a_in_;
    p.b_in.resize(a_in_.rows());
    const double budget = std::max(0.0, remaining);
    Eigen::Index row = 0;
    if (settings_.model == PredictionModel::LongTerm) {
      for (Eigen::Index v = 0; v < n_; ++v) p.b_in[row++] = std::max(0.0, (1.0 - delta) - u_now[v]);
    }
    for (; row < a_in_.rows(); ++row) p.b_in[row] = budget;
    p.lb = Vector::Zero(n_ * L_);
    if (settings_.model == PredictionModel::LongTerm) {
      p.ub = Vector::Constant(n_ * L_, std::numeric_limits<double>::infinity());
    } else {
      const Vector room = ((1.0 - delta) - u_o_.array()).max(0.0).matrix();
      p.ub = room.replicate(L_, 1);
    }
    return p;
  }

  /// Solve the receding-horizon problem. `warm` (stacked controls, N L) seeds the
  /// support guess of the QP; zero when absent. See shifted_warm_start.
  MpcPlan plan(const Vector & mu_now, const Vector & u_now, const Budget & budget, double delta,
               const Vector * warm = nullptr) const
  {
    const QpProblem p = problem(mu_now, u_now, budget.remaining(), delta);
    MpcPlan out;
    out.qp = solve_qp_warm(p, warm ? *warm : Vector::Zero(n_ * L_), solver_.get());
    if (out.qp.status != QpStatus::Optimal) {
      throw Error(Errc::SolverFailure, std::string("MPC QP status ") + to_string(out.qp.status) +
                                           ", KKT residual " + std::to_string(out.qp.kkt_residual));
    }
    const Vector z = out.qp.z.cwiseMax(0.0);
    out.controls = Eigen::Map<const Matrix>(z.data(), n_, L_);
    const Vector mu = free_response(mu_now, u_now) + gamma_ * z;
    out.predicted = Eigen::Map<const Matrix>(mu.data(), n_, L_ + 1);
    const Vector target = Vector::Ones(n_ * (L_ + 1)) - free_response(mu_now, u_now);
    double constant = 0;
    for (int k = 0; k <= L_; ++k) {
      const Vector r = target.segment(k * n_, n_);
      constant += r.dot(weights_[static_cast<std::size_t>(k)] * r);
    }
    out.cost = out.qp.objective + constant;
    const Vector reservoir = settings_.model == PredictionModel::LongTerm ? u_now : u_o_;
    out.first = enforce_feasibility(out.controls.col(0), reservoir, budget, delta);
    return out;
  }

  /// Previous plan advanced by one step, last block zero: the natural guess for the next solve.
  Vector shifted_warm_start(const MpcPlan & previous) const
  {
    Vector z = Vector::Zero(n_ * L_);
    if (L_ > 1) z.head(n_ * (L_ - 1)) = Eigen::Map<const Vector>(previous.controls.data() + n_, n_ * (L_ - 1));
    return z;
  }

  /// Predicted cost of an arbitrary control sequence (N x L), evaluated by simulation.
  double cost_of(const Vector & mu_now, const Vector & u_now, const Matrix & controls) const
  {
    Matrix mu(n_, L_ + 1);
    if (settings_.model == PredictionModel::LongTerm) {
      mu.col(0) = a_ * mu_now + b_.cwiseProduct(u_now);
      Vector u = u_now;
      for (int k = 0; k < L_; ++k) {
        u += controls.col(k);
        mu.col(k + 1) = a_ * mu.col(k) + b_.cwiseProduct(u);
      }
    } else {
      mu.col(0) = mu_now;
      for (int k = 0; k < L_; ++k) mu.col(k + 1) = a_ * mu.col(k) + b_.cwiseProduct(u_o_ + controls.col(k));
    }
    double cost = 0;
    for (int k = 0; k < L_; ++k) {
      cost += (Vector::Ones(n_) - mu.col(k)).squaredNorm();
      cost += controls.col(k).dot(settings_.R * controls.col(k));
    }
    const Vector e = Vector::Ones(n_) - mu.col(terminal_step());
    return cost + e.dot(Q_ * e);
  }

private:
  void build_constraints()
  {
    const Eigen::Index nv = n_ * L_;
    std::vector<Vector> rows;
    if (settings_.model == PredictionModel::LongTerm) {
      // Reservoir after the horizon: u_now + sum_k u_c(k) <= 1 - delta (nonnegative
      // controls make this imply the bound at every intermediate step).
      for (Eigen::Index v = 0; v < n_; ++v) {
        Vector r = Vector::Zero(nv);
        for (int k = 0; k < L_; ++k) r[k * n_ + v] = 1.0;
        rows.push_back(r);
      }
    }
    auto cumulative = [&](int k) {
      Vector r = Vector::Zero(nv);
      r.head((k + 1) * n_).setOnes();
      return r;
    };
    if (settings_.budget_constraint == BudgetConstraint::Total) {
      rows.push_back(cumulative(L_ - 1));
    } else {
      rows.push_back(cumulative(0));
      for (int k = 1; k < L_; ++k) rows.push_back(cumulative(k) + cumulative(k - 1));
    }
    a_in_.resize(static_cast<Eigen::Index>(rows.size()), nv);
    for (std::size_t i = 0; i < rows.size(); ++i) a_in_.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }

  MpcSettings settings_;
  Vector u_o_;
  Eigen::Index n_;
  int L_;
  Matrix a_;
  Vector b_;
  Matrix Q_;
  std::vector<Matrix> powers_, sums_, weights_;
  Matrix gamma_;
  Matrix weighted_gamma_t_;
  Matrix hessian_;
  Matrix a_in_;
  std::shared_ptr<const DenseQpSolver> solver_;
};

/// First control of the receding-horizon plan.
inline Vector mpc_action(const MpcPolicy & p, const InfluenceNetwork & net, const Vector & mu_now, const Vector & u_now,
                         const Budget & b, double delta)
{
  require_dims(mu_now.size() == net.size(), "mpc_action: dimension mismatch");
  return p.plan(mu_now, u_now, b, delta).first;
}

}  // namespace nudgesim
