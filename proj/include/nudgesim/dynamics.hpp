#pragma once

/**
 * @file
 * @brief Opinion dynamics with an accumulating bias reservoir.
 *
 * Long-term model (interventions accumulate in the reservoir u):
 *
 *   x(t+1) = Lambda P x(t) + (I - Lambda) clamp(u(t) + w(t), 0, 1)
 *   u(t+1) = u(t) + u_c(t),  u(0) = u_o
 *
 * Short-term model (interventions act once and are forgotten):
 *
 *   x(t+1) = Lambda P x(t) + (I - Lambda) clamp(u_o + u_c(t) + w(t), 0, 1)
 *
 * with w(t) i.i.d. uniform on [-delta, delta]^N.
 */

#include <string>

#include "error.hpp"
#include "network.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace nudgesim {

/// Uniform disturbance amplitude. delta == 0 disables the noise.
struct NoiseModel
{
  double delta = 0.025;

  bool enabled() const { return delta > 0; }
};

struct SimulationState
{
  Vector x;  ///< latent inclinations, in [0, 1]^N
  Vector u;  ///< bias reservoir
  int t = 0;
  RandomStream rng;

  static SimulationState initial(const Vector & x0, const Vector & u_o, RandomStream rng)
  {
    return {x0, u_o, 0, std::move(rng)};
  }
};

namespace detail {

inline void check_control(const Vector & u_c, Eigen::Index n)
{
  require_dims(u_c.size() == n, "control length must equal the number of agents");
  for (Eigen::Index v = 0; v < n; ++v) {
    if (u_c[v] < 0) throw Error(Errc::NegativeControl, "u_c[" + std::to_string(v) + "] = " + std::to_string(u_c[v]));
  }
}

inline Vector draw_disturbance(RandomStream & rng, const NoiseModel & noise, Eigen::Index n)
{
  Vector w = Vector::Zero(n);
  if (noise.enabled()) {
    for (Eigen::Index v = 0; v < n; ++v) w[v] = rng.uniform(-noise.delta, noise.delta);
  }
  return w;
}

}  // namespace detail

/// One step of the stochastic long-term model; the returned state owns the advanced stream.
inline SimulationState step_long_term(const InfluenceNetwork & net, SimulationState s, const Vector & u_c, const NoiseModel & noise)
{
  const auto n = net.size();
  require_dims(s.x.size() == n && s.u.size() == n, "step_long_term: state dimension mismatch");
  detail::check_control(u_c, n);

  const Vector w = detail::draw_disturbance(s.rng, noise, n);
  const Vector input = (s.u + w).cwiseMax(0.0).cwiseMin(1.0);
  s.x = net.social_matrix() * s.x + net.bias_weight().cwiseProduct(input);
  s.u += u_c;
  ++s.t;
  return s;
}

/// One step of the stochastic short-term model. The reservoir stays at u_o.
inline SimulationState step_short_term_sampled(const InfluenceNetwork & net, SimulationState s, const Vector & u_o, const Vector & u_c,
                                               const NoiseModel & noise)
{
  const auto n = net.size();
  require_dims(s.x.size() == n && u_o.size() == n, "step_short_term_sampled: state dimension mismatch");
  detail::check_control(u_c, n);

  const Vector w = detail::draw_disturbance(s.rng, noise, n);
  const Vector input = (u_o + u_c + w).cwiseMax(0.0).cwiseMin(1.0);
  s.x = net.social_matrix() * s.x + net.bias_weight().cwiseProduct(input);
  s.u = u_o;
  ++s.t;
  return s;
}

/// Mean of the short-term model: Lambda P mu + (I - Lambda)(u_o + u_c).
inline Vector step_short_term(const InfluenceNetwork & net, const Vector & mu_st, const Vector & u_o, const Vector & u_c)
{
  const auto n = net.size();
  require_dims(mu_st.size() == n && u_o.size() == n, "step_short_term: dimension mismatch");
  detail::check_control(u_c, n);
  return net.social_matrix() * mu_st + net.bias_weight().cwiseProduct(u_o + u_c);
}

/// Noise-free expected step of the long-term model (no saturation).
inline Vector expected_step(const InfluenceNetwork & net, const Vector & mu, const Vector & u_expect)
{
  require_dims(mu.size() == net.size() && u_expect.size() == net.size(), "expected_step: dimension mismatch");
  return net.social_matrix() * mu + net.bias_weight().cwiseProduct(u_expect);
}

/// Fixed point (I - Lambda P)^{-1} (I - Lambda) u_bar.
inline Vector steady_state(const InfluenceNetwork & net, const Vector & u_bar)
{
  require_dims(u_bar.size() == net.size(), "steady_state: dimension mismatch");
  const auto n = net.size();
  const Matrix a = Matrix::Identity(n, n) - net.social_matrix();
  return solve_linear(a, net.bias_weight().cwiseProduct(u_bar));
}

/// Linear map u_bar -> steady_state(u_bar), i.e. (I - Lambda P)^{-1} (I - Lambda).
inline Matrix steady_state_gain(const InfluenceNetwork & net)
{
  const auto n = net.size();
  const Matrix a = Matrix::Identity(n, n) - net.social_matrix();
  return solve_linear(a, Matrix(net.bias_weight().asDiagonal()));
}

}  // namespace nudgesim
