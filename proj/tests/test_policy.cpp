#include <gtest/gtest.h>

#include <random>

#include "nudgesim/policy.hpp"

using namespace nudgesim;

namespace {

InfluenceNetwork scalar_agent() { return build_network(Matrix::Identity(1, 1), Vector::Zero(1)); }

InfluenceNetwork modular(std::uint64_t seed, double lambda = 0.25)
{
  NetworkRecipe r;
  r.seed = seed;
  r.lambda_value = lambda;
  return generate_modular(r);
}

Vector mixed_bias(int n)
{
  Vector u(n);
  for (int v = 0; v < n; ++v) u[v] = v < n / 2 ? 0.2 : 0.8;
  return u;
}

MpcSettings mpc_settings(int n, int horizon, double r)
{
  MpcSettings s;
  s.horizon = horizon;
  s.R = r * Matrix::Identity(n, n);
  return s;
}

}  // namespace

TEST(Budget, Remaining)
{
  EXPECT_EQ(budget_remaining({10, 0}), 10);
  EXPECT_EQ(budget_remaining({10, 4}), 6);
  EXPECT_EQ(budget_remaining({10, 12}), 0);
  Budget b{1, 0};
  b.spend(Vector{{0.25, 0.5}});
  EXPECT_DOUBLE_EQ(b.remaining(), 0.25);
}

TEST(ConstantPolicy, ScalesToRemainingBudget)
{
  const ConstantPolicy p{Vector{{1, 3}}, 5};
  const Vector a = constant_action(p, Vector::Constant(2, 0.0), Budget{2, 0}, -10.0);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 1.5);
  EXPECT_EQ(constant_action(p, Vector::Constant(2, 0.2), Budget{2, 2}, 0.025), Vector::Zero(2));
}

TEST(ConstantPolicy, TruncatesAtEnvelope)
{
  const ConstantPolicy p{Vector::Constant(2, 0.05), 5};
  const Vector a = constant_action(p, Vector::Constant(2, 0.95), Budget{100, 0}, 0.025);
  EXPECT_NEAR(a[0], 0.025, 1e-15);
  EXPECT_NEAR(a[1], 0.025, 1e-15);
}

TEST(ConstantPolicy, ScheduleSpendsRemainderOnce)
{
  const ConstantPolicy p{Vector::Constant(2, 0.1), 3};
  Budget b{1.0, 0};
  Vector u = Vector::Constant(2, 0.2);
  double total = 0;
  for (int t = 0; t < 6; ++t) {
    const Vector a = constant_schedule_action(p, t, u, b, 0.025);
    if (t > 3) EXPECT_EQ(a, Vector::Zero(2));
    u += a;
    b.spend(a);
    total += a.sum();
  }
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_NEAR(u[0], 0.7, 1e-15);
}

TEST(FeedbackPolicy, Examples)
{
  const auto net = modular(2);
  const Matrix eye = Matrix::Identity(20, 20);
  const Budget ample{1e6, 0};

  const FeedbackPolicy unit(net, eye, Vector::Zero(20), Vector::Ones(20));
  EXPECT_EQ(feedback_action(unit, Vector::Ones(20), ample), Vector::Zero(20));
  EXPECT_EQ(feedback_action(unit, Vector::Zero(20), ample), Vector::Ones(20));

  const FeedbackPolicy half(net, 0.5 * eye, Vector::Zero(20), Vector::Constant(20, 10));
  EXPECT_LE((feedback_action(half, Vector::Constant(20, 0.5), ample) - Vector::Constant(20, 0.25)).cwiseAbs().maxCoeff(),
            1e-15);

  const Vector scaled = feedback_action(unit, Vector::Zero(20), Budget{5, 0});
  EXPECT_NEAR(scaled.sum(), 5.0, 1e-12);
}

TEST(FeedbackPolicy, RejectsUnstableGain)
{
  const auto net = modular(2);
  const Matrix k = -2.0 * Matrix::Identity(20, 20);
  EXPECT_GE(spectral_radius(FeedbackPolicy::closed_loop_matrix(net, k)), 1.0);
  EXPECT_THROW(FeedbackPolicy(net, k, Vector::Zero(20), Vector::Ones(20)), Error);
  EXPECT_THROW(FeedbackPolicy(net, Matrix::Identity(20, 20), Vector::Ones(20), Vector::Zero(20)), Error);
  EXPECT_DOUBLE_EQ(FeedbackPolicy::default_kappa(net), 1.0);
}

TEST(DesignCcp, ScalarExamples)
{
  const auto net = scalar_agent();
  const Vector u_o = Vector::Constant(1, 0.5);
  const Matrix r = Matrix::Identity(1, 1);

  EXPECT_NEAR(design_ccp(net, u_o, 100, 1, r, 0, 0.025).solved_u[0], 0.25, 1e-10);
  EXPECT_EQ(design_ccp(net, u_o, 0, 1, r, 0, 0.025).solved_u[0], 0.0);
  EXPECT_NEAR(design_ccp(net, u_o, 100, 1, r, 0, 0.3).solved_u[0], 0.2, 1e-12);

  const auto p = design_ccp(net, u_o, 100, 1, r, 0, 0.025);
  EXPECT_NEAR(p.objective, ccp_cost(net, u_o, 100, 1, r, 0, p.solved_u), 1e-12);
  EXPECT_NEAR(p.predicted_mu[0], 0.75, 1e-12);
}

TEST(DesignCcp, LocallyOptimalUnderCoordinatePerturbation)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = modular(seed, seed % 2 ? 0.75 : 0.25);
    const Vector u_o = mixed_bias(20);
    const Matrix r = 15.0 * Matrix::Identity(20, 20);
    const double beta = 10, s = 10, delta = 0.025;
    const int t = 20;
    const auto p = design_ccp(net, u_o, beta, t, r, s, delta);
    ASSERT_LE(t * p.solved_u.sum(), beta + 1e-8);
    ASSERT_TRUE((p.solved_u.array() >= 0).all());
    const double base = ccp_cost(net, u_o, beta, t, r, s, p.solved_u);
    EXPECT_NEAR(base, p.objective, 1e-8);
    for (int v = 0; v < 20; ++v) {
      for (double step : {1e-3, -1e-3}) {
        Vector u = p.solved_u;
        u[v] += step;
        const bool feasible = u[v] >= 0 && t * u.sum() <= beta && u_o[v] + t * u[v] <= 1 - delta;
        if (!feasible) continue;
        EXPECT_GE(ccp_cost(net, u_o, beta, t, r, s, u), base - 1e-6) << "seed " << seed << " v " << v;
      }
    }
  }
}

TEST(Mpc, ScalarHorizonOne)
{
  const auto net = scalar_agent();
  const MpcPolicy p(net, mpc_settings(1, 1, 1.0), Vector::Constant(1, 0.5));
  EXPECT_NEAR(p.terminal_weight()(0, 0), 1.0, 1e-15);
  const Vector a = mpc_action(p, net, Vector::Constant(1, 0.5), Vector::Constant(1, 0.5), Budget{100, 0}, 0.025);
  EXPECT_NEAR(a[0], 0.25, 1e-10);
}

TEST(Mpc, ZeroBudgetGivesZero)
{
  const auto net = modular(4);
  const Vector u_o = mixed_bias(20);
  for (auto mode : {BudgetConstraint::Paper, BudgetConstraint::Total}) {
    auto s = mpc_settings(20, 5, 10.0);
    s.budget_constraint = mode;
    const MpcPolicy p(net, s, u_o);
    EXPECT_EQ(mpc_action(p, net, u_o, u_o, Budget{10, 10}, 0.025), Vector::Zero(20));
  }
}

TEST(Mpc, FullAdoptionGivesZero)
{
  const auto net = modular(4);
  const double delta = 0.025;
  const MpcPolicy p(net, mpc_settings(20, 5, 10.0), mixed_bias(20));
  const Vector a = mpc_action(p, net, Vector::Ones(20), Vector::Constant(20, 1 - delta), Budget{10, 0}, delta);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mpc, LyapunovTerminalWeight)
{
  const auto net = modular(8, 0.75);
  const MpcPolicy p(net, mpc_settings(20, 3, 1.0), mixed_bias(20));
  const Matrix & q = p.terminal_weight();
  const Matrix a = net.social_matrix();
  EXPECT_LE(inf_norm(Matrix(a.transpose() * q * a - q + Matrix::Identity(20, 20))), 1e-8);
}

TEST(Mpc, CondensedCostMatchesSimulation)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0, 1);
  for (auto model : {PredictionModel::LongTerm, PredictionModel::ShortTerm}) {
    for (auto terminal : {TerminalIndex::AtL, TerminalIndex::AtLMinus1}) {
      const auto net = modular(5);
      const Vector u_o = mixed_bias(20);
      auto s = mpc_settings(20, 4, 3.0);
      s.model = model;
      s.terminal = terminal;
      const MpcPolicy p(net, s, u_o);
      Vector mu(20), u(20);
      for (int v = 0; v < 20; ++v) {
        mu[v] = unit(rng);
        u[v] = u_o[v] + 0.1 * unit(rng);
      }
      const auto plan = p.plan(mu, u, Budget{10, 0}, 0.025);
      EXPECT_NEAR(plan.cost, p.cost_of(mu, u, plan.controls), 1e-9);

      const QpProblem qp = p.problem(mu, u, 10, 0.025);
      double constant = plan.cost - plan.qp.objective;
      for (int trial = 0; trial < 5; ++trial) {
        Matrix c(20, 4);
        for (int i = 0; i < 20; ++i)
          for (int k = 0; k < 4; ++k) c(i, k) = 0.05 * unit(rng);
        const Vector z = Eigen::Map<const Vector>(c.data(), 80);
        const double f = 0.5 * z.dot(qp.H * z) + qp.g.dot(z) + constant;
        EXPECT_NEAR(f, p.cost_of(mu, u, c), 1e-9);
        // the optimum is no worse than any feasible random plan
        if ((qp.A_in * z - qp.b_in).maxCoeff() <= 0 && (z.array() <= qp.ub.array()).all()) {
          EXPECT_LE(plan.cost, p.cost_of(mu, u, c) + 1e-9);
        }
      }
    }
  }
}

TEST(Mpc, WarmStartMatchesColdSolve)
{
  const auto net = modular(6);
  const Vector u_o = mixed_bias(20);
  const MpcPolicy p(net, mpc_settings(20, 10, 10.0), u_o);
  Budget b{10, 0};
  Vector mu = u_o, u = u_o;
  Vector warm = Vector::Zero(200);
  for (int t = 0; t < 12; ++t) {
    const auto hot = p.plan(mu, u, b, 0.025, &warm);
    const QpSolution cold = solve_qp(p.problem(mu, u, b.remaining(), 0.025));
    ASSERT_EQ(cold.status, QpStatus::Optimal);
    EXPECT_LE((hot.qp.z - cold.z).lpNorm<Eigen::Infinity>(), 1e-6) << "t " << t;
    warm = p.shifted_warm_start(hot);
    mu = expected_step(net, mu, u);
    u += hot.first;
    b.spend(hot.first);
  }
}

TEST(Mpc, BudgetModesAndSafety)
{
  const auto net = modular(7);
  const Vector u_o = mixed_bias(20);
  const double delta = 0.025;
  for (auto mode : {BudgetConstraint::Paper, BudgetConstraint::Total}) {
    for (int horizon : {1, 3}) {
      auto s = mpc_settings(20, horizon, 0.1);
      s.budget_constraint = mode;
      const MpcPolicy p(net, s, u_o);
      Budget b{3, 0};
      Vector mu = u_o, u = u_o;
      for (int t = 0; t < 30; ++t) {
        const Vector a = mpc_action(p, net, mu, u, b, delta);
        ASSERT_TRUE((a.array() >= 0).all());
        mu = expected_step(net, mu, u);
        u += a;
        b.spend(a);
        ASSERT_LE(b.spent, b.beta + 1e-9);
        ASSERT_LE(u.maxCoeff(), 1 - delta + 1e-9);
      }
      EXPECT_NEAR(b.spent, 3.0, 1e-6) << "cheap inputs exhaust the budget";
    }
  }
}

TEST(Mpc, UnconstrainedClosedLoopIsMonotone)
{
  // Huge budget, low-bias start, long horizon: no constraint is active and the
  // expected inclinations rise monotonically.
  const auto net = modular(12);
  const Vector u_o = Vector::Constant(20, 0.3);
  const double delta = 0.025;
  const MpcPolicy p(net, mpc_settings(20, 20, 200.0), u_o);
  Budget b{1e6, 0};
  Vector mu = u_o, u = u_o;
  for (int t = 0; t < 30; ++t) {
    const auto plan = p.plan(mu, u, b, delta);
    ASSERT_LT((plan.qp.lambda_in.array() > 0).count(), 1) << "a constraint became active at t " << t;
    const Vector next = expected_step(net, mu, u);
    EXPECT_TRUE((next.array() >= mu.array() - 1e-12).all()) << "t " << t;
    mu = next;
    u += plan.first;
    b.spend(plan.first);
  }
}
