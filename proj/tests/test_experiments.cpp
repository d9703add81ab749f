#include <gtest/gtest.h>

#include <random>

#include "nudgesim/experiments.hpp"

using namespace nudgesim;

namespace {

Scenario small_scenario(PolicyKind kind, std::uint64_t seed = 11)
{
  Scenario sc;
  sc.master_seed = seed;
  sc.n_runs = 3;
  sc.T_sim = 30;
  sc.policy.kind = kind;
  return sc;
}

}  // namespace

TEST(SocialBenefit, Examples)
{
  EXPECT_EQ(social_benefit(Vector::Ones(5)), 0.0);
  EXPECT_DOUBLE_EQ(social_benefit(Vector::Constant(4, 0.5)), 1.0);
  EXPECT_DOUBLE_EQ(social_benefit(Vector::Zero(20)), 20.0);
}

TEST(BiasProfile, Levels)
{
  const Vector m = BiasProfile{BiasKind::Mixed, {}}.values(20);
  EXPECT_EQ(m.head(10), Vector::Constant(10, 0.2));
  EXPECT_EQ(m.tail(10), Vector::Constant(10, 0.8));
  const Vector negative = BiasProfile{BiasKind::Negative, {}}.values(4);
  EXPECT_EQ(negative, (Vector(4) << 0.2, 0.2, 0.3, 0.3).finished());
  const Vector positive = BiasProfile{BiasKind::Positive, {}}.values(2);
  EXPECT_EQ(positive, (Vector(2) << 0.6, 0.8).finished());
  EXPECT_THROW(BiasProfile({BiasKind::Custom, Vector::Constant(3, 0.5)}).values(4), Error);
}

TEST(Scenario, ValidationMessages)
{
  Scenario sc = small_scenario(PolicyKind::None);
  sc.delta = 0.25;
  try {
    sc.validate();
    FAIL() << "expected rejection";
  } catch (const Error & e) {
    EXPECT_NE(std::string(e.what()).find("Assumption 2 violated"), std::string::npos);
  }
  sc.delta = 0.025;
  sc.T_sim = 0;
  EXPECT_THROW(sc.validate(), Error);
}

TEST(ClosedLoop, NoiseFreeUncontrolledApproachesSteadyState)
{
  Scenario sc = small_scenario(PolicyKind::None);
  sc.delta = 0;
  sc.T_sim = 300;
  const auto r = run_closed_loop(sc, 0);
  const auto net = network_for_run(sc, 0);
  const Vector u_o = sc.bias.values(20);
  const double target = social_benefit(steady_state(net, u_o));
  ASSERT_EQ(r.trajectory.size(), 301u);
  EXPECT_NEAR(r.trajectory.back().gamma, target, 1e-9);
  EXPECT_GT(std::abs(r.trajectory.front().gamma - target), 1e-3);
  EXPECT_EQ(r.u_sigma_sim, 0.0);
}

TEST(ClosedLoop, ZeroBudgetMpcMatchesUncontrolled)
{
  Scenario none = small_scenario(PolicyKind::None);
  Scenario mpc = small_scenario(PolicyKind::Mpc);
  none.beta = mpc.beta = 0;
  for (int run = 0; run < 3; ++run) {
    const auto a = run_closed_loop(none, run);
    const auto b = run_closed_loop(mpc, run);
    ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
    for (std::size_t t = 0; t < a.trajectory.size(); ++t) {
      EXPECT_EQ(a.trajectory[t].x, b.trajectory[t].x) << "t=" << t;
      EXPECT_EQ(b.trajectory[t].u_c, Vector::Zero(20));
    }
  }
}

TEST(ClosedLoop, NegativeBiasHighBudgetReachesNearUniversalAcceptance)
{
  Scenario sc = small_scenario(PolicyKind::Mpc);
  sc.bias.kind = BiasKind::Negative;
  sc.beta = 25;
  const auto r = run_closed_loop(sc, 0);
  EXPECT_GT(r.trajectory.back().x.minCoeff(), 0.9);
}

TEST(ClosedLoop, ConstantPolicyAsymptotics)
{
  // Ten steps of nu = 0.01 on every agent, then the leftover budget in one
  // shot, truncated at the envelope: low-bias agents end at 0.2 + 0.1 + 0.4,
  // high-bias agents hit 1 - delta.
  Scenario sc = small_scenario(PolicyKind::Constant);
  sc.T_sim = 80;
  sc.regenerate_network = false;
  sc.recipe.seed = 5;
  const Vector expected_u = (Vector(20) << Vector::Constant(10, 0.7), Vector::Constant(10, 0.975)).finished();

  Vector mean = Vector::Zero(20);
  const int runs = 100;
  for (int i = 0; i < runs; ++i) {
    const auto r = run_closed_loop(sc, i);
    EXPECT_LE((r.trajectory.back().u - expected_u).cwiseAbs().maxCoeff(), 1e-12);
    mean += r.trajectory.back().x / runs;
  }
  const Vector target = steady_state(network_for_run(sc, 0), expected_u);
  EXPECT_LE((mean - target).cwiseAbs().maxCoeff(), 0.02);
}

TEST(ClosedLoop, DeterministicAndIndependentOfJobs)
{
  for (auto kind : {PolicyKind::Feedback, PolicyKind::Mpc}) {
    Scenario sc = small_scenario(kind, 99);
    sc.n_runs = 5;
    const auto a = run_monte_carlo(sc, 1, true);
    const auto b = run_monte_carlo(sc, 4, true);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].gamma_sim, b[i].gamma_sim);
      EXPECT_EQ(trajectory_csv(a[i].trajectory).str(), trajectory_csv(b[i].trajectory).str());
    }
  }
}

TEST(ClosedLoop, SafetyInvariantsUnderRandomScenarios)
{
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0, 1);
  const PolicyKind kinds[] = {PolicyKind::Constant, PolicyKind::Feedback, PolicyKind::Ccp, PolicyKind::Mpc};
  for (int trial = 0; trial < 40; ++trial) {
    Scenario sc;
    sc.master_seed = rng();
    sc.recipe.n_agents = 4 + static_cast<int>(rng() % 9);
    sc.recipe.n_clusters = 1 + static_cast<int>(rng() % 3);
    sc.recipe.lambda_value = 0.05 + 0.9 * unit(rng);
    sc.delta = 0.05 * unit(rng);
    sc.bias.kind = BiasKind::Custom;
    sc.bias.custom = (sc.delta + 0.001 + (0.998 - 2 * sc.delta) * Vector::NullaryExpr(sc.recipe.n_agents, [&] { return unit(rng); }).array()).matrix();
    sc.beta = 15 * unit(rng);
    sc.T_sim = 15;
    sc.model = rng() % 4 == 0 ? ModelKind::ShortTerm : ModelKind::LongTerm;
    sc.policy.kind = kinds[trial % 4];
    sc.policy.constant.nu = 0.2 * unit(rng);
    sc.policy.mpc.L = 1 + static_cast<int>(rng() % 6);
    sc.policy.mpc.budget = rng() % 2 ? BudgetConstraint::Paper : BudgetConstraint::Total;
    sc.policy.ccp.T = 1 + static_cast<int>(rng() % 20);
    const auto r = run_closed_loop(sc, 0);
    const auto bad = check_trajectory(r.trajectory, sc.beta, sc.delta, sc.model, sc.bias.custom);
    EXPECT_TRUE(bad.empty()) << "trial " << trial << ": " << bad.front();
  }
}

TEST(ParallelMap, PropagatesExceptions)
{
  EXPECT_THROW(parallel_map<int>(8, 3, [](int i) -> int { if (i == 5) throw std::runtime_error("boom"); return i; }), std::runtime_error);
  EXPECT_EQ(parallel_map<int>(4, 2, [](int i) { return i * i; }), (std::vector<int>{0, 1, 4, 9}));
}

TEST(Estimate, MeanAndStandardError)
{
  const auto e = estimate({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.stderr_, std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3 / 4), 1e-15);
}

TEST(Csv, NumberFormatting)
{
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2.5e-20), "2.5e-20");
  EXPECT_EQ(format_number(6.0), "6");
  EXPECT_EQ(format_fixed(1.23456, 2), "1.23");
  CsvTable t({"a", "b"});
  CsvTable::Row row;
  row << 1 << 0.5;
  t.add(row);
  EXPECT_EQ(t.str(), "a,b\n1,0.5\n");
  CsvTable::Row short_row;
  short_row << 1;
  EXPECT_THROW(t.add(short_row), Error);
}

TEST(Csv, TrajectoryLayout)
{
  Scenario sc = small_scenario(PolicyKind::Mpc);
  sc.recipe.n_agents = 4;
  sc.recipe.n_clusters = 2;
  sc.T_sim = 6;
  const std::string csv = trajectory_csv(run_closed_loop(sc, 0).trajectory).str();
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "t,spend_to_date,gamma,u_sigma,x_0,x_1,x_2,x_3,u_0,u_1,u_2,u_3,uc_0,uc_1,uc_2,uc_3");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 7);
}

TEST(Reproduce, Table2ShapeAndDeterminism)
{
  ReproduceOptions o;
  o.n_runs = 1;
  o.T_sim = 8;
  const auto a = reproduce_table2(o);
  const auto b = reproduce_table2(o);
  ASSERT_EQ(a.files.size(), 1u);
  EXPECT_EQ(a.files[0].filename, "table2.csv");
  EXPECT_EQ(a.files[0].content, b.files[0].content);
  const auto & s = a.files[0].content;
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 3 * 3 * 2);
}

TEST(Reproduce, Fig4Files)
{
  ReproduceOptions o;
  o.n_runs = 1;
  o.fig4_horizon = 5;
  const auto rep = reproduce_fig4(o);
  std::vector<std::string> names;
  for (const auto & f : rep.files) names.push_back(f.filename);
  EXPECT_EQ(names, (std::vector<std::string>{"fig4_gamma.csv", "fig4_spend.csv", "fig4.svg"}));
  const auto & svg = rep.files[2].content;
  for (const char * label : {"Γ^MPC_sim", "Γ^CCP_sim", "u^Σ,MPC_sim", "u^Σ,CCP_sim"}) EXPECT_NE(svg.find(label), std::string::npos) << label;
}
