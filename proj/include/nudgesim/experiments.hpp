#pragma once

/**
 * @file
 * @brief Scenarios, closed-loop Monte Carlo runs, metrics, and the table and
 * figure reproductions.
 */

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dynamics.hpp"
#include "io.hpp"
#include "network.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace nudgesim {

// ---------------------------------------------------------------------------
// Scenario description

enum class BiasKind { Mixed, Negative, Positive, Custom };

/// Inherent biases: the first half of the agents gets `low`, the rest `high`.
struct BiasProfile
{
  BiasKind kind = BiasKind::Mixed;
  Vector custom;

  static std::pair<double, double> levels(BiasKind k)
  {
    switch (k) {
      case BiasKind::Mixed: return {0.2, 0.8};
      case BiasKind::Negative: return {0.2, 0.3};
      case BiasKind::Positive: return {0.6, 0.8};
      case BiasKind::Custom: break;
    }
    throw Error(Errc::InvalidArgument, "custom bias has no preset levels");
  }

  Vector values(int n) const
  {
    if (kind == BiasKind::Custom) {
      require_dims(custom.size() == n, "custom bias length must equal the number of agents");
      return custom;
    }
    const auto [low, high] = levels(kind);
    Vector u(n);
    for (int v = 0; v < n; ++v) u[v] = v < n / 2 ? low : high;
    return u;
  }
};

inline const char * to_string(BiasKind k)
{
  switch (k) {
    case BiasKind::Mixed: return "mixed";
    case BiasKind::Negative: return "negative";
    case BiasKind::Positive: return "positive";
    case BiasKind::Custom: return "custom";
  }
  return "?";
}

enum class PolicyKind { None, Constant, Feedback, Ccp, Mpc };

inline const char * to_string(PolicyKind k)
{
  switch (k) {
    case PolicyKind::None: return "none";
    case PolicyKind::Constant: return "constant";
    case PolicyKind::Feedback: return "feedback";
    case PolicyKind::Ccp: return "ccp";
    case PolicyKind::Mpc: return "mpc";
  }
  return "?";
}

struct ConstantSpec
{
  double nu = 0.01;  ///< per-agent magnitude, nu = this * 1
  int T = 10;
};

struct FeedbackSpec
{
  std::optional<Matrix> K;      ///< explicit gain; otherwise kappa * I
  std::optional<double> kappa;  ///< default: FeedbackPolicy::default_kappa
  double u_min = 0;
  double u_max = 0.1;
};

struct CcpSpec
{
  int T = 20;
  double r = 15;  ///< R = r I
  double S = 10;
};

struct MpcSpec
{
  int L = 5;
  double r = 10;  ///< R = r I
  TerminalIndex terminal = TerminalIndex::AtL;
  BudgetConstraint budget = BudgetConstraint::Paper;
};

struct PolicySpec
{
  PolicyKind kind = PolicyKind::None;
  ConstantSpec constant;
  FeedbackSpec feedback;
  CcpSpec ccp;
  MpcSpec mpc;
};

enum class ModelKind { LongTerm, ShortTerm };

inline const char * to_string(ModelKind m) { return m == ModelKind::LongTerm ? "long" : "short"; }

/// What the feedback and MPC controllers see as the current mean inclination.
enum class StateSource { Expected, Realized };

struct Scenario
{
  NetworkRecipe recipe;
  /// Fixed network for every run; when absent the network comes from `recipe`.
  std::optional<InfluenceNetwork> network;
  /// Draw a fresh network per run (seeded from master_seed and the run index)
  /// instead of using recipe.seed for all runs.
  bool regenerate_network = true;
  BiasProfile bias;
  double beta = 10;
  double delta = 0.025;
  int T_sim = 30;
  PolicySpec policy;
  ModelKind model = ModelKind::LongTerm;
  StateSource state_source = StateSource::Expected;
  int n_runs = 20;
  std::uint64_t master_seed = 0;

  int n_agents() const { return network ? network->size() : recipe.n_agents; }

  void validate() const
  {
    if (T_sim < 1) throw Error(Errc::InvalidArgument, "T_sim must be >= 1");
    if (n_runs < 1) throw Error(Errc::InvalidArgument, "n_runs must be >= 1");
    if (!(beta >= 0) || !std::isfinite(beta)) throw Error(Errc::InvalidArgument, "beta must be finite and >= 0");
    if (!(delta >= 0 && delta < 0.5)) throw Error(Errc::InvalidArgument, "delta must be in [0, 0.5)");
    if (!network) recipe.validate();
    const Vector u_o = bias.values(n_agents());
    if ((u_o.array() < 0).any() || (u_o.array() > 1).any()) throw Error(Errc::InvalidArgument, "bias entries must be in [0, 1]");
    if (delta > 0 && !(delta < u_o.minCoeff())) {
      throw Error(Errc::InvalidArgument, "Assumption 2 violated: delta = " + format_number(delta) + " must be below min u_o = " +
                                             format_number(u_o.minCoeff()));
    }
    if (u_o.maxCoeff() > 1 - delta) {
      throw Error(Errc::InvalidArgument, "bias entries must not exceed 1 - delta = " + format_number(1 - delta));
    }
    const auto & p = policy;
    if (p.kind == PolicyKind::Constant && (p.constant.T < 1 || !(p.constant.nu >= 0))) {
      throw Error(Errc::InvalidArgument, "constant policy needs T >= 1 and nu >= 0");
    }
    if (p.kind == PolicyKind::Ccp && (p.ccp.T < 1 || !(p.ccp.r > 0) || !(p.ccp.S >= 0))) {
      throw Error(Errc::InvalidArgument, "ccp policy needs T >= 1, r > 0 and S >= 0");
    }
    if (p.kind == PolicyKind::Mpc && (p.mpc.L < 1 || !(p.mpc.r > 0))) {
      throw Error(Errc::InvalidArgument, "mpc policy needs L >= 1 and r > 0");
    }
    if (p.kind == PolicyKind::Feedback && !(0 <= p.feedback.u_min && p.feedback.u_min <= p.feedback.u_max)) {
      throw Error(Errc::InvalidArgument, "feedback bounds must satisfy 0 <= u_min <= u_max");
    }
  }
};

// ---------------------------------------------------------------------------
// Metrics and trajectories

/// |1 - x|^2
inline double social_benefit(const Vector & x) { return (Vector::Ones(x.size()) - x).squaredNorm(); }

struct TrajectoryRow
{
  int t = 0;
  Vector x, u, u_c;
  double spend_to_date = 0;  ///< spent before step t
  double gamma = 0;          ///< |1 - x(t)|^2
  double u_sigma = 0;        ///< spent up to and including the action at t
};

using TrajectoryRecord = std::vector<TrajectoryRow>;

struct RunMetrics
{
  int run_index = 0;
  double gamma_sim = 0;
  double u_sigma_sim = 0;
  double budget_pct = 0;
  TrajectoryRecord trajectory;
};

inline double budget_percentage(double spent, double beta) { return beta > 0 ? 100.0 * spent / beta : 0.0; }

/// Violations of state boundedness, the reservoir envelope, budget safety and
/// monotone spend along a recorded trajectory (empty when all hold).
inline std::vector<std::string> check_trajectory(const TrajectoryRecord & rec, double beta, double delta, ModelKind model,
                                                 const Vector & u_o)
{
  std::vector<std::string> bad;
  double last = 0;
  for (const auto & row : rec) {
    const std::string at = "t=" + std::to_string(row.t) + ": ";
    if ((row.x.array() < 0).any() || (row.x.array() > 1).any()) bad.push_back(at + "x outside [0, 1]");
    const Vector input = model == ModelKind::LongTerm ? row.u : Vector(u_o + row.u_c);
    if (input.minCoeff() < delta - 1e-9 || input.maxCoeff() > 1 - delta + 1e-9) bad.push_back(at + "reservoir outside envelope");
    if ((row.u_c.array() < 0).any()) bad.push_back(at + "negative control");
    if (row.u_sigma > beta + 1e-9) bad.push_back(at + "spend above budget");
    if (row.u_sigma < last) bad.push_back(at + "spend decreased");
    last = row.u_sigma;
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Closed loop

namespace stream {
inline constexpr std::uint64_t network = 1;
inline constexpr std::uint64_t noise = 2;
}  // namespace stream

inline InfluenceNetwork network_for_run(const Scenario & sc, int run_index)
{
  if (sc.network) return *sc.network;
  NetworkRecipe r = sc.recipe;
  if (sc.regenerate_network) {
    r.seed = RandomStream::derive(sc.master_seed, static_cast<std::uint64_t>(run_index), stream::network).next_u64();
  }
  return generate_modular(r);
}

/**
 * @brief One closed-loop realization.
 *
 * x(0) = u(0) = u_o. At each t < T_sim the policy proposes u_c(t) from the
 * current estimate of the mean inclination, the proposal is clipped to the
 * envelope and the remaining budget, and the model advances one step. The
 * estimate follows the noise-free expected recursion unless
 * `state_source = Realized`, in which case the controllers see x(t).
 */
inline RunMetrics run_closed_loop(const Scenario & sc, int run_index, bool keep_trajectory = true)
{
  const InfluenceNetwork net = network_for_run(sc, run_index);
  const auto n = net.size();
  const Vector u_o = sc.bias.values(n);
  const NoiseModel noise{sc.delta};
  const bool long_term = sc.model == ModelKind::LongTerm;
  const auto & spec = sc.policy;

  std::optional<ConstantPolicy> constant;
  std::optional<FeedbackPolicy> feedback;
  std::optional<CcpPolicy> ccp;
  std::optional<MpcPolicy> mpc;
  switch (spec.kind) {
    case PolicyKind::None: break;
    case PolicyKind::Constant: constant = ConstantPolicy{Vector::Constant(n, spec.constant.nu), spec.constant.T}; break;
    case PolicyKind::Feedback: {
      Matrix k = spec.feedback.K ? *spec.feedback.K
                                 : Matrix(spec.feedback.kappa.value_or(FeedbackPolicy::default_kappa(net)) * Matrix::Identity(n, n));
      feedback.emplace(net, std::move(k), Vector::Constant(n, spec.feedback.u_min), Vector::Constant(n, spec.feedback.u_max));
      break;
    }
    case PolicyKind::Ccp:
      ccp = design_ccp(net, u_o, sc.beta, spec.ccp.T, spec.ccp.r * Matrix::Identity(n, n), spec.ccp.S, sc.delta);
      break;
    case PolicyKind::Mpc: {
      MpcSettings s;
      s.horizon = spec.mpc.L;
      s.R = spec.mpc.r * Matrix::Identity(n, n);
      s.terminal = spec.mpc.terminal;
      s.budget_constraint = spec.mpc.budget;
      s.model = long_term ? PredictionModel::LongTerm : PredictionModel::ShortTerm;
      mpc.emplace(net, std::move(s), u_o);
      break;
    }
  }

  auto state = SimulationState::initial(u_o, u_o, RandomStream::derive(sc.master_seed, static_cast<std::uint64_t>(run_index), stream::noise));
  Vector mu = u_o;
  Budget budget{sc.beta, 0};
  Vector warm;

  RunMetrics out;
  out.run_index = run_index;
  auto record = [&](const Vector & action) {
    if (!keep_trajectory) return;
    out.trajectory.push_back({state.t, state.x, state.u, action, budget.spent, social_benefit(state.x), budget.spent + action.sum()});
  };

  for (int t = 0; t < sc.T_sim; ++t) {
    const Vector & reservoir = long_term ? state.u : u_o;
    const Vector & estimate = sc.state_source == StateSource::Realized ? state.x : mu;
    Vector action = Vector::Zero(n);
    switch (spec.kind) {
      case PolicyKind::None: break;
      case PolicyKind::Constant: action = constant_schedule_action(*constant, t, reservoir, budget, sc.delta); break;
      case PolicyKind::Feedback: action = feedback_action(*feedback, estimate, budget); break;
      case PolicyKind::Ccp: action = ccp_schedule_action(*ccp, t); break;
      case PolicyKind::Mpc: {
        if (budget.remaining() <= 0) break;  // every plan is zero once the budget is gone
        const auto plan = mpc->plan(estimate, reservoir, budget, sc.delta, warm.size() ? &warm : nullptr);
        warm = mpc->shifted_warm_start(plan);
        action = plan.first;
        break;
      }
    }
    action = enforce_feasibility(std::move(action), reservoir, budget, sc.delta);
    record(action);
    budget.spend(action);

    if (long_term) {
      mu = expected_step(net, mu, state.u);
      state = step_long_term(net, std::move(state), action, noise);
    } else {
      mu = step_short_term(net, mu, u_o, action);
      state = step_short_term_sampled(net, std::move(state), u_o, action, noise);
    }
  }
  record(Vector::Zero(n));

  out.gamma_sim = social_benefit(state.x);
  out.u_sigma_sim = budget.spent;
  out.budget_pct = budget_percentage(budget.spent, sc.beta);
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Run `count` independent tasks on up to `jobs` threads; results are indexed
/// by task, so the outcome does not depend on scheduling.
template <typename Result, typename Task>
std::vector<Result> parallel_map(int count, int jobs, Task && task)
{
  std::vector<Result> results(static_cast<std::size_t>(std::max(count, 0)));
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = task(i);
    return results;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          results[static_cast<std::size_t>(i)] = task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto & th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline int default_jobs()
{
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

inline std::vector<RunMetrics> run_monte_carlo(const Scenario & sc, int jobs, bool keep_trajectories = false)
{
  sc.validate();
  return parallel_map<RunMetrics>(sc.n_runs, jobs, [&](int i) { return run_closed_loop(sc, i, keep_trajectories); });
}

struct Estimate
{
  double mean = 0;
  double stderr_ = 0;
};

inline Estimate estimate(const std::vector<double> & xs)
{
  Estimate e;
  if (xs.empty()) return e;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) e.mean += x;
  e.mean /= n;
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.stderr_ = std::sqrt(ss / (n - 1) / n);
  }
  return e;
}

struct MonteCarloSummary
{
  Estimate gamma, u_sigma, budget_pct;
  int runs = 0;
};

inline MonteCarloSummary summarize(const std::vector<RunMetrics> & runs)
{
  std::vector<double> g, s, b;
  for (const auto & r : runs) {
    g.push_back(r.gamma_sim);
    s.push_back(r.u_sigma_sim);
    b.push_back(r.budget_pct);
  }
  return {estimate(g), estimate(s), estimate(b), static_cast<int>(runs.size())};
}

/// Trajectory as CSV: t, spend_to_date, gamma, u_sigma, then x_v, u_v, uc_v per agent.
inline CsvTable trajectory_csv(const TrajectoryRecord & rec)
{
  const auto n = rec.empty() ? 0 : rec.front().x.size();
  std::vector<std::string> header{"t", "spend_to_date", "gamma", "u_sigma"};
  for (const char * name : {"x_", "u_", "uc_"})
    for (Eigen::Index v = 0; v < n; ++v) header.push_back(name + std::to_string(v));
  CsvTable csv(std::move(header));
  for (const auto & row : rec) {
    CsvTable::Row r;
    r << row.t << row.spend_to_date << row.gamma << row.u_sigma;
    for (const Vector * vec : {&row.x, &row.u, &row.u_c})
      for (Eigen::Index v = 0; v < n; ++v) r << (*vec)[v];
    csv.add(r);
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Reproductions

struct Check
{
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Artifact
{
  std::string filename;
  std::string content;
};

struct Reproduction
{
  std::vector<Artifact> files;
  std::vector<Check> checks;

  bool all_pass() const
  {
    for (const auto & c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct ReproduceOptions
{
  NetworkRecipe recipe;  ///< seed ignored: networks are regenerated per run
  int n_runs = 20;
  std::uint64_t master_seed = 2024;
  int jobs = 1;
  double delta = 0.025;
  int T_sim = 30;
  StateSource state_source = StateSource::Expected;
  TerminalIndex terminal = TerminalIndex::AtL;
  BudgetConstraint budget_constraint = BudgetConstraint::Paper;
  int table2_horizon = 5;
  int fig4_horizon = 20;
};

namespace detail {

inline Scenario base_scenario(const ReproduceOptions & o, BiasKind bias, double lambda)
{
  Scenario sc;
  sc.recipe = o.recipe;
  sc.recipe.lambda_value = lambda;
  sc.bias.kind = bias;
  sc.delta = o.delta;
  sc.T_sim = o.T_sim;
  sc.n_runs = o.n_runs;
  sc.master_seed = o.master_seed;
  sc.state_source = o.state_source;
  sc.policy.mpc.terminal = o.terminal;
  sc.policy.mpc.budget = o.budget_constraint;
  return sc;
}

inline std::string cell(BiasKind b, double lambda) { return std::string(to_string(b)) + "/lambda=" + format_number(lambda); }

inline int count_violations(const std::vector<RunMetrics> & runs, const Scenario & sc)
{
  int bad = 0;
  for (const auto & r : runs) {
    const Vector u_o = sc.bias.values(static_cast<int>(r.trajectory.front().x.size()));
    bad += static_cast<int>(check_trajectory(r.trajectory, sc.beta, sc.delta, sc.model, u_o).size());
  }
  return bad;
}

}  // namespace detail

inline constexpr BiasKind kBiases[] = {BiasKind::Mixed, BiasKind::Negative, BiasKind::Positive};
inline constexpr double kLambdas[] = {0.25, 0.75};

/// MPC closed loops for each bias, lambda, horizon and model (beta = 10, R = 10 I).
inline Reproduction reproduce_table1(const ReproduceOptions & o)
{
  Reproduction rep;
  CsvTable csv({"bias", "lambda", "L", "model", "gamma_mean", "gamma_se", "u_sigma_mean", "u_sigma_se", "runs"});
  bool ordering = true, small_gamma = true, budget_ok = true;
  int violations = 0;
  std::string ordering_detail, gamma_detail;
  double max_spend = 0;
  for (BiasKind bias : kBiases) {
    for (double lambda : kLambdas) {
      for (int L : {5, 20}) {
        double gamma[2] = {0, 0};
        for (ModelKind model : {ModelKind::ShortTerm, ModelKind::LongTerm}) {
          Scenario sc = detail::base_scenario(o, bias, lambda);
          sc.beta = 10;
          sc.model = model;
          sc.policy.kind = PolicyKind::Mpc;
          sc.policy.mpc.L = L;
          sc.policy.mpc.r = 10;
          const auto runs = run_monte_carlo(sc, o.jobs, true);
          violations += detail::count_violations(runs, sc);
          const auto s = summarize(runs);
          gamma[model == ModelKind::LongTerm] = s.gamma.mean;
          for (const auto & r : runs) max_spend = std::max(max_spend, r.u_sigma_sim);
          CsvTable::Row row;
          row << to_string(bias) << lambda << L << to_string(model) << s.gamma.mean << s.gamma.stderr_ << s.u_sigma.mean << s.u_sigma.stderr_
              << s.runs;
          csv.add(row);
        }
        const std::string where = detail::cell(bias, lambda) + "/L=" + std::to_string(L);
        if (!(gamma[1] < gamma[0])) {
          ordering = false;
          ordering_detail += where + " long " + format_fixed(gamma[1], 3) + " vs short " + format_fixed(gamma[0], 3) + "; ";
        }
        if (bias != BiasKind::Negative && !(gamma[1] < 0.5)) {
          small_gamma = false;
          gamma_detail += where + " long " + format_fixed(gamma[1], 3) + "; ";
        }
      }
    }
  }
  budget_ok = max_spend <= 10 + 1e-9;
  rep.files.push_back({"table1.csv", csv.str()});
  rep.checks.push_back({"long-term gamma below short-term gamma in every cell", ordering, ordering_detail});
  rep.checks.push_back({"long-term gamma < 0.5 for mixed and positive biases", small_gamma, gamma_detail});
  rep.checks.push_back({"cumulative spend <= beta", budget_ok, "max spend " + format_number(max_spend)});
  rep.checks.push_back({"trajectory invariants hold", violations == 0, std::to_string(violations) + " violations"});
  return rep;
}

inline constexpr double kBetaHigh = 25, kBetaMod = 8, kBetaLow = 5;

/// Long-term MPC (R = 10 I) across three budgets, biases and susceptibilities.
inline Reproduction reproduce_table2(const ReproduceOptions & o)
{
  Reproduction rep;
  CsvTable csv({"bias", "lambda", "beta", "gamma_mean", "gamma_se", "budget_pct_mean", "budget_pct_se", "runs"});
  bool low_full = true, high_partial = true, monotone = true, lambda_order = true;
  int violations = 0;
  std::string low_detail, high_detail, mono_detail, lambda_detail;
  double neg_low_gamma[2] = {0, 0};
  for (BiasKind bias : kBiases) {
    for (double lambda : kLambdas) {
      double previous_gamma = std::numeric_limits<double>::infinity();
      // ascending budgets: gamma must not increase as beta grows
      for (double beta : {kBetaLow, kBetaMod, kBetaHigh}) {
        Scenario sc = detail::base_scenario(o, bias, lambda);
        sc.beta = beta;
        sc.policy.kind = PolicyKind::Mpc;
        sc.policy.mpc.L = o.table2_horizon;
        sc.policy.mpc.r = 10;
        const auto runs = run_monte_carlo(sc, o.jobs, true);
        violations += detail::count_violations(runs, sc);
        const auto s = summarize(runs);
        CsvTable::Row row;
        row << to_string(bias) << lambda << beta << s.gamma.mean << s.gamma.stderr_ << s.budget_pct.mean << s.budget_pct.stderr_ << s.runs;
        csv.add(row);

        const std::string where = detail::cell(bias, lambda) + "/beta=" + format_number(beta);
        if (beta == kBetaLow) {
          double worst = 0;
          for (const auto & r : runs) worst = std::max(worst, std::abs(r.budget_pct - 100));
          if (worst > 1e-6) {
            low_full = false;
            low_detail += where + " |B%-100| = " + format_number(worst) + "; ";
          }
          if (bias == BiasKind::Negative) neg_low_gamma[lambda == 0.75] = s.gamma.mean;
        }
        if (beta == kBetaHigh && !(s.budget_pct.mean < 100)) {
          high_partial = false;
          high_detail += where + " B% " + format_fixed(s.budget_pct.mean, 4) + "; ";
        }
        if (s.gamma.mean > previous_gamma) {
          monotone = false;
          mono_detail += where + " gamma " + format_fixed(s.gamma.mean, 4) + " > " + format_fixed(previous_gamma, 4) + "; ";
        }
        previous_gamma = s.gamma.mean;
      }
    }
  }
  if (!(neg_low_gamma[1] < neg_low_gamma[0])) {
    lambda_order = false;
  }
  lambda_detail = "negative/beta_low gamma: lambda=0.25 " + format_fixed(neg_low_gamma[0], 4) + ", lambda=0.75 " + format_fixed(neg_low_gamma[1], 4);
  rep.files.push_back({"table2.csv", csv.str()});
  rep.checks.push_back({"beta_low: B% = 100 in every run", low_full, low_detail});
  rep.checks.push_back({"beta_high: B% < 100 in every cell", high_partial, high_detail});
  rep.checks.push_back({"gamma nonincreasing in beta", monotone, mono_detail});
  rep.checks.push_back({"beta_low negative bias: lower gamma at lambda = 0.75", lambda_order, lambda_detail});
  rep.checks.push_back({"trajectory invariants hold", violations == 0, std::to_string(violations) + " violations"});
  return rep;
}

/// One realization per budget (negative bias, lambda = 0.25), plus open loop.
inline Reproduction reproduce_fig3(const ReproduceOptions & o)
{
  Reproduction rep;
  const int n = o.recipe.n_agents;
  std::vector<std::string> header{"case", "beta", "t"};
  for (int v = 0; v < n; ++v) header.push_back("x_" + std::to_string(v));
  header.push_back("u_sigma");
  CsvTable csv(std::move(header));

  struct Case
  {
    const char * name;
    double beta;
    PolicyKind kind;
  };
  const Case cases[] = {{"beta_high", kBetaHigh, PolicyKind::Mpc},
                        {"beta_mod", kBetaMod, PolicyKind::Mpc},
                        {"beta_low", kBetaLow, PolicyKind::Mpc},
                        {"open_loop", 0, PolicyKind::None}};
  std::vector<RunMetrics> results;
  for (const auto & c : cases) {
    Scenario sc = detail::base_scenario(o, BiasKind::Negative, 0.25);
    sc.beta = c.beta;
    sc.n_runs = 1;
    sc.policy.kind = c.kind;
    sc.policy.mpc.L = o.table2_horizon;
    sc.policy.mpc.r = 10;
    sc.validate();
    auto run = run_closed_loop(sc, 0, true);
    std::vector<LineSeries> lines;
    for (int v = 0; v < n; ++v) lines.push_back({"x_" + std::to_string(v), {}, {}, false});
    for (const auto & row : run.trajectory) {
      CsvTable::Row r;
      r << c.name << c.beta << row.t;
      for (int v = 0; v < n; ++v) {
        r << row.x[v];
        lines[static_cast<std::size_t>(v)].x.push_back(row.t);
        lines[static_cast<std::size_t>(v)].y.push_back(row.x[v]);
      }
      r << row.u_sigma;
      csv.add(r);
    }
    if (c.kind == PolicyKind::Mpc) {
      rep.files.push_back({std::string("fig3_") + c.name + ".svg",
                           svg_line_chart(lines, "x(t), negative bias, lambda = 0.25, beta = " + format_number(c.beta), "t (steps)",
                                          "latent inclination", false)});
    }
    results.push_back(std::move(run));
  }
  rep.files.insert(rep.files.begin(), {"fig3.csv", csv.str()});

  const Vector high = results[0].trajectory.back().x;
  const Vector mod = results[1].trajectory.back().x;
  const Vector open = results[3].trajectory.back().x;
  rep.checks.push_back({"beta_high: every x_v(T_sim) > 0.9", high.minCoeff() > 0.9, "min " + format_fixed(high.minCoeff(), 4)});
  rep.checks.push_back({"beta_mod: final inclinations above open loop", (mod.array() > open.array()).all(),
                        "mean " + format_fixed(mod.mean(), 4) + " vs " + format_fixed(open.mean(), 4)});
  return rep;
}

/// Mixed bias, beta = 10, R = 15 I: receding-horizon MPC against CCP (T = 20, S = 10).
inline Reproduction reproduce_fig4(const ReproduceOptions & o)
{
  Reproduction rep;
  Scenario base = detail::base_scenario(o, BiasKind::Mixed, 0.25);
  base.beta = 10;
  Scenario mpc_sc = base, ccp_sc = base;
  mpc_sc.policy.kind = PolicyKind::Mpc;
  mpc_sc.policy.mpc.L = o.fig4_horizon;
  mpc_sc.policy.mpc.r = 15;
  ccp_sc.policy.kind = PolicyKind::Ccp;
  ccp_sc.policy.ccp = {20, 15, 10};
  const auto mpc_runs = run_monte_carlo(mpc_sc, o.jobs, true);
  const auto ccp_runs = run_monte_carlo(ccp_sc, o.jobs, true);
  const int violations = detail::count_violations(mpc_runs, mpc_sc) + detail::count_violations(ccp_runs, ccp_sc);

  const int steps = o.T_sim + 1;
  auto mean_series = [&](const std::vector<RunMetrics> & runs, double TrajectoryRow::*field) {
    std::vector<double> m(static_cast<std::size_t>(steps), 0.0);
    for (const auto & r : runs)
      for (int t = 0; t < steps; ++t) m[static_cast<std::size_t>(t)] += r.trajectory[static_cast<std::size_t>(t)].*field / runs.size();
    return m;
  };
  const auto g_mpc = mean_series(mpc_runs, &TrajectoryRow::gamma), g_ccp = mean_series(ccp_runs, &TrajectoryRow::gamma);
  const auto s_mpc = mean_series(mpc_runs, &TrajectoryRow::u_sigma), s_ccp = mean_series(ccp_runs, &TrajectoryRow::u_sigma);

  CsvTable gamma_csv({"t", "gamma_mpc", "gamma_ccp"}), spend_csv({"t", "u_sigma_mpc", "u_sigma_ccp"});
  std::vector<double> ts;
  for (int t = 0; t < steps; ++t) {
    const auto i = static_cast<std::size_t>(t);
    ts.push_back(t);
    CsvTable::Row g, s;
    g << t << g_mpc[i] << g_ccp[i];
    s << t << s_mpc[i] << s_ccp[i];
    gamma_csv.add(g);
    spend_csv.add(s);
  }
  rep.files.push_back({"fig4_gamma.csv", gamma_csv.str()});
  rep.files.push_back({"fig4_spend.csv", spend_csv.str()});
  rep.files.push_back({"fig4.svg", svg_line_chart({{"Γ^MPC_sim", ts, g_mpc, false},
                                                   {"Γ^CCP_sim", ts, g_ccp, true},
                                                   {"u^Σ,MPC_sim", ts, s_mpc, false},
                                                   {"u^Σ,CCP_sim", ts, s_ccp, true}},
                                                  "MPC vs CCP, mixed bias, beta = 10", "t (steps)", "value")});

  bool front = true;
  std::string front_detail;
  for (int t = 0; t <= std::min(10, o.T_sim); ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (s_mpc[i] < s_ccp[i]) {
      front = false;
      front_detail += "t=" + std::to_string(t) + " " + format_fixed(s_mpc[i], 4) + " < " + format_fixed(s_ccp[i], 4) + "; ";
    }
  }
  const double gm = g_mpc.back(), gc = g_ccp.back(), sm = s_mpc.back(), scc = s_ccp.back();
  const double rel = std::abs(sm - scc) / std::max(std::abs(scc), 1e-12);
  rep.checks.push_back({"MPC spend >= CCP spend for t <= 10", front, front_detail});
  rep.checks.push_back({"final gamma: MPC <= CCP + 0.05", gm <= gc + 0.05, format_fixed(gm, 4) + " vs " + format_fixed(gc, 4)});
  rep.checks.push_back({"final spends within 2%", rel <= 0.02,
                        format_fixed(sm, 4) + " vs " + format_fixed(scc, 4) + " (" + format_fixed(100 * rel, 2) + "%)"});
  rep.checks.push_back({"trajectory invariants hold", violations == 0, std::to_string(violations) + " violations"});
  return rep;
}

}  // namespace nudgesim
