// nudgesim: simulate scenarios, design policies and regenerate the experiment tables and figures.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "nudgesim/config.hpp"
#include "nudgesim/experiments.hpp"
#include "nudgesim/io.hpp"

namespace fs = std::filesystem;
using namespace nudgesim;

namespace {

struct CommonFlags
{
  std::string config;
  std::string out;
  int jobs = default_jobs();
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App & cmd, CommonFlags & f, bool config_required)
{
  auto * c = cmd.add_option("--config", f.config, "JSON config file");
  if (config_required) c->required();
  cmd.add_option("--out", f.out, "output directory (fallback: config output_dir, then $NUDGESIM_OUT, then ./nudgesim_out)");
  cmd.add_option("--jobs", f.jobs, "worker threads for Monte Carlo runs")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", f.seed, "override master_seed");
}

fs::path output_dir(const CommonFlags & f, const std::string & from_config)
{
  if (!f.out.empty()) return f.out;
  if (!from_config.empty()) return from_config;
  if (const char * env = std::getenv("NUDGESIM_OUT"); env && *env) return env;
  return "nudgesim_out";
}

Config load(const CommonFlags & f)
{
  Config c = load_config(f.config);
  if (f.seed) c.scenario.master_seed = *f.seed;
  return c;
}

nlohmann::json to_json(const Vector & v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json columns_to_json(const Matrix & m)
{
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) out.push_back(to_json(m.col(k)));
  return out;
}

nlohmann::json estimate_json(const Estimate & e) { return {{"mean", e.mean}, {"stderr", e.stderr_}}; }

void write_json(const fs::path & path, const nlohmann::json & j) { write_file(path, j.dump(2) + "\n"); }

int cmd_simulate(const CommonFlags & f)
{
  const Config c = load(f);
  const auto & sc = c.scenario;
  const auto runs = run_monte_carlo(sc, f.jobs, /* keep_trajectories = */ true);
  const fs::path dir = output_dir(f, c.output_dir);

  int violations = 0;
  nlohmann::json per_run = nlohmann::json::array();
  for (const auto & r : runs) {
    const Vector u_o = sc.bias.values(static_cast<int>(r.trajectory.front().x.size()));
    const auto bad = check_trajectory(r.trajectory, sc.beta, sc.delta, sc.model, u_o);
    for (const auto & b : bad) std::cerr << "run " << r.run_index << ": invariant violated: " << b << '\n';
    violations += static_cast<int>(bad.size());
    per_run.push_back({{"run_index", r.run_index}, {"gamma_sim", r.gamma_sim}, {"u_sigma_sim", r.u_sigma_sim}, {"budget_pct", r.budget_pct}});
  }
  const auto summary = summarize(runs);
  write_file(dir / "trajectory.csv", trajectory_csv(runs.front().trajectory).str());
  write_json(dir / "metrics.json", {{"config", config_to_json(c)},
                                    {"runs", per_run},
                                    {"summary",
                                     {{"n_runs", summary.runs},
                                      {"gamma_sim", estimate_json(summary.gamma)},
                                      {"u_sigma_sim", estimate_json(summary.u_sigma)},
                                      {"budget_pct", estimate_json(summary.budget_pct)}}},
                                    {"invariant_violations", violations}});
  std::cout << "gamma_sim " << format_fixed(summary.gamma.mean, 4) << " +- " << format_fixed(summary.gamma.stderr_, 4) << ", u_sigma_sim "
            << format_fixed(summary.u_sigma.mean, 4) << ", B% " << format_fixed(summary.budget_pct.mean, 2) << " over " << summary.runs
            << " runs\nwrote " << (dir / "trajectory.csv").string() << " and " << (dir / "metrics.json").string() << '\n';
  return violations ? 1 : 0;
}

int cmd_design(const std::string & what, const CommonFlags & f)
{
  const Config c = load(f);
  const auto & sc = c.scenario;
  const InfluenceNetwork net = network_for_run(sc, 0);
  const auto n = net.size();
  const Vector u_o = sc.bias.values(static_cast<int>(n));
  const fs::path dir = output_dir(f, c.output_dir);

  if (what == "ccp") {
    if (sc.policy.kind != PolicyKind::Ccp) throw ConfigError({"policy: design ccp needs a \"ccp\" policy block"});
    const auto & s = sc.policy.ccp;
    const CcpPolicy p = design_ccp(net, u_o, sc.beta, s.T, s.r * Matrix::Identity(n, n), s.S, sc.delta);
    write_json(dir / "ccp.json", {{"u_inf", to_json(p.solved_u)},
                                  {"predicted_mu", to_json(p.predicted_mu)},
                                  {"horizon_T", p.horizon_T},
                                  {"total_spend", s.T * p.solved_u.sum()},
                                  {"objective", p.objective}});
    std::cout << "ccp: total spend " << format_fixed(s.T * p.solved_u.sum(), 6) << ", wrote " << (dir / "ccp.json").string() << '\n';
    return 0;
  }

  if (sc.policy.kind != PolicyKind::Mpc) throw ConfigError({"policy: design mpc-dry-run needs an \"mpc\" policy block"});
  MpcSettings s;
  s.horizon = sc.policy.mpc.L;
  s.R = sc.policy.mpc.r * Matrix::Identity(n, n);
  s.terminal = sc.policy.mpc.terminal;
  s.budget_constraint = sc.policy.mpc.budget;
  s.model = sc.model == ModelKind::LongTerm ? PredictionModel::LongTerm : PredictionModel::ShortTerm;
  const MpcPolicy mpc(net, std::move(s), u_o);
  const Vector mu = c.dry_run_mu.value_or(u_o);
  const Vector u = c.dry_run_u.value_or(u_o);
  const MpcPlan plan = mpc.plan(mu, u, Budget{sc.beta, 0}, sc.delta);
  write_json(dir / "mpc_dry_run.json", {{"first_action", to_json(plan.first)},
                                        {"planned_controls", columns_to_json(plan.controls)},
                                        {"predicted_mu", columns_to_json(plan.predicted)},
                                        {"predicted_cost", plan.cost}});
  std::cout << "mpc-dry-run: first action spends " << format_fixed(plan.first.sum(), 6) << ", wrote " << (dir / "mpc_dry_run.json").string()
            << '\n';
  return 0;
}

int cmd_reproduce(const std::string & target, const CommonFlags & f)
{
  ReproduceOptions o;
  std::string config_out;
  if (!f.config.empty()) {
    const auto j = detail::parse_json_text(detail::read_text_file(f.config, "config"), "config");
    o = parse_reproduce_options(j);
    if (j.contains("output_dir") && j.at("output_dir").is_string()) config_out = j.at("output_dir").get<std::string>();
  }
  if (f.seed) o.master_seed = *f.seed;
  o.jobs = f.jobs;

  Reproduction rep;
  if (target == "table1") rep = reproduce_table1(o);
  else if (target == "table2") rep = reproduce_table2(o);
  else if (target == "fig3") rep = reproduce_fig3(o);
  else rep = reproduce_fig4(o);

  const fs::path dir = output_dir(f, config_out);
  for (const auto & a : rep.files) write_file(dir / a.filename, a.content);
  for (const auto & chk : rep.checks) std::cout << (chk.pass ? "PASS " : "FAIL ") << chk.name << " | " << chk.detail << '\n';
  std::cout << target << ": " << (rep.all_pass() ? "all checks passed" : "some checks failed") << "; wrote";
  for (const auto & a : rep.files) std::cout << ' ' << (dir / a.filename).string();
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Opinion-dynamics nudging toolkit: simulate, design, reproduce", "nudgesim"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string design_target, reproduce_target;

  auto * simulate = app.add_subcommand("simulate", "run the configured scenario; writes trajectory.csv and metrics.json");
  add_common(*simulate, flags, true);

  auto * design = app.add_subcommand("design", "design a policy offline; writes ccp.json or mpc_dry_run.json");
  design->add_option("policy", design_target, "ccp | mpc-dry-run")->required()->check(CLI::IsMember({"ccp", "mpc-dry-run"}));
  add_common(*design, flags, true);

  auto * reproduce = app.add_subcommand("reproduce", "regenerate a table or figure and print its acceptance checks");
  reproduce->add_option("target", reproduce_target, "table1 | table2 | fig3 | fig4")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "fig3", "fig4"}));
  add_common(*reproduce, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(flags);
    if (*design) return cmd_design(design_target, flags);
    return cmd_reproduce(reproduce_target, flags);
  } catch (const ConfigError & e) {
    for (const auto & line : e.diagnostics()) std::cerr << "config error: " << line << '\n';
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
