#pragma once

/**
 * @file
 * @brief JSON experiment configs: parsing with field diagnostics, validation
 * and canonical serialization.
 *
 * Shape of a simulate/design config:
 *
 *   {
 *     "master_seed": 7,                      required
 *     "n_runs": 20, "T_sim": 30, "beta": 10, "delta": 0.025,
 *     "bias": "mixed" | "negative" | "positive" | [u_o per agent],
 *     "model": "long" | "short",
 *     "state_source": "expected" | "realized",
 *     "network": {"n_agents": 20, "n_clusters": 7, "p_link": 0.2, "p_cross": 0.7,
 *                 "lambda": 0.25, "regenerate": true, "seed": 1}
 *              | {"weights": [[...]], "lambda": [...]}
 *              | {"file": "net.json"},
 *     "policy": {"mpc": {"L": 5, "R": 10, "terminal_index": "L", "budget_constraint": "paper"}},
 *     "output_dir": "out",
 *     "dry_run": {"mu": [...], "u": [...]}
 *   }
 *
 * The policy object holds exactly one of none, constant, feedback, ccp, mpc.
 */

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "experiments.hpp"

namespace nudgesim {

/// Raised for unusable configs; carries one "field: message" line per problem.
class ConfigError : public std::runtime_error
{
public:
  explicit ConfigError(std::vector<std::string> diagnostics)
      : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics))
  {
  }

  const std::vector<std::string> & diagnostics() const noexcept { return diagnostics_; }

private:
  static std::string join(const std::vector<std::string> & d)
  {
    std::string s;
    for (const auto & line : d) s += (s.empty() ? "" : "\n") + line;
    return s;
  }

  std::vector<std::string> diagnostics_;
};

enum class NetworkSource { Recipe, Inline, File };

struct Config
{
  Scenario scenario;
  NetworkSource network_source = NetworkSource::Recipe;
  std::string network_file;  ///< as written in the config (File source)
  std::string output_dir;    ///< empty when absent
  std::optional<Vector> dry_run_mu, dry_run_u;
};

namespace detail {

/// Collects diagnostics while reading one JSON object.
class FieldReader
{
public:
  FieldReader(const nlohmann::json & obj, std::string prefix, std::vector<std::string> & diag)
      : obj_(obj), prefix_(std::move(prefix)), diag_(diag)
  {
  }

  bool has(const std::string & key)
  {
    seen_.insert(key);
    return obj_.contains(key);
  }

  const nlohmann::json & at(const std::string & key) const { return obj_.at(key); }

  std::string path(const std::string & key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void error(const std::string & key, const std::string & msg) { diag_.push_back(path(key) + ": " + msg); }

  template <typename T>
  void number(const std::string & key, T & out, bool required = false)
  {
    if (!has(key)) {
      if (required) error(key, "required field is missing");
      return;
    }
    const auto & v = obj_.at(key);
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())) {
        error(key, std::is_unsigned_v<T> ? "expected a nonnegative integer" : "expected an integer");
        return;
      }
    } else if (!v.is_number()) {
      error(key, "expected a number");
      return;
    }
    out = v.get<T>();
  }

  void boolean(const std::string & key, bool & out)
  {
    if (!has(key)) return;
    if (!obj_.at(key).is_boolean()) return error(key, "expected true or false");
    out = obj_.at(key).get<bool>();
  }

  template <typename E>
  void choice(const std::string & key, E & out, const std::vector<std::pair<std::string, E>> & options)
  {
    if (!has(key)) return;
    const auto & v = obj_.at(key);
    if (v.is_string()) {
      for (const auto & [name, value] : options) {
        if (v.get<std::string>() == name) {
          out = value;
          return;
        }
      }
    }
    std::string names;
    for (const auto & [name, value] : options) names += (names.empty() ? "" : ", ") + ('"' + name + '"');
    error(key, "expected one of " + names);
  }

  std::optional<Vector> vector(const std::string & key)
  {
    if (!has(key)) return std::nullopt;
    const auto & v = obj_.at(key);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const auto & e) { return e.is_number(); })) {
      error(key, "expected an array of numbers");
      return std::nullopt;
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    return out;
  }

  std::optional<Matrix> matrix(const std::string & key)
  {
    if (!has(key)) return std::nullopt;
    const auto & v = obj_.at(key);
    bool ok = v.is_array() && !v.empty();
    for (const auto & row : v) {
      ok = ok && row.is_array() && row.size() == v[0].size() &&
           std::all_of(row.begin(), row.end(), [](const auto & e) { return e.is_number(); });
    }
    if (!ok) {
      error(key, "expected a rectangular array of number arrays");
      return std::nullopt;
    }
    Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<double>();
    return out;
  }

  /// Flags every key that was never asked for (keys come out sorted, so the order is stable).
  void reject_unknown()
  {
    for (const auto & item : obj_.items()) {
      if (!seen_.count(item.key())) error(item.key(), "unknown field");
    }
  }

private:
  const nlohmann::json & obj_;
  std::string prefix_;
  std::vector<std::string> & diag_;
  std::set<std::string> seen_;
};

inline const std::vector<std::pair<std::string, TerminalIndex>> kTerminalNames{{"L", TerminalIndex::AtL},
                                                                               {"L-1", TerminalIndex::AtLMinus1}};
inline const std::vector<std::pair<std::string, BudgetConstraint>> kBudgetNames{{"paper", BudgetConstraint::Paper},
                                                                                {"total", BudgetConstraint::Total}};
inline const std::vector<std::pair<std::string, ModelKind>> kModelNames{{"long", ModelKind::LongTerm}, {"short", ModelKind::ShortTerm}};
inline const std::vector<std::pair<std::string, StateSource>> kStateNames{{"expected", StateSource::Expected},
                                                                          {"realized", StateSource::Realized}};
inline const std::vector<std::pair<std::string, BiasKind>> kBiasNames{
    {"mixed", BiasKind::Mixed}, {"negative", BiasKind::Negative}, {"positive", BiasKind::Positive}};

template <typename E>
std::string name_of(E value, const std::vector<std::pair<std::string, E>> & options)
{
  for (const auto & [name, v] : options)
    if (v == value) return name;
  return "?";
}

inline nlohmann::json parse_json_text(const std::string & text, const std::string & origin)
{
  try {
    return nlohmann::json::parse(text, nullptr, /* allow_exceptions = */ true, /* ignore_comments = */ false);
  } catch (const nlohmann::json::parse_error & e) {
    throw ConfigError({origin + ": " + e.what()});
  }
}

inline std::string read_text_file(const std::filesystem::path & path, const std::string & field)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError({field + ": cannot read file " + path.string()});
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void read_network(FieldReader & top, Config & c, const std::filesystem::path & base_dir, std::vector<std::string> & diag)
{
  if (!top.has("network")) return;
  const auto & j = top.at("network");
  if (!j.is_object()) return top.error("network", "expected an object");
  FieldReader r(j, "network", diag);
  auto & sc = c.scenario;

  if (j.contains("file") || j.contains("weights")) {
    try {
      if (r.has("file")) {
        if (!j.at("file").is_string()) return r.error("file", "expected a path string");
        c.network_source = NetworkSource::File;
        c.network_file = j.at("file").get<std::string>();
        std::filesystem::path p = c.network_file;
        if (p.is_relative()) p = base_dir / p;
        sc.network = network_from_json(parse_json_text(read_text_file(p, r.path("file")), r.path("file")));
      } else {
        r.has("weights");
        r.has("lambda");
        r.has("clusters");
        c.network_source = NetworkSource::Inline;
        sc.network = network_from_json(j);
      }
      sc.regenerate_network = false;
    } catch (const ConfigError & e) {
      diag.insert(diag.end(), e.diagnostics().begin(), e.diagnostics().end());
    } catch (const nlohmann::json::exception & e) {
      top.error("network", std::string("malformed network: ") + e.what());
    } catch (const Error & e) {
      top.error("network", e.what());
    }
    r.reject_unknown();
    return;
  }

  auto & rec = sc.recipe;
  r.number("n_agents", rec.n_agents);
  r.number("n_clusters", rec.n_clusters);
  r.number("p_link", rec.p_link);
  r.number("p_cross", rec.p_cross);
  r.number("lambda", rec.lambda_value);
  r.boolean("regenerate", sc.regenerate_network);
  r.number("seed", rec.seed, /* required = */ !sc.regenerate_network);
  r.reject_unknown();
  if (rec.n_agents < 1) r.error("n_agents", "must be >= 1");
  if (rec.n_clusters < 1 || rec.n_clusters > rec.n_agents) r.error("n_clusters", "must be in [1, n_agents]");
  if (!(rec.p_link >= 0 && rec.p_link <= 1)) r.error("p_link", "must be in [0, 1]");
  if (!(rec.p_cross >= 0 && rec.p_cross <= 1)) r.error("p_cross", "must be in [0, 1]");
  if (!(rec.lambda_value >= 0 && rec.lambda_value <= 1)) r.error("lambda", "must be in [0, 1]");
}

inline void read_policy(FieldReader & top, PolicySpec & spec, std::vector<std::string> & diag)
{
  if (!top.has("policy")) return top.error("policy", "required field is missing");
  const auto & j = top.at("policy");
  if (!j.is_object() || j.size() != 1) {
    return top.error("policy", "expected an object with exactly one of \"none\", \"constant\", \"feedback\", \"ccp\", \"mpc\"");
  }
  const std::string name = j.begin().key();
  const auto & body = j.begin().value();
  const std::string prefix = "policy." + name;
  if (!body.is_object()) return diag.push_back(prefix + ": expected an object");
  FieldReader r(body, prefix, diag);

  if (name == "none") {
    spec.kind = PolicyKind::None;
  } else if (name == "constant") {
    spec.kind = PolicyKind::Constant;
    r.number("nu", spec.constant.nu);
    r.number("T", spec.constant.T);
    if (!(spec.constant.nu >= 0)) r.error("nu", "must be >= 0");
    if (spec.constant.T < 1) r.error("T", "must be >= 1");
  } else if (name == "feedback") {
    spec.kind = PolicyKind::Feedback;
    spec.feedback.K = r.matrix("K");
    if (r.has("kappa")) {
      double kappa = 0;
      r.number("kappa", kappa);
      spec.feedback.kappa = kappa;
    }
    r.number("u_min", spec.feedback.u_min);
    r.number("u_max", spec.feedback.u_max);
    if (spec.feedback.K && spec.feedback.kappa) r.error("K", "give either K or kappa, not both");
    if (!(0 <= spec.feedback.u_min && spec.feedback.u_min <= spec.feedback.u_max)) r.error("u_max", "bounds must satisfy 0 <= u_min <= u_max");
  } else if (name == "ccp") {
    spec.kind = PolicyKind::Ccp;
    r.number("T", spec.ccp.T);
    r.number("R", spec.ccp.r);
    r.number("S", spec.ccp.S);
    if (spec.ccp.T < 1) r.error("T", "must be >= 1");
    if (!(spec.ccp.r > 0)) r.error("R", "must be > 0");
    if (!(spec.ccp.S >= 0)) r.error("S", "must be >= 0");
  } else if (name == "mpc") {
    spec.kind = PolicyKind::Mpc;
    r.number("L", spec.mpc.L);
    r.number("R", spec.mpc.r);
    r.choice("terminal_index", spec.mpc.terminal, kTerminalNames);
    r.choice("budget_constraint", spec.mpc.budget, kBudgetNames);
    if (spec.mpc.L < 1) r.error("L", "must be >= 1");
    if (!(spec.mpc.r > 0)) r.error("R", "must be > 0");
  } else {
    return top.error("policy", "unknown policy \"" + name + "\"");
  }
  r.reject_unknown();
}

/// Cross-field checks that need the whole scenario (network assumptions, bias vs delta).
inline void check_scenario(const Config & c, std::vector<std::string> & diag)
{
  const auto & sc = c.scenario;
  std::optional<InfluenceNetwork> net;
  try {
    net = network_for_run(sc, 0);
  } catch (const Error & e) {
    diag.push_back(std::string("network: ") + e.what());
    return;
  }
  const auto n = net->size();
  if (sc.bias.kind == BiasKind::Custom && sc.bias.custom.size() != n) {
    diag.push_back("bias: has " + std::to_string(sc.bias.custom.size()) + " entries, the network has " + std::to_string(n) + " agents");
    return;
  }
  const Vector u_o = sc.bias.values(static_cast<int>(n));
  if ((u_o.array() < 0).any() || (u_o.array() > 1).any()) diag.push_back("bias: entries must be in [0, 1]");
  if (sc.delta > 0 && !(sc.delta < u_o.minCoeff())) {
    diag.push_back("delta: Assumption 2 violated: delta = " + format_number(sc.delta) + " must be below min u_o = " +
                   format_number(u_o.minCoeff()));
  }
  if (u_o.maxCoeff() > 1 - sc.delta) diag.push_back("bias: entries must not exceed 1 - delta = " + format_number(1 - sc.delta));
  if (sc.policy.kind == PolicyKind::Feedback && sc.policy.feedback.K &&
      (sc.policy.feedback.K->rows() != n || sc.policy.feedback.K->cols() != n)) {
    diag.push_back("policy.feedback.K: must be " + std::to_string(n) + " x " + std::to_string(n));
  }
  const auto check_len = [&](const std::optional<Vector> & v, const char * field) {
    if (v && v->size() != n) diag.push_back(std::string(field) + ": must have " + std::to_string(n) + " entries");
  };
  check_len(c.dry_run_mu, "dry_run.mu");
  check_len(c.dry_run_u, "dry_run.u");
}

}  // namespace detail

/**
 * @brief Parse and validate a config document.
 *
 * Relative network file paths resolve against `base_dir`. Every problem found is
 * reported; field checks run in a fixed order so the diagnostics are stable.
 */
inline Config parse_config(const nlohmann::json & j, const std::filesystem::path & base_dir = ".")
{
  std::vector<std::string> diag;
  if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});
  Config c;
  auto & sc = c.scenario;
  detail::FieldReader r(j, "", diag);

  r.number("master_seed", sc.master_seed, /* required = */ true);
  r.number("n_runs", sc.n_runs);
  r.number("T_sim", sc.T_sim);
  r.number("beta", sc.beta);
  r.number("delta", sc.delta);
  if (r.has("bias")) {
    if (j.at("bias").is_array()) {
      if (auto v = r.vector("bias")) {
        sc.bias.kind = BiasKind::Custom;
        sc.bias.custom = *v;
      }
    } else {
      r.choice("bias", sc.bias.kind, detail::kBiasNames);
    }
  }
  r.choice("model", sc.model, detail::kModelNames);
  r.choice("state_source", sc.state_source, detail::kStateNames);
  detail::read_network(r, c, base_dir, diag);
  detail::read_policy(r, sc.policy, diag);
  if (r.has("output_dir")) {
    if (j.at("output_dir").is_string()) c.output_dir = j.at("output_dir").get<std::string>();
    else r.error("output_dir", "expected a path string");
  }
  if (r.has("dry_run")) {
    if (!j.at("dry_run").is_object()) {
      r.error("dry_run", "expected an object");
    } else {
      detail::FieldReader d(j.at("dry_run"), "dry_run", diag);
      c.dry_run_mu = d.vector("mu");
      c.dry_run_u = d.vector("u");
      d.reject_unknown();
    }
  }
  r.reject_unknown();

  if (sc.n_runs < 1) r.error("n_runs", "must be >= 1");
  if (sc.T_sim < 1) r.error("T_sim", "must be >= 1");
  if (!(sc.beta >= 0) || !std::isfinite(sc.beta)) r.error("beta", "must be finite and >= 0");
  if (!(sc.delta >= 0 && sc.delta < 0.5)) r.error("delta", "must be in [0, 0.5)");

  if (diag.empty()) detail::check_scenario(c, diag);
  if (!diag.empty()) throw ConfigError(std::move(diag));
  return c;
}

inline Config parse_config_text(const std::string & text, const std::filesystem::path & base_dir = ".")
{
  return parse_config(detail::parse_json_text(text, "config"), base_dir);
}

inline Config load_config(const std::filesystem::path & path)
{
  return parse_config_text(detail::read_text_file(path, "config"), path.has_parent_path() ? path.parent_path() : ".");
}

/// Canonical JSON form; parse_config(config_to_json(c)) reproduces c.
inline nlohmann::json config_to_json(const Config & c)
{
  using nlohmann::json;
  const auto & sc = c.scenario;
  const auto vec = [](const Vector & v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["master_seed"] = sc.master_seed;
  j["n_runs"] = sc.n_runs;
  j["T_sim"] = sc.T_sim;
  j["beta"] = sc.beta;
  j["delta"] = sc.delta;
  if (sc.bias.kind == BiasKind::Custom) j["bias"] = vec(sc.bias.custom);
  else j["bias"] = detail::name_of(sc.bias.kind, detail::kBiasNames);
  j["model"] = detail::name_of(sc.model, detail::kModelNames);
  j["state_source"] = detail::name_of(sc.state_source, detail::kStateNames);

  switch (c.network_source) {
    case NetworkSource::File: j["network"] = {{"file", c.network_file}}; break;
    case NetworkSource::Inline: j["network"] = network_to_json(*sc.network); break;
    case NetworkSource::Recipe: {
      const auto & rec = sc.recipe;
      j["network"] = {{"n_agents", rec.n_agents}, {"n_clusters", rec.n_clusters}, {"p_link", rec.p_link}, {"p_cross", rec.p_cross},
                      {"lambda", rec.lambda_value}, {"regenerate", sc.regenerate_network}, {"seed", rec.seed}};
      break;
    }
  }

  const auto & p = sc.policy;
  switch (p.kind) {
    case PolicyKind::None: j["policy"] = {{"none", json::object()}}; break;
    case PolicyKind::Constant: j["policy"] = {{"constant", {{"nu", p.constant.nu}, {"T", p.constant.T}}}}; break;
    case PolicyKind::Feedback: {
      json f = {{"u_min", p.feedback.u_min}, {"u_max", p.feedback.u_max}};
      if (p.feedback.kappa) f["kappa"] = *p.feedback.kappa;
      if (p.feedback.K) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < p.feedback.K->rows(); ++i) rows.push_back(vec(p.feedback.K->row(i).transpose()));
        f["K"] = rows;
      }
      j["policy"] = {{"feedback", f}};
      break;
    }
    case PolicyKind::Ccp: j["policy"] = {{"ccp", {{"T", p.ccp.T}, {"R", p.ccp.r}, {"S", p.ccp.S}}}}; break;
    case PolicyKind::Mpc:
      j["policy"] = {{"mpc",
                      {{"L", p.mpc.L},
                       {"R", p.mpc.r},
                       {"terminal_index", detail::name_of(p.mpc.terminal, detail::kTerminalNames)},
                       {"budget_constraint", detail::name_of(p.mpc.budget, detail::kBudgetNames)}}}};
      break;
  }
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  if (c.dry_run_mu || c.dry_run_u) {
    json d = json::object();
    if (c.dry_run_mu) d["mu"] = vec(*c.dry_run_mu);
    if (c.dry_run_u) d["u"] = vec(*c.dry_run_u);
    j["dry_run"] = d;
  }
  return j;
}

/**
 * @brief Overrides for the reproduce targets.
 *
 * Accepted keys: master_seed, n_runs, delta, T_sim, state_source, network
 * (recipe fields except seed), terminal_index, budget_constraint,
 * table2_horizon, fig4_horizon. Anything else is reported as unknown.
 */
inline ReproduceOptions parse_reproduce_options(const nlohmann::json & j, ReproduceOptions o = {})
{
  std::vector<std::string> diag;
  if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});
  detail::FieldReader r(j, "", diag);
  r.number("master_seed", o.master_seed);
  r.number("n_runs", o.n_runs);
  r.number("delta", o.delta);
  r.number("T_sim", o.T_sim);
  r.choice("state_source", o.state_source, detail::kStateNames);
  r.choice("terminal_index", o.terminal, detail::kTerminalNames);
  r.choice("budget_constraint", o.budget_constraint, detail::kBudgetNames);
  r.number("table2_horizon", o.table2_horizon);
  r.number("fig4_horizon", o.fig4_horizon);
  if (r.has("network")) {
    if (!j.at("network").is_object()) {
      r.error("network", "expected an object");
    } else {
      detail::FieldReader n(j.at("network"), "network", diag);
      n.number("n_agents", o.recipe.n_agents);
      n.number("n_clusters", o.recipe.n_clusters);
      n.number("p_link", o.recipe.p_link);
      n.number("p_cross", o.recipe.p_cross);
      n.reject_unknown();
    }
  }
  r.has("output_dir");  // shared with simulate configs; the CLI reads it
  r.reject_unknown();
  if (o.n_runs < 1) r.error("n_runs", "must be >= 1");
  if (o.T_sim < 1) r.error("T_sim", "must be >= 1");
  if (!(o.delta >= 0 && o.delta < 0.2)) r.error("delta", "must be in [0, 0.2) so that every bias profile satisfies Assumption 2");
  if (o.table2_horizon < 1) r.error("table2_horizon", "must be >= 1");
  if (o.fig4_horizon < 1) r.error("fig4_horizon", "must be >= 1");
  try {
    o.recipe.validate();
  } catch (const Error & e) {
    diag.push_back(std::string("network: ") + e.what());
  }
  if (!diag.empty()) throw ConfigError(std::move(diag));
  return o;
}

}  // namespace nudgesim
