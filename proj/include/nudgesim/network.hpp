#pragma once

/**
 * @file
 * @brief Influence networks: validated construction, the modular random
 * generator and JSON import/export.
 *
 * Edge (v, w) means agent w influences agent v, i.e. P(v, w) > 0.
 */

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "error.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace nudgesim {

struct NetworkRecipe
{
  int n_agents = 20;
  int n_clusters = 7;
  /// probability of an edge between two agents of the same cluster
  double p_link = 0.2;
  /// probability of an edge between agents of different clusters
  double p_cross = 0.7;
  double lambda_value = 0.25;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (n_agents < 1) throw Error(Errc::InvalidArgument, "n_agents must be >= 1");
    if (n_clusters < 1 || n_clusters > n_agents) throw Error(Errc::InvalidArgument, "n_clusters must be in [1, n_agents]");
    if (!(p_link >= 0 && p_link <= 1)) throw Error(Errc::InvalidArgument, "p_link must be in [0, 1]");
    if (!(p_cross >= 0 && p_cross <= 1)) throw Error(Errc::InvalidArgument, "p_cross must be in [0, 1]");
    if (!(lambda_value >= 0 && lambda_value <= 1)) throw Error(Errc::InvalidArgument, "lambda must be in [0, 1]");
  }

  bool operator==(const NetworkRecipe &) const = default;
};

/// Agents with no directed path to an agent of susceptibility < 1 (empty when
/// the network is admissible). Reverse breadth-first search from that set.
inline std::vector<int> unreachable_from_stubborn(const Matrix & weights, const Vector & lambda)
{
  const auto n = static_cast<int>(lambda.size());
  std::vector<char> good(static_cast<std::size_t>(n), 0);
  std::deque<int> frontier;
  for (int w = 0; w < n; ++w) {
    if (lambda[w] < 1.0) {
      good[static_cast<std::size_t>(w)] = 1;
      frontier.push_back(w);
    }
  }
  while (!frontier.empty()) {
    const int w = frontier.front();
    frontier.pop_front();
    for (int v = 0; v < n; ++v) {
      if (!good[static_cast<std::size_t>(v)] && weights(v, w) > 0) {
        good[static_cast<std::size_t>(v)] = 1;
        frontier.push_back(v);
      }
    }
  }
  std::vector<int> bad;
  for (int v = 0; v < n; ++v)
    if (!good[static_cast<std::size_t>(v)]) bad.push_back(v);
  return bad;
}

/// Immutable, validated influence network (row-stochastic P, diagonal Lambda).
class InfluenceNetwork
{
public:
  int size() const { return static_cast<int>(lambda_.size()); }
  const Matrix & weights() const { return weights_; }
  const Vector & susceptibility() const { return lambda_; }
  const std::vector<int> & clusters() const { return clusters_; }

  /// Lambda * P
  const Matrix & social_matrix() const { return lambda_p_; }
  /// diagonal of I - Lambda
  const Vector & bias_weight() const { return one_minus_lambda_; }

  bool has_edge(int v, int w) const { return weights_(v, w) > 0; }

  bool operator==(const InfluenceNetwork & o) const
  {
    return weights_ == o.weights_ && lambda_ == o.lambda_ && clusters_ == o.clusters_;
  }

private:
  friend InfluenceNetwork build_network(const Matrix &, const Vector &, std::vector<int>);

  Matrix weights_;
  Vector lambda_;
  std::vector<int> clusters_;
  Matrix lambda_p_;
  Vector one_minus_lambda_;
};

/**
 * @brief Normalize raw nonnegative influence weights into a network.
 *
 * Throws ZeroRow for agents without influences and AssumptionOneError when
 * some agent cannot reach an agent with susceptibility below one.
 */
inline InfluenceNetwork build_network(const Matrix & raw_weights, const Vector & susceptibility, std::vector<int> clusters = {})
{
  const auto n = susceptibility.size();
  require_dims(raw_weights.rows() == n && raw_weights.cols() == n, "build_network: weights must be N x N with N = len(lambda)");
  if (clusters.empty()) clusters.assign(static_cast<std::size_t>(n), 0);
  require_dims(static_cast<Eigen::Index>(clusters.size()) == n, "build_network: clusters must have length N");
  if (!raw_weights.allFinite() || (raw_weights.array() < 0).any()) {
    throw Error(Errc::InvalidArgument, "build_network: weights must be finite and nonnegative");
  }
  for (Eigen::Index v = 0; v < n; ++v) {
    if (!(susceptibility[v] >= 0 && susceptibility[v] <= 1)) {
      throw Error(Errc::InvalidArgument, "build_network: lambda[" + std::to_string(v) + "] outside [0, 1]");
    }
  }

  InfluenceNetwork net;
  net.weights_ = raw_weights;
  for (Eigen::Index v = 0; v < n; ++v) {
    const double s = raw_weights.row(v).sum();
    if (!(s > 0)) throw Error(Errc::ZeroRow, "agent " + std::to_string(v) + " has no influences");
    net.weights_.row(v) /= s;
  }
  if (auto bad = unreachable_from_stubborn(net.weights_, susceptibility); !bad.empty()) {
    throw AssumptionOneError(std::move(bad));
  }
  net.lambda_ = susceptibility;
  net.clusters_ = std::move(clusters);
  net.lambda_p_ = susceptibility.asDiagonal() * net.weights_;
  net.one_minus_lambda_ = Vector::Ones(n) - susceptibility;
  return net;
}

/**
 * @brief Random modular network.
 *
 * Agents are assigned to clusters round-robin. Each ordered pair (v, w), v != w,
 * becomes an edge with probability p_link inside a cluster and p_cross across
 * clusters; every agent also gets a self-loop. Edge weights are uniform per row.
 */
inline InfluenceNetwork generate_modular(const NetworkRecipe & recipe)
{
  recipe.validate();
  const int n = recipe.n_agents;
  RandomStream rng(recipe.seed);
  std::vector<int> clusters(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) clusters[static_cast<std::size_t>(v)] = v % recipe.n_clusters;

  Matrix raw = Matrix::Identity(n, n);
  for (int v = 0; v < n; ++v) {
    for (int w = 0; w < n; ++w) {
      if (v == w) continue;
      const bool same = clusters[static_cast<std::size_t>(v)] == clusters[static_cast<std::size_t>(w)];
      if (rng.bernoulli(same ? recipe.p_link : recipe.p_cross)) raw(v, w) = 1.0;
    }
  }
  return build_network(raw, Vector::Constant(n, recipe.lambda_value), std::move(clusters));
}

inline nlohmann::json network_to_json(const InfluenceNetwork & net)
{
  nlohmann::json weights = nlohmann::json::array();
  for (int v = 0; v < net.size(); ++v) {
    std::vector<double> row;
    for (int w = 0; w < net.size(); ++w) row.push_back(net.weights()(v, w));
    weights.push_back(row);
  }
  std::vector<double> lambda(net.susceptibility().data(), net.susceptibility().data() + net.size());
  return {{"weights", weights}, {"lambda", lambda}, {"clusters", net.clusters()}};
}

/// Parse {"weights": [[...]], "lambda": [...], "clusters": [...]}; weights may be unnormalized.
inline InfluenceNetwork network_from_json(const nlohmann::json & j)
{
  if (!j.contains("weights") || !j.contains("lambda")) {
    throw Error(Errc::InvalidArgument, "network JSON needs \"weights\" and \"lambda\"");
  }
  const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
  const auto lambda = j.at("lambda").get<std::vector<double>>();
  const auto n = static_cast<Eigen::Index>(lambda.size());
  Matrix raw(n, n);
  require_dims(static_cast<Eigen::Index>(rows.size()) == n, "network JSON: weights must have one row per agent");
  for (Eigen::Index v = 0; v < n; ++v) {
    require_dims(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(v)].size()) == n, "network JSON: weights must be square");
    for (Eigen::Index w = 0; w < n; ++w) raw(v, w) = rows[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)];
  }
  std::vector<int> clusters;
  if (j.contains("clusters")) clusters = j.at("clusters").get<std::vector<int>>();
  return build_network(raw, Eigen::Map<const Vector>(lambda.data(), n), std::move(clusters));
}

}  // namespace nudgesim
