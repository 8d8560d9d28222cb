#pragma once

// Synthetic community-structured data: the connectivity (beta) experiment,
// the preference-strength (||W_1||) experiment, and a uniform random graph
// for benchmarks.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sdcm/graph_io.hpp"
#include "sdcm/graph_model.hpp"
#include "sdcm/random.hpp"

namespace sdcm {

struct GroundTruth {
  std::vector<std::size_t> community;
  std::vector<std::size_t> cls;
};

struct SyntheticData {
  SocialGraph graph;
  Dataset data;
  GroundTruth truth;
  std::optional<LCGRParams> true_params;
};

struct BetaExperimentSpec {
  std::size_t n_nodes = 300;
  std::size_t n_communities = 3;
  std::size_t n_classes = 2;
  double p_in = 0.2;
  double p_same_class = 0.01;
  double beta = 1e-4;
  std::size_t dim = 2;
  /// Mixture components are N(+mean * 1, sd^2 I) and N(-mean * 1, sd^2 I).
  double feature_mean = 1.0;
  double feature_sd = 1.0;
  std::uint64_t seed = 0;
  /// Edge sampling stream; defaults to `seed`. Features, communities and
  /// labels never depend on it or on the edge probabilities.
  std::optional<std::uint64_t> graph_seed;

  void validate() const {
    for (double p : {p_in, p_same_class, beta})
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("edge probabilities must lie in [0, 1]");
    if (n_communities < 1 || n_classes < 1 || n_communities > n_nodes)
      throw ValidationError("need 1 <= n_communities <= n_nodes and n_classes >= 1");
    if (dim < 1) throw ValidationError("dim must be >= 1");
    if (!(feature_sd >= 0.0)) throw ValidationError("feature_sd must be >= 0");
  }
};

struct WExperimentSpec {
  std::size_t n_nodes = 200;
  double w_norm = 1.0;
  double b_sigma = 1.0;
  std::size_t dim = 2;
  /// Features are N(feature_mean * 1, feature_sd^2 I).
  double feature_mean = 2.5;
  double feature_sd = 1.0;
  double p_in = 0.2;
  double p_cross = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(w_norm >= 0.0)) throw ValidationError("w_norm must be >= 0");
    if (!(b_sigma >= 0.0) || !(feature_sd >= 0.0)) throw ValidationError("scales must be >= 0");
    for (double p : {p_in, p_cross})
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("edge probabilities must lie in [0, 1]");
    if (n_nodes < 2) throw ValidationError("need at least two nodes");
    if (dim < 1) throw ValidationError("dim must be >= 1");
  }
};

namespace detail {

/// Random equal-size groups: node at shuffled position p gets group p % groups.
inline std::vector<std::size_t> random_groups(std::size_t n, std::size_t groups, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
  std::vector<std::size_t> group(n);
  for (std::size_t p = 0; p < n; ++p) group[order[p]] = p % groups;
  return group;
}

/// Independent Bernoulli(prob(i, j)) edge per unordered pair.
template <class Prob>
SocialGraph bernoulli_graph(std::size_t n, Rng& rng, Prob&& prob) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (uniform01(rng) < prob(i, j)) pairs.emplace_back(i, j);
  return SocialGraph(n, pairs);
}

}  // namespace detail

/// Communities of equal size, class = community mod n_classes, label +1 for
/// even classes and -1 for odd ones. Features come from two Gaussians chosen
/// independently of the community.
inline SyntheticData generate_beta_experiment(const BetaExperimentSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_nodes;
  Rng group_rng = make_rng(spec.seed, 0);
  Rng feature_rng = make_rng(spec.seed, 1);
  Rng edge_rng = make_rng(spec.graph_seed.value_or(spec.seed), 2);

  SyntheticData out;
  out.truth.community = detail::random_groups(n, spec.n_communities, group_rng);
  out.truth.cls.resize(n);
  std::vector<Label> labels(n);
  for (NodeId i = 0; i < n; ++i) {
    out.truth.cls[i] = out.truth.community[i] % spec.n_classes;
    labels[i] = out.truth.cls[i] % 2 == 0 ? Label{1} : Label{-1};
  }
  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double centre = uniform01(feature_rng) < 0.5 ? spec.feature_mean : -spec.feature_mean;
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      features(i, j) = centre + spec.feature_sd * standard_normal(feature_rng);
  }
  out.data = Dataset(std::move(features), std::move(labels));
  const auto& comm = out.truth.community;
  const auto& cls = out.truth.cls;
  out.graph = detail::bernoulli_graph(n, edge_rng, [&](NodeId i, NodeId j) {
    if (comm[i] == comm[j]) return spec.p_in;
    return cls[i] == cls[j] ? spec.p_same_class : spec.beta;
  });
  return out;
}

/// Two equal random classes with W_1 = -W_2 = w_norm * 1 / sqrt(d), offsets
/// b_j ~ N(0, b_sigma^2) and labels drawn from the logit model.
inline SyntheticData generate_w_experiment(const WExperimentSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_nodes;
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Rng group_rng = make_rng(spec.seed, 0);
  Rng feature_rng = make_rng(spec.seed, 1);
  Rng edge_rng = make_rng(spec.seed, 2);
  Rng label_rng = make_rng(spec.seed, 3);

  SyntheticData out;
  out.truth.cls = detail::random_groups(n, 2, group_rng);
  out.truth.community = out.truth.cls;

  LCGRParams truth = LCGRParams::zeros(2, spec.dim, n);
  truth.W.row(0).setConstant(spec.w_norm / std::sqrt(static_cast<double>(spec.dim)));
  truth.W.row(1) = -truth.W.row(0);
  Matrix features(static_cast<Eigen::Index>(n), d);
  std::vector<Label> labels(n);
  for (NodeId i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < d; ++j) features(ii, j) = spec.feature_mean + spec.feature_sd * standard_normal(feature_rng);
    const double offset = spec.b_sigma * standard_normal(feature_rng);
    truth.b.row(ii).setConstant(offset);
    const auto t = static_cast<Eigen::Index>(out.truth.cls[i]);
    const double p = sigmoid(features.row(ii).dot(truth.W.row(t)) + offset);
    labels[i] = uniform01(label_rng) < p ? Label{1} : Label{-1};
  }
  out.data = Dataset(std::move(features), std::move(labels));
  const auto& cls = out.truth.cls;
  out.graph = detail::bernoulli_graph(n, edge_rng,
                                      [&](NodeId i, NodeId j) { return cls[i] == cls[j] ? spec.p_in : spec.p_cross; });
  out.true_params = std::move(truth);
  return out;
}

/// m distinct uniformly random edges on n nodes.
inline SocialGraph random_graph(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n < 2 && m > 0) throw ValidationError("need at least two nodes for edges");
  if (m > n * (n - 1) / 2) throw ValidationError("more edges requested than node pairs");
  Rng rng = make_rng(seed, 4);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(m * 2);
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(m);
  while (pairs.size() < m) {
    NodeId a = uniform_index(rng, n), b = uniform_index(rng, n);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.insert(static_cast<std::uint64_t>(a) * n + b).second) pairs.emplace_back(a, b);
  }
  return SocialGraph(n, pairs);
}

/// node_id,community,class,label
inline std::string format_truth(const GroundTruth& truth, const Dataset& data) {
  std::string out = "node_id,community,class,label\n";
  for (NodeId i = 0; i < data.num_nodes(); ++i)
    out += std::to_string(i) + "," + std::to_string(truth.community[i]) + "," + std::to_string(truth.cls[i]) + "," +
           std::to_string(int{data.y(i)}) + "\n";
  return out;
}

}  // namespace sdcm
