#pragma once

// Core data types: social graph, labelled dataset, model parameters, and the
// binary logit choice probability shared by every model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdcm/errors.hpp"

namespace sdcm {

using NodeId = std::size_t;
using EdgeId = std::size_t;

/// Row-major so that row i (the feature vector of node i) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Ternary label code: -1, +1 observed; 0 unobserved.
using Label = std::int8_t;
inline constexpr Label kUnobserved = 0;

/// Canonical undirected edge, u < v.
struct Edge {
  NodeId u;
  NodeId v;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Incidence {
  NodeId neighbor;
  EdgeId edge;
};

/// Undirected, unweighted graph. Each edge is stored once in canonical
/// orientation; edges are sorted, so edge ids are stable for a given edge set.
class SocialGraph {
 public:
  SocialGraph() = default;

  /// Accepts either orientation and duplicates (collapsed). Throws
  /// ValidationError on self-loops or out-of-range endpoints.
  SocialGraph(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> pairs) : num_nodes_(num_nodes) {
    edges_.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
      if (a >= num_nodes || b >= num_nodes) {
        throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") outside [0," +
                              std::to_string(num_nodes) + ")");
      }
      if (a == b) throw ValidationError("self-loop at node " + std::to_string(a));
      edges_.push_back(a < b ? Edge{a, b} : Edge{b, a});
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    build_adjacency();
  }

  SocialGraph(std::size_t num_nodes, const std::vector<std::pair<NodeId, NodeId>>& pairs)
      : SocialGraph(num_nodes, std::span<const std::pair<NodeId, NodeId>>(pairs)) {}

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[e]; }

  /// Incidences of node i, sorted by neighbor id.
  std::span<const Incidence> neighbors(NodeId i) const {
    return {incidences_.data() + offsets_[i], incidences_.data() + offsets_[i + 1]};
  }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }

  bool has_edge(NodeId a, NodeId b) const {
    if (a >= num_nodes_ || b >= num_nodes_) return false;
    auto nbrs = neighbors(a);
    return std::binary_search(nbrs.begin(), nbrs.end(), Incidence{b, 0},
                              [](const Incidence& x, const Incidence& y) { return x.neighbor < y.neighbor; });
  }

  /// Directed slot of node i on edge e: 2e for the canonical first endpoint,
  /// 2e+1 for the second. Two slots per undirected edge.
  std::size_t slot(EdgeId e, NodeId i) const { return 2 * e + (edges_[e].v == i ? 1 : 0); }

  friend bool operator==(const SocialGraph& a, const SocialGraph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_;
  }

 private:
  void build_adjacency() {
    offsets_.assign(num_nodes_ + 1, 0);
    for (const Edge& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    for (std::size_t i = 0; i < num_nodes_; ++i) offsets_[i + 1] += offsets_[i];
    incidences_.resize(2 * edges_.size());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (EdgeId e = 0; e < edges_.size(); ++e) {
      incidences_[cursor[edges_[e].u]++] = {edges_[e].v, e};
      incidences_[cursor[edges_[e].v]++] = {edges_[e].u, e};
    }
    // Edges are sorted by (u, v), so each node's list is already ordered by
    // neighbor: lower neighbors come from edges (j, i), higher from (i, j).
  }

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Incidence> incidences_;
};

/// N x d features (row i = x_i) plus ternary labels.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Matrix features, std::vector<Label> labels) : features_(std::move(features)), labels_(std::move(labels)) {
    if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
      throw DimensionError("features have " + std::to_string(features_.rows()) + " rows but " +
                           std::to_string(labels_.size()) + " labels were given");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != -1 && labels_[i] != 0 && labels_[i] != 1) {
        throw ValidationError("label of node " + std::to_string(i) + " is " + std::to_string(labels_[i]) +
                              ", expected -1, 0 or 1");
      }
    }
    if (!features_.allFinite()) throw ValidationError("features contain non-finite values");
  }

  std::size_t num_nodes() const noexcept { return labels_.size(); }
  std::size_t num_features() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const noexcept { return features_; }
  auto x(NodeId i) const { return features_.row(static_cast<Eigen::Index>(i)); }
  std::span<const Label> labels() const noexcept { return labels_; }
  Label y(NodeId i) const { return labels_[i]; }
  bool labeled(NodeId i) const { return labels_[i] != kUnobserved; }

  std::size_t num_labeled() const {
    return static_cast<std::size_t>(std::count_if(labels_.begin(), labels_.end(), [](Label l) { return l != 0; }));
  }

  /// Copy with the given nodes recoded as unobserved; the graph-facing shape
  /// and the features are unchanged.
  Dataset masked(std::span<const NodeId> hidden) const {
    std::vector<Label> labels = labels_;
    for (NodeId i : hidden) labels.at(i) = kUnobserved;
    return Dataset(features_, std::move(labels));
  }

  void check_matches(const SocialGraph& graph) const {
    if (graph.num_nodes() != num_nodes()) {
      throw DimensionError("dataset has " + std::to_string(num_nodes()) + " nodes, graph has " +
                           std::to_string(graph.num_nodes()));
    }
  }

 private:
  Matrix features_;
  std::vector<Label> labels_;
};

/// Single-class model: shared weights W and per-node offsets b.
struct LLGRParams {
  Vector W;
  Vector b;

  static LLGRParams zeros(std::size_t d, std::size_t n) {
    return {Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Zero(static_cast<Eigen::Index>(n))};
  }

  void check(std::size_t d, std::size_t n) const {
    if (static_cast<std::size_t>(W.size()) != d || static_cast<std::size_t>(b.size()) != n) {
      throw DimensionError("LLGR parameters are (" + std::to_string(W.size()) + "," + std::to_string(b.size()) +
                           "), expected (" + std::to_string(d) + "," + std::to_string(n) + ")");
    }
    if (!W.allFinite() || !b.allFinite()) throw ValidationError("LLGR parameters contain non-finite values");
  }
};

/// K-class model: W is K x d (row t = W_t), b is N x K (entry (i,t) = b_it).
struct LCGRParams {
  Matrix W;
  Matrix b;

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(W.rows()); }

  static LCGRParams zeros(std::size_t k, std::size_t d, std::size_t n) {
    return {Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)),
            Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k))};
  }

  LLGRParams class_slice(std::size_t t) const {
    const auto ti = static_cast<Eigen::Index>(t);
    return {W.row(ti).transpose(), b.col(ti)};
  }

  void set_class(std::size_t t, const LLGRParams& p) {
    const auto ti = static_cast<Eigen::Index>(t);
    W.row(ti) = p.W.transpose();
    b.col(ti) = p.b;
  }

  void check(std::size_t d, std::size_t n) const {
    if (W.rows() < 1) throw ValidationError("LCGR needs at least one class");
    if (static_cast<std::size_t>(W.cols()) != d || static_cast<std::size_t>(b.rows()) != n || b.cols() != W.rows()) {
      throw DimensionError("LCGR parameter shapes do not match K=" + std::to_string(W.rows()) +
                           ", d=" + std::to_string(d) + ", N=" + std::to_string(n));
    }
    if (!W.allFinite() || !b.allFinite()) throw ValidationError("LCGR parameters contain non-finite values");
  }
};

struct Hyperparams {
  double lambda = 1.0;
  double rho1 = 1.0;
  double rho2 = 1.0;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    if (!(rho1 > 0.0) || !(rho2 > 0.0)) throw ValidationError("rho1 and rho2 must be > 0");
  }
};

/// log(1 + exp(-m)) without overflow.
inline double logistic_loss(double margin) {
  return margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

/// 1 / (1 + exp(-h)).
inline double sigmoid(double h) {
  if (h >= 0.0) return 1.0 / (1.0 + std::exp(-h));
  const double e = std::exp(h);
  return e / (1.0 + e);
}

/// P(Y = y) = 1 / (1 + exp(-y h)) for y in {-1, +1}.
inline double choice_probability(double h, int y) {
  if (y != 1 && y != -1) throw ContractViolation("choice_probability needs an observed label (-1 or +1)");
  return sigmoid(static_cast<double>(y) * h);
}

}  // namespace sdcm
