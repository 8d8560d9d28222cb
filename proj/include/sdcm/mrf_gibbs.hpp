#pragma once

// Gibbs sampling from the latent-class MRF prior
//   P(z; b) ∝ prod_{(i,j)} exp(-lambda sum_t (b_it - b_jt)^2 1(z_i = z_j = t)),
// smoothed marginal estimates, and the community-blocked parallel sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sdcm/graph_model.hpp"
#include "sdcm/parallel.hpp"
#include "sdcm/random.hpp"

namespace sdcm {

/// Non-owning view of the prior: graph, N x K offsets and lambda.
struct MRFSpec {
  const SocialGraph& graph;
  const Matrix& b;
  double lambda;

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(b.cols()); }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    if (b.cols() < 1) throw ValidationError("MRF needs at least one class");
    if (b.cols() > std::numeric_limits<std::uint16_t>::max()) throw ValidationError("too many classes");
    if (static_cast<std::size_t>(b.rows()) != graph.num_nodes()) {
      throw DimensionError("offset matrix has " + std::to_string(b.rows()) + " rows, graph has " +
                           std::to_string(graph.num_nodes()) + " nodes");
    }
  }
};

using ClassIndex = std::uint16_t;

/// S x N class assignments, one sample per row.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::size_t num_samples, std::size_t num_nodes)
      : num_samples_(num_samples), num_nodes_(num_nodes), z_(num_samples * num_nodes, 0) {}

  std::size_t size() const noexcept { return num_samples_; }
  bool empty() const noexcept { return num_samples_ == 0; }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::span<const ClassIndex> sample(std::size_t s) const { return {z_.data() + s * num_nodes_, num_nodes_}; }
  std::span<ClassIndex> sample(std::size_t s) { return {z_.data() + s * num_nodes_, num_nodes_}; }
  ClassIndex at(std::size_t s, NodeId i) const { return z_[s * num_nodes_ + i]; }
  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  std::size_t num_samples_ = 0;
  std::size_t num_nodes_ = 0;
  std::vector<ClassIndex> z_;
};

struct MarginalEstimates {
  Matrix node;       // N x K
  Matrix edge_pair;  // E x K^2; row e holds P(z_u = m, z_v = q) at m*K + q, (u, v) canonical
  std::size_t sample_count = 0;

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(node.cols()); }
  double pair(EdgeId e, std::size_t m, std::size_t q) const {
    return edge_pair(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(m * num_classes() + q));
  }
};

namespace detail {

/// Unnormalized log-weights -lambda sum_{j in N(i), z_j = t} (b_it - b_jt)^2,
/// restricted to neighbours with the same block id when `block_of` is given.
inline void conditional_into(NodeId i, std::span<const ClassIndex> z, const MRFSpec& spec,
                             const std::vector<std::size_t>* block_of, std::span<double> out) {
  const std::size_t K = out.size();
  std::fill(out.begin(), out.end(), 0.0);
  if (spec.lambda > 0.0) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (const Incidence& inc : spec.graph.neighbors(i)) {
      if (block_of != nullptr && (*block_of)[inc.neighbor] != (*block_of)[i]) continue;
      const std::size_t t = z[inc.neighbor];
      const double diff = spec.b(ii, static_cast<Eigen::Index>(t)) - spec.b(static_cast<Eigen::Index>(inc.neighbor),
                                                                            static_cast<Eigen::Index>(t));
      out[t] -= spec.lambda * diff * diff;
    }
  }
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (std::size_t t = 0; t < K; ++t) {
    out[t] = std::exp(out[t] - top);
    total += out[t];
  }
  for (double& p : out) p /= total;
}

inline ClassIndex draw_class(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < probs.size(); ++t) {
    acc += probs[t];
    if (u < acc) return static_cast<ClassIndex>(t);
  }
  return static_cast<ClassIndex>(probs.size() - 1);
}

inline void check_schedule(std::size_t n_samples, std::size_t thin) {
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
  if (thin < 1) throw ValidationError("thin must be >= 1");
}

/// Systematic-scan chain over `nodes` (ascending), writing their columns of `out`.
inline void run_chain(const MRFSpec& spec, std::span<const NodeId> nodes, const std::vector<std::size_t>* block_of,
                      std::size_t burn_in, std::size_t thin, Rng rng, SampleSet& out) {
  const std::size_t K = spec.num_classes();
  std::vector<ClassIndex> z(spec.graph.num_nodes(), 0);
  for (NodeId i : nodes) z[i] = static_cast<ClassIndex>(uniform_index(rng, K));
  std::vector<double> probs(K);
  auto sweep = [&] {
    for (NodeId i : nodes) {
      conditional_into(i, z, spec, block_of, probs);
      z[i] = draw_class(probs, rng);
    }
  };
  for (std::size_t s = 0; s < burn_in; ++s) sweep();
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t s = 0; s < thin; ++s) sweep();
    auto row = out.sample(k);
    for (NodeId i : nodes) row[i] = z[i];
  }
}

}  // namespace detail

/// P(z_i = t | z_-i), normalized over t.
inline std::vector<double> gibbs_conditional(NodeId i, std::span<const ClassIndex> z, const MRFSpec& spec) {
  spec.validate();
  if (z.size() != spec.graph.num_nodes()) throw DimensionError("assignment length does not match the graph");
  for (ClassIndex t : z)
    if (t >= spec.num_classes()) throw ValidationError("assignment contains a class outside [0, K)");
  std::vector<double> probs(spec.num_classes());
  detail::conditional_into(i, z, spec, nullptr, probs);
  return probs;
}

/// Systematic-scan Gibbs over all nodes in index order: burn_in sweeps, then
/// one recorded assignment every `thin` sweeps.
inline SampleSet sample_prior(const MRFSpec& spec, std::size_t n_samples, std::size_t burn_in, std::size_t thin,
                              std::uint64_t seed) {
  spec.validate();
  detail::check_schedule(n_samples, thin);
  std::vector<NodeId> nodes(spec.graph.num_nodes());
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  SampleSet out(n_samples, spec.graph.num_nodes());
  detail::run_chain(spec, nodes, nullptr, burn_in, thin, make_rng(seed, 0), out);
  return out;
}

/// Smoothed frequencies: node (count + s) / (S + K s), edge pairs
/// (count + s) / (S + K^2 s).
inline MarginalEstimates estimate_marginals(const SampleSet& samples, const MRFSpec& spec, double smoothing,
                                            int workers = 1) {
  spec.validate();
  if (samples.empty()) throw ValidationError("cannot estimate marginals from an empty sample set");
  if (samples.num_nodes() != spec.graph.num_nodes()) throw DimensionError("samples do not match the graph");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ValidationError("smoothing must be finite and >= 0");
  const std::size_t K = spec.num_classes();
  const std::size_t S = samples.size();
  const auto k = static_cast<Eigen::Index>(K);
  MarginalEstimates est;
  est.sample_count = S;
  est.node = Matrix::Zero(static_cast<Eigen::Index>(spec.graph.num_nodes()), k);
  est.edge_pair = Matrix::Zero(static_cast<Eigen::Index>(spec.graph.num_edges()), k * k);

  parallel::for_each_index(spec.graph.num_nodes(), workers, [&](std::size_t i) {
    auto row = est.node.row(static_cast<Eigen::Index>(i));
    for (std::size_t s = 0; s < S; ++s) row[samples.at(s, i)] += 1.0;
    row.array() += smoothing;
    row /= row.sum();
  });
  parallel::for_each_index(spec.graph.num_edges(), workers, [&](std::size_t e) {
    const Edge& edge = spec.graph.edge(e);
    auto row = est.edge_pair.row(static_cast<Eigen::Index>(e));
    for (std::size_t s = 0; s < S; ++s)
      row[static_cast<Eigen::Index>(samples.at(s, edge.u) * K + samples.at(s, edge.v))] += 1.0;
    row.array() += smoothing;
    row /= row.sum();
  });
  return est;
}

struct BlockPartition {
  std::vector<std::vector<NodeId>> blocks;  // each ascending; ordered by first node
  std::vector<std::size_t> block_of;        // node -> block index
  std::vector<EdgeId> cut_edges;

  std::size_t size() const noexcept { return blocks.size(); }

  /// Builds the partition from a node -> label map (labels arbitrary).
  static BlockPartition from_labels(const SocialGraph& graph, std::span<const std::size_t> labels) {
    const std::size_t n = graph.num_nodes();
    std::map<std::size_t, std::size_t> relabel;
    BlockPartition p;
    p.block_of.resize(n);
    for (NodeId i = 0; i < n; ++i) {
      auto [it, inserted] = relabel.try_emplace(labels[i], p.blocks.size());
      if (inserted) p.blocks.emplace_back();
      p.block_of[i] = it->second;
      p.blocks[it->second].push_back(i);
    }
    for (EdgeId e = 0; e < graph.num_edges(); ++e)
      if (p.block_of[graph.edge(e).u] != p.block_of[graph.edge(e).v]) p.cut_edges.push_back(e);
    return p;
  }
};

namespace detail {

/// Weighted multigraph of communities; adjacency lists exclude self-loops.
struct CommunityGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> degree;
  double two_m = 0.0;

  static CommunityGraph from(const SocialGraph& graph) {
    CommunityGraph cg;
    const std::size_t n = graph.num_nodes();
    cg.adj.resize(n);
    cg.degree.resize(n);
    for (NodeId i = 0; i < n; ++i) {
      for (const Incidence& inc : graph.neighbors(i)) cg.adj[i].emplace_back(inc.neighbor, 1.0);
      cg.degree[i] = static_cast<double>(graph.degree(i));
    }
    cg.two_m = 2.0 * static_cast<double>(graph.num_edges());
    return cg;
  }

  /// Collapses nodes with equal (compact) labels into single nodes.
  CommunityGraph collapse(std::span<const std::size_t> labels, std::size_t count) const {
    CommunityGraph out;
    out.adj.resize(count);
    out.degree.assign(count, 0.0);
    out.two_m = two_m;
    std::vector<std::map<std::size_t, double>> links(count);
    for (std::size_t i = 0; i < adj.size(); ++i) {
      out.degree[labels[i]] += degree[i];
      for (const auto& [j, w] : adj[i])
        if (labels[i] != labels[j]) links[labels[i]][labels[j]] += w;
    }
    for (std::size_t a = 0; a < count; ++a) out.adj[a].assign(links[a].begin(), links[a].end());
    return out;
  }
};

/// One round of Louvain local moving; returns compact labels and their count.
inline std::pair<std::vector<std::size_t>, std::size_t> local_moving(const CommunityGraph& cg, Rng& rng) {
  const std::size_t n = cg.adj.size();
  std::vector<std::size_t> comm(n);
  std::iota(comm.begin(), comm.end(), std::size_t{0});
  if (cg.two_m > 0.0) {
    std::vector<double> tot = cg.degree;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);

    std::vector<double> links(n, 0.0);
    std::vector<std::size_t> touched;
    for (int pass = 0; pass < 32; ++pass) {
      bool moved = false;
      for (std::size_t i : order) {
        const double ki = cg.degree[i];
        if (ki == 0.0) continue;
        const std::size_t own = comm[i];
        tot[own] -= ki;
        touched.clear();
        for (const auto& [j, w] : cg.adj[i]) {
          const std::size_t c = comm[j];
          if (links[c] == 0.0) touched.push_back(c);
          links[c] += w;
        }
        std::size_t best = own;
        double best_gain = links[own] - tot[own] * ki / cg.two_m;
        std::sort(touched.begin(), touched.end());
        for (std::size_t c : touched) {
          const double gain = links[c] - tot[c] * ki / cg.two_m;
          if (gain > best_gain + 1e-12) {
            best_gain = gain;
            best = c;
          }
        }
        for (std::size_t c : touched) links[c] = 0.0;
        links[own] = 0.0;
        tot[best] += ki;
        if (best != own) {
          comm[i] = best;
          moved = true;
        }
      }
      if (!moved) break;
    }
  }
  std::vector<std::size_t> compact(n, n);
  std::size_t count = 0;
  for (auto& c : comm) {
    if (compact[c] == n) compact[c] = count++;
    c = compact[c];
  }
  return {std::move(comm), count};
}

/// Louvain levels until no node moves or at most `target` communities
/// remain; returns a community label per node.
inline std::vector<std::size_t> louvain(const SocialGraph& graph, std::size_t target, std::uint64_t seed) {
  CommunityGraph cg = CommunityGraph::from(graph);
  Rng rng = make_rng(seed, 0x10u);
  std::vector<std::size_t> label(graph.num_nodes());
  std::iota(label.begin(), label.end(), std::size_t{0});
  std::size_t count = graph.num_nodes();
  while (count > target) {
    auto [comm, next] = local_moving(cg, rng);
    if (next == count) break;
    for (auto& l : label) l = comm[l];
    cg = cg.collapse(comm, next);
    count = next;
  }
  return label;
}

}  // namespace detail

/// Greedy-modularity partition into exactly c blocks: Louvain levels down to
/// a few hundred communities, then pairwise merges by modularity gain or breadth-first splits of the
/// largest block.
inline BlockPartition partition_blocks(const SocialGraph& graph, std::size_t c, std::uint64_t seed) {
  const std::size_t n = graph.num_nodes();
  if (c < 1 || c > n) throw ValidationError("block count must be in [1, N]");
  auto start = BlockPartition::from_labels(graph, detail::louvain(graph, std::max<std::size_t>(c, 256), seed));
  std::vector<std::vector<NodeId>> blocks = std::move(start.blocks);
  std::vector<std::size_t> block_of = std::move(start.block_of);
  const double m = static_cast<double>(graph.num_edges());

  if (blocks.size() > c) {
    // Community graph: degree sums and inter-community edge counts.
    std::vector<double> deg(blocks.size(), 0.0);
    std::vector<bool> alive(blocks.size(), true);
    std::map<std::pair<std::size_t, std::size_t>, double> between;
    for (NodeId i = 0; i < n; ++i) deg[block_of[i]] += static_cast<double>(graph.degree(i));
    for (const Edge& e : graph.edges()) {
      std::size_t a = block_of[e.u], b = block_of[e.v];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      between[{a, b}] += 1.0;
    }
    std::size_t count = blocks.size();
    while (count > c) {
      std::pair<std::size_t, std::size_t> pick{0, 0};
      double pick_gain = -std::numeric_limits<double>::infinity();
      bool have = false;
      if (m > 0.0) {
        for (const auto& [key, links] : between) {
          const double gain = links / m - deg[key.first] * deg[key.second] / (2.0 * m * m);
          if (!have || gain > pick_gain) {
            pick = key;
            pick_gain = gain;
            have = true;
          }
        }
      }
      // Best unconnected merge: the two smallest communities by (degree, size).
      std::vector<std::size_t> live;
      for (std::size_t a = 0; a < blocks.size(); ++a)
        if (alive[a]) live.push_back(a);
      std::partial_sort(live.begin(), live.begin() + 2, live.end(), [&](std::size_t a, std::size_t b) {
        if (deg[a] != deg[b]) return deg[a] < deg[b];
        if (blocks[a].size() != blocks[b].size()) return blocks[a].size() < blocks[b].size();
        return a < b;
      });
      const std::pair<std::size_t, std::size_t> loose{std::min(live[0], live[1]), std::max(live[0], live[1])};
      const double loose_gain = m > 0.0 ? -deg[loose.first] * deg[loose.second] / (2.0 * m * m) : 0.0;
      if (!have || loose_gain > pick_gain) pick = loose;

      const auto [a, b] = pick;
      for (NodeId i : blocks[b]) block_of[i] = a;
      blocks[a].insert(blocks[a].end(), blocks[b].begin(), blocks[b].end());
      blocks[b].clear();
      deg[a] += deg[b];
      alive[b] = false;
      std::map<std::pair<std::size_t, std::size_t>, double> next;
      for (const auto& [key, links] : between) {
        std::size_t x = key.first == b ? a : key.first;
        std::size_t y = key.second == b ? a : key.second;
        if (x == y) continue;
        if (x > y) std::swap(x, y);
        next[{x, y}] += links;
      }
      between = std::move(next);
      --count;
    }
  }

  while (true) {
    std::size_t live = 0;
    for (const auto& blk : blocks) live += blk.empty() ? 0 : 1;
    if (live >= c) break;
    std::size_t largest = blocks.size();
    for (std::size_t a = 0; a < blocks.size(); ++a)
      if (largest == blocks.size() || blocks[a].size() > blocks[largest].size()) largest = a;
    auto& blk = blocks[largest];
    std::sort(blk.begin(), blk.end());
    // Breadth-first order inside the block keeps each half locally connected.
    std::vector<NodeId> order;
    std::vector<bool> seen(n, false);
    for (NodeId root : blk) {
      if (seen[root]) continue;
      std::queue<NodeId> queue;
      queue.push(root);
      seen[root] = true;
      while (!queue.empty()) {
        const NodeId i = queue.front();
        queue.pop();
        order.push_back(i);
        for (const Incidence& inc : graph.neighbors(i)) {
          if (!seen[inc.neighbor] && block_of[inc.neighbor] == largest) {
            seen[inc.neighbor] = true;
            queue.push(inc.neighbor);
          }
        }
      }
    }
    const std::size_t half = order.size() / 2;
    std::vector<NodeId> second(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
    blk.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    for (NodeId i : second) block_of[i] = blocks.size();
    blocks.push_back(std::move(second));
  }
  return BlockPartition::from_labels(graph, block_of);
}

/// Independent chain per block using only within-block edges. Block k draws
/// from the stream derive_seed(seed, k), so one block reproduces sample_prior.
inline SampleSet sample_prior_blocked(const MRFSpec& spec, const BlockPartition& partition, std::size_t n_samples,
                                      std::size_t burn_in, std::size_t thin, std::uint64_t seed, int workers = 1) {
  spec.validate();
  detail::check_schedule(n_samples, thin);
  if (partition.block_of.size() != spec.graph.num_nodes()) throw DimensionError("partition does not match the graph");
  SampleSet out(n_samples, spec.graph.num_nodes());
  parallel::for_each_index(
      partition.size(), workers,
      [&](std::size_t k) {
        detail::run_chain(spec, partition.blocks[k], &partition.block_of, burn_in, thin, make_rng(seed, k), out);
      },
      parallel::Schedule::kDynamic);
  return out;
}

/// CSV dump, one sample per row.
inline std::string format_samples(const SampleSet& samples) {
  std::string out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    auto row = samples.sample(s);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(row[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace sdcm
