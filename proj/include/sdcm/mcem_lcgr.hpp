#pragma once

// Monte Carlo EM for the latent-class model: the E-step samples the MRF
// prior and forms node/edge posteriors; the M-step runs one weighted ADMM
// fit per class.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sdcm/admm_solver.hpp"
#include "sdcm/graph_model.hpp"
#include "sdcm/mrf_gibbs.hpp"
#include "sdcm/parallel.hpp"
#include "sdcm/random.hpp"

namespace sdcm {

struct PosteriorEstimates {
  Matrix node;        // N x K, q(z_i = t)
  Matrix edge_same;   // E x K, q(z_u = z_v = t)
  std::size_t sample_count = 0;

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(node.cols()); }

  std::vector<double> node_column(std::size_t t) const {
    const Vector col = node.col(static_cast<Eigen::Index>(t));
    return {col.data(), col.data() + col.size()};
  }
  std::vector<double> edge_column(std::size_t t) const {
    const Vector col = edge_same.col(static_cast<Eigen::Index>(t));
    return {col.data(), col.data() + col.size()};
  }

  /// Every node and edge fully in class 0 of K classes.
  static PosteriorEstimates degenerate(std::size_t n, std::size_t e, std::size_t K) {
    PosteriorEstimates p;
    p.node = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
    p.edge_same = Matrix::Zero(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(K));
    p.node.col(0).setOnes();
    p.edge_same.col(0).setOnes();
    return p;
  }
};

struct MCEMConfig {
  std::size_t K = 2;
  double lambda = 1.0;
  double rho1 = 1.0;
  double rho2 = 1.0;
  /// Sample count per EM iteration; iterations past the end reuse the last
  /// entry. Empty means schedule_base * (1 + iter).
  std::vector<std::size_t> schedule;
  std::size_t schedule_base = 500;
  std::size_t burn_in = 200;
  std::size_t thin = 1;
  std::size_t blocks = 1;
  int max_em_iters = 20;
  double em_tol = 1e-3;
  int em_window = 3;
  double smoothing = 0.5;
  double init_sigma = 0.1;
  SolverConfig solver;
  std::uint64_t seed = 0;

  Hyperparams hyper() const { return {lambda, rho1, rho2}; }

  std::size_t samples_at(int iter) const {
    if (schedule.empty()) return schedule_base * static_cast<std::size_t>(1 + iter);
    return schedule[std::min(static_cast<std::size_t>(iter), schedule.size() - 1)];
  }

  void validate() const {
    if (K < 1) throw ValidationError("K must be >= 1");
    hyper().validate();
    solver.validate();
    if (schedule.empty() && schedule_base < 1) throw ValidationError("schedule_base must be >= 1");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      if (schedule[k] < 1) throw ValidationError("schedule entries must be >= 1");
      if (k > 0 && schedule[k] < schedule[k - 1]) throw ValidationError("schedule must be nondecreasing");
    }
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (blocks < 1) throw ValidationError("blocks must be >= 1");
    if (max_em_iters < 1) throw ValidationError("max_em_iters must be >= 1");
    if (!(em_tol > 0.0)) throw ValidationError("em_tol must be > 0");
    if (em_window < 1) throw ValidationError("em_window must be >= 1");
    if (!(smoothing > 0.0)) throw ValidationError("smoothing must be > 0");
    if (!(init_sigma >= 0.0)) throw ValidationError("init_sigma must be >= 0");
  }
};

/// P(y_i | x_i, z_i = t) for a labelled node.
inline double class_likelihood(NodeId i, std::size_t t, const LCGRParams& params, const Dataset& data) {
  if (!data.labeled(i)) throw ContractViolation("class_likelihood called on an unlabelled node");
  const auto ti = static_cast<Eigen::Index>(t);
  return choice_probability(data.x(i).dot(params.W.row(ti)) + params.b(static_cast<Eigen::Index>(i), ti), data.y(i));
}

namespace detail {

/// Likelihood factor per class; 1 everywhere for unlabelled nodes.
inline void likelihood_vector(NodeId i, const LCGRParams& params, const Dataset& data, std::span<double> out) {
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = data.labeled(i) ? class_likelihood(i, t, params, data) : 1.0;
}

}  // namespace detail

/// q(z_i = t) ∝ P(y_i | z_i = t) P(z_i = t; b).
inline std::vector<double> node_posterior(NodeId i, std::span<const double> prior, const LCGRParams& params,
                                          const Dataset& data) {
  std::vector<double> q(prior.size());
  detail::likelihood_vector(i, params, data, q);
  double total = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t) {
    q[t] *= prior[t];
    total += q[t];
  }
  for (double& v : q) v /= total;
  return q;
}

/// q(z_u = z_v = t) = L_u(t) L_v(t) P(t, t) / sum_{m,q} L_u(m) L_v(q) P(m, q),
/// with `pair` row-major K x K over (z_u, z_v).
inline std::vector<double> edge_posterior(NodeId u, NodeId v, std::span<const double> pair, const LCGRParams& params,
                                          const Dataset& data) {
  const std::size_t K = params.num_classes();
  if (pair.size() != K * K) throw DimensionError("pair marginal must have K^2 entries");
  std::vector<double> lu(K), lv(K);
  detail::likelihood_vector(u, params, data, lu);
  detail::likelihood_vector(v, params, data, lv);
  double denom = 0.0;
  for (std::size_t m = 0; m < K; ++m)
    for (std::size_t q = 0; q < K; ++q) denom += lu[m] * lv[q] * pair[m * K + q];
  std::vector<double> out(K);
  for (std::size_t t = 0; t < K; ++t) out[t] = lu[t] * lv[t] * pair[t * K + t] / denom;
  return out;
}

/// Q = sum_i sum_t q_it loss_it + lambda sum_e sum_t q_et (b_ut - b_vt)^2.
inline double expected_nll(const LCGRParams& params, const PosteriorEstimates& post, const Dataset& data,
                           const SocialGraph& graph, double lambda, int workers = 1) {
  params.check(data.num_features(), data.num_nodes());
  const std::size_t K = params.num_classes();
  if (post.num_classes() != K || static_cast<std::size_t>(post.node.rows()) != data.num_nodes() ||
      static_cast<std::size_t>(post.edge_same.rows()) != graph.num_edges())
    throw DimensionError("posteriors do not match the parameters or the graph");
  double q = 0.0;
  for (std::size_t t = 0; t < K; ++t)
    q += weighted_objective(params.class_slice(t), data, graph, lambda, post.node_column(t), post.edge_column(t),
                            workers);
  return q;
}

/// Posteriors from given prior marginals (sampled or exact).
inline PosteriorEstimates assemble_posteriors(const MarginalEstimates& prior, const LCGRParams& params,
                                              const Dataset& data, const SocialGraph& graph, int workers = 1) {
  const std::size_t K = params.num_classes();
  const auto k = static_cast<Eigen::Index>(K);
  if (prior.num_classes() != K) throw DimensionError("prior marginals have the wrong class count");
  PosteriorEstimates post;
  post.sample_count = prior.sample_count;
  post.node.resize(static_cast<Eigen::Index>(data.num_nodes()), k);
  post.edge_same.resize(static_cast<Eigen::Index>(graph.num_edges()), k);
  parallel::for_each_index(data.num_nodes(), workers, [&](std::size_t i) {
    const Vector row = prior.node.row(static_cast<Eigen::Index>(i)).transpose();
    const auto q = node_posterior(i, {row.data(), K}, params, data);
    for (std::size_t t = 0; t < K; ++t) post.node(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = q[t];
  });
  parallel::for_each_index(graph.num_edges(), workers, [&](std::size_t e) {
    const Vector row = prior.edge_pair.row(static_cast<Eigen::Index>(e)).transpose();
    const Edge& edge = graph.edge(e);
    const auto q = edge_posterior(edge.u, edge.v, {row.data(), K * K}, params, data);
    for (std::size_t t = 0; t < K; ++t)
      post.edge_same(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)) = q[t];
  });
  return post;
}

/// Samples the prior at the current offsets (blocked when a partition is
/// given) and assembles posteriors. K = 1 needs no sampling.
inline PosteriorEstimates e_step(const LCGRParams& params, const Dataset& data, const SocialGraph& graph,
                                 const MCEMConfig& config, int em_iter, const BlockPartition* partition = nullptr) {
  const std::size_t K = params.num_classes();
  if (K == 1) return PosteriorEstimates::degenerate(data.num_nodes(), graph.num_edges(), 1);
  const MRFSpec spec{graph, params.b, config.lambda};
  const std::size_t n_samples = config.samples_at(em_iter);
  const std::uint64_t seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(em_iter));
  const int workers = config.solver.workers;
  const SampleSet samples =
      partition != nullptr && partition->size() > 1
          ? sample_prior_blocked(spec, *partition, n_samples, config.burn_in, config.thin, seed, workers)
          : sample_prior(spec, n_samples, config.burn_in, config.thin, seed);
  const MarginalEstimates prior = estimate_marginals(samples, spec, config.smoothing, workers);
  return assemble_posteriors(prior, params, data, graph, workers);
}

struct MStepResult {
  LCGRParams params;
  bool converged = true;
  int admm_iters = 0;
};

/// One weighted ADMM fit per class, warm-started. A class whose fit does not
/// improve its term of Q keeps the warm start, as does a class with no weight.
inline MStepResult m_step(const PosteriorEstimates& post, const Dataset& data, const SocialGraph& graph,
                          const Hyperparams& hyper, const SolverConfig& solver, const LCGRParams& warm) {
  const std::size_t K = warm.num_classes();
  warm.check(data.num_features(), data.num_nodes());
  if (post.num_classes() != K) throw DimensionError("posteriors have the wrong class count");
  MStepResult out{warm, true, 0};
  for (std::size_t t = 0; t < K; ++t) {
    const auto node_w = post.node_column(t);
    const auto edge_w = post.edge_column(t);
    bool any = std::any_of(edge_w.begin(), edge_w.end(), [](double w) { return w > 0.0; });
    for (NodeId i = 0; i < data.num_nodes() && !any; ++i) any = data.labeled(i) && node_w[i] > 0.0;
    if (!any) continue;
    const LLGRParams start = warm.class_slice(t);
    ADMMResult fit = admm_fit(data, graph, hyper, node_w, edge_w, solver, start);
    out.converged = out.converged && fit.converged;
    out.admm_iters += fit.iters;
    const double before = weighted_objective(start, data, graph, hyper.lambda, node_w, edge_w, solver.workers);
    const double after = weighted_objective(fit.params, data, graph, hyper.lambda, node_w, edge_w, solver.workers);
    if (after <= before) out.params.set_class(t, fit.params);
  }
  return out;
}

struct EMIterate {
  int iter = 0;
  std::size_t samples = 0;
  double q_before = 0.0;  // Q at the incoming parameters under the new posteriors
  double q = 0.0;         // Q after the M-step
  bool m_step_converged = true;
  double seconds = 0.0;
};

struct MCEMResult {
  LCGRParams params;
  std::vector<EMIterate> history;
  bool converged = false;
  PosteriorEstimates posteriors;  // final E-step at the returned parameters
};

/// Small Gaussian W (sigma = init_sigma), zero offsets; K = 1 starts at zero.
inline LCGRParams initial_params(const MCEMConfig& config, std::size_t d, std::size_t n) {
  LCGRParams p = LCGRParams::zeros(config.K, d, n);
  if (config.K == 1) return p;
  Rng rng = make_rng(config.seed, 7);
  for (Eigen::Index t = 0; t < p.W.rows(); ++t)
    for (Eigen::Index j = 0; j < p.W.cols(); ++j) p.W(t, j) = config.init_sigma * standard_normal(rng);
  return p;
}

/// Relative change of Q below em_tol for each of the last `window` steps.
inline bool em_converged(const std::vector<EMIterate>& history, const MCEMConfig& config) {
  const auto window = static_cast<std::size_t>(config.em_window);
  if (history.size() < window + 1) return false;
  for (std::size_t k = history.size() - window; k < history.size(); ++k) {
    const double prev = history[k - 1].q;
    if (std::abs(history[k].q - prev) > config.em_tol * std::max(std::abs(prev), 1e-12)) return false;
  }
  return true;
}

/// The EM loop with a caller-supplied E-step:
/// estep(params, em_iter) -> PosteriorEstimates.
template <class EStep>
MCEMResult mcem_fit_with(const Dataset& data, const SocialGraph& graph, const MCEMConfig& config, EStep&& estep,
                         const std::optional<LCGRParams>& init = std::nullopt) {
  data.check_matches(graph);
  config.validate();
  MCEMResult result;
  result.params = init ? *init : initial_params(config, data.num_features(), data.num_nodes());
  result.params.check(data.num_features(), data.num_nodes());
  const Hyperparams hyper = config.hyper();
  const auto start = std::chrono::steady_clock::now();
  const int max_iters = config.K == 1 ? 1 : config.max_em_iters;
  int last = 0;
  for (int k = 0; k < max_iters; ++k) {
    last = k;
    const PosteriorEstimates post = estep(result.params, k);
    EMIterate it;
    it.iter = k + 1;
    it.samples = post.sample_count;
    it.q_before = expected_nll(result.params, post, data, graph, config.lambda, config.solver.workers);
    MStepResult m = m_step(post, data, graph, hyper, config.solver, result.params);
    result.params = std::move(m.params);
    it.q = expected_nll(result.params, post, data, graph, config.lambda, config.solver.workers);
    it.m_step_converged = m.converged;
    it.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(it);
    if (config.K == 1 || em_converged(result.history, config)) {
      result.converged = config.K == 1 ? m.converged : true;
      break;
    }
  }
  result.posteriors = estep(result.params, last + 1);
  return result;
}

/// Alternates sampled E-steps and ADMM M-steps until Q settles.
inline MCEMResult mcem_fit(const Dataset& data, const SocialGraph& graph, const MCEMConfig& config,
                           const std::optional<LCGRParams>& init = std::nullopt) {
  config.validate();
  std::optional<BlockPartition> partition;
  if (config.blocks > 1 && config.K > 1) partition = partition_blocks(graph, config.blocks, config.seed);
  const BlockPartition* blocks = partition ? &*partition : nullptr;
  return mcem_fit_with(
      data, graph, config,
      [&](const LCGRParams& params, int em_iter) { return e_step(params, data, graph, config, em_iter, blocks); },
      init);
}

struct Prediction {
  NodeId node = 0;
  double probability = 0.5;  // P(y = +1)
  Label label = 1;
};

/// P(y_i = +1) = sum_t q(z_i = t) sigmoid(W_t'x_i + b_it); ties go to +1.
inline std::vector<Prediction> predict(const LCGRParams& params, const PosteriorEstimates& post, const Dataset& data,
                                       std::span<const NodeId> nodes) {
  std::vector<Prediction> out;
  out.reserve(nodes.size());
  for (NodeId i : nodes) {
    const auto ii = static_cast<Eigen::Index>(i);
    double p = 0.0;
    for (Eigen::Index t = 0; t < params.W.rows(); ++t)
      p += post.node(ii, t) * sigmoid(data.x(i).dot(params.W.row(t)) + params.b(ii, t));
    out.push_back({i, p, p >= 0.5 ? Label{1} : Label{-1}});
  }
  return out;
}

}  // namespace sdcm
