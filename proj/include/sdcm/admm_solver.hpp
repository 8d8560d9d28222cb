#pragma once

// Consensus ADMM for the weighted graph-regularized logistic objective
//
//   sum_i w_i log(1 + exp(-y_i (W'x_i + b_i))) + lambda sum_(i,j) q_ij (b_i - b_j)^2
//
// Each node keeps a local copy g_i of W, and each endpoint of an edge keeps
// a copy c_ij of its offset b_i. One iteration updates, in order: W (mean of
// g - r), every b_i (bisection), every g_i (damped Newton), every edge copy
// pair (2x2 closed form), then the scaled duals r and u. Node and edge steps
// only read the previous iterate and write their own slots.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sdcm/graph_model.hpp"
#include "sdcm/parallel.hpp"

namespace sdcm {

struct SolverConfig {
  int max_iters = 500;
  double tol_primal = 1e-4;
  double tol_dual = 1e-4;
  int newton_max_iters = 50;
  double newton_tol = 1e-10;
  double bisection_tol = 1e-10;
  /// Offsets whose subproblem is unbounded (labelled node, no neighbors) are
  /// clamped to +-offset_bound.
  double offset_bound = 1e3;
  int workers = 1;

  void validate() const {
    if (max_iters < 1 || newton_max_iters < 1) throw ValidationError("iteration counts must be >= 1");
    if (!(tol_primal > 0) || !(tol_dual > 0) || !(newton_tol > 0) || !(bisection_tol > 0))
      throw ValidationError("solver tolerances must be > 0");
    if (!(offset_bound > 0)) throw ValidationError("offset_bound must be > 0");
  }
};

struct ADMMState {
  Vector W;
  Vector b;
  Matrix g;                      // N x d local copies of W
  std::vector<double> copies;    // per directed slot (see SocialGraph::slot)
  std::vector<double> duals_u;   // per directed slot
  Matrix duals_r;                // N x d
  double rho1 = 1.0;
  double rho2 = 1.0;
  std::vector<double> node_weights;
  std::vector<double> edge_weights;

  /// g_i = W, c_ij = b_i, duals zero. Negative weights are clipped to 0.
  static ADMMState initial(const SocialGraph& graph, std::size_t d, const Hyperparams& hyper, const LLGRParams& init,
                           std::span<const double> node_weights, std::span<const double> edge_weights) {
    const std::size_t n = graph.num_nodes();
    init.check(d, n);
    if (node_weights.size() != n || edge_weights.size() != graph.num_edges())
      throw DimensionError("weight vectors do not match the graph");
    ADMMState s;
    s.W = init.W;
    s.b = init.b;
    s.g = init.W.transpose().replicate(static_cast<Eigen::Index>(n), 1);
    s.duals_r = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    s.copies.resize(2 * graph.num_edges());
    for (EdgeId e = 0; e < graph.num_edges(); ++e) {
      s.copies[2 * e] = init.b[static_cast<Eigen::Index>(graph.edge(e).u)];
      s.copies[2 * e + 1] = init.b[static_cast<Eigen::Index>(graph.edge(e).v)];
    }
    s.duals_u.assign(2 * graph.num_edges(), 0.0);
    s.rho1 = hyper.rho1;
    s.rho2 = hyper.rho2;
    s.node_weights.resize(n);
    s.edge_weights.resize(graph.num_edges());
    std::transform(node_weights.begin(), node_weights.end(), s.node_weights.begin(),
                   [](double w) { return std::max(0.0, w); });
    std::transform(edge_weights.begin(), edge_weights.end(), s.edge_weights.begin(),
                   [](double w) { return std::max(0.0, w); });
    return s;
  }

  LLGRParams params() const { return {W, b}; }
};

namespace detail {

inline double effective_weight(const ADMMState& s, const Dataset& data, NodeId i) {
  return data.labeled(i) ? s.node_weights[i] : 0.0;
}

}  // namespace detail

/// sum_i w_i loss_i + lambda sum_e q_e (b_u - b_v)^2. Unlabelled nodes
/// contribute no loss.
inline double weighted_objective(const LLGRParams& params, const Dataset& data, const SocialGraph& graph, double lambda,
                                 std::span<const double> node_weights, std::span<const double> edge_weights,
                                 int workers = 1) {
  data.check_matches(graph);
  params.check(data.num_features(), data.num_nodes());
  if (node_weights.size() != data.num_nodes() || edge_weights.size() != graph.num_edges())
    throw DimensionError("weight vectors do not match the graph");
  const auto plus = [](double a, double b) { return a + b; };
  const double loss = parallel::chunked_reduce(
      data.num_nodes(), workers, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (NodeId i = begin; i < end; ++i) {
          if (!data.labeled(i) || node_weights[i] == 0.0) continue;
          const double h = data.x(i).dot(params.W) + params.b[static_cast<Eigen::Index>(i)];
          acc += node_weights[i] * logistic_loss(data.y(i) * h);
        }
        return acc;
      },
      plus);
  const double penalty = parallel::chunked_reduce(
      graph.num_edges(), workers, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (EdgeId e = begin; e < end; ++e) {
          const double diff = params.b[static_cast<Eigen::Index>(graph.edge(e).u)] -
                              params.b[static_cast<Eigen::Index>(graph.edge(e).v)];
          acc += edge_weights[e] * diff * diff;
        }
        return acc;
      },
      plus);
  return loss + lambda * penalty;
}

/// W = mean_i (g_i - r_i), from the current (previous-iterate) g and r.
inline Vector update_global_W(const ADMMState& s, int workers = 1) {
  const auto n = static_cast<std::size_t>(s.g.rows());
  if (n == 0) return s.W;
  if (s.duals_r.rows() != s.g.rows() || s.duals_r.cols() != s.g.cols())
    throw DimensionError("g and r have different shapes");
  Vector sum = parallel::chunked_reduce(
      n, workers, Vector(Vector::Zero(s.g.cols())),
      [&](std::size_t begin, std::size_t end) {
        Vector acc = Vector::Zero(s.g.cols());
        for (std::size_t i = begin; i < end; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          acc += (s.g.row(ii) - s.duals_r.row(ii)).transpose();
        }
        return acc;
      },
      [](Vector acc, const Vector& part) {
        acc += part;
        return acc;
      });
  return sum / static_cast<double>(n);
}

/// Minimizer over b of
///   w_i log(1 + exp(-y_i (g_i'x_i + b))) + (rho2/2) sum_j (b - c_ij + u_ij)^2
/// by bisection on its (strictly increasing) derivative.
inline double update_offset_b(NodeId i, const ADMMState& s, const Dataset& data, const SocialGraph& graph,
                              const SolverConfig& config) {
  const double w = detail::effective_weight(s, data, i);
  const auto nbrs = graph.neighbors(i);
  const auto deg = static_cast<double>(nbrs.size());
  double centre_sum = 0.0;
  double lo_centre = std::numeric_limits<double>::infinity();
  double hi_centre = -std::numeric_limits<double>::infinity();
  for (const Incidence& inc : nbrs) {
    const std::size_t slot = graph.slot(inc.edge, i);
    const double a = s.copies[slot] - s.duals_u[slot];
    centre_sum += a;
    lo_centre = std::min(lo_centre, a);
    hi_centre = std::max(hi_centre, a);
  }
  const double current = s.b[static_cast<Eigen::Index>(i)];
  if (w == 0.0) return nbrs.empty() ? current : centre_sum / deg;
  const double y = data.y(i);
  if (nbrs.empty()) return y * config.offset_bound;

  const double score = s.g.row(static_cast<Eigen::Index>(i)).dot(data.x(i));
  const auto derivative = [&](double b) {
    return -w * y * sigmoid(-y * (score + b)) + s.rho2 * (deg * b - centre_sum);
  };
  const double reach = w / (s.rho2 * deg);
  double lo = lo_centre - reach - 1.0;
  double hi = hi_centre + reach + 1.0;
  for (double width = 1.0; derivative(lo) > 0.0; width *= 2.0) lo -= width;
  for (double width = 1.0; derivative(hi) < 0.0; width *= 2.0) hi += width;
  while (hi - lo > config.bisection_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (derivative(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Minimizer over g of
///   w_i log(1 + exp(-y_i (g'x_i + b_i))) + (rho1/2) ||W - g + r_i||^2
/// by Newton's method with backtracking. The Hessian rho1 I + a x x' is
/// inverted with Sherman-Morrison.
inline Vector update_local_g(NodeId i, const ADMMState& s, const Dataset& data, const SolverConfig& config) {
  const auto ii = static_cast<Eigen::Index>(i);
  const Vector centre = s.W + s.duals_r.row(ii).transpose();
  const double w = detail::effective_weight(s, data, i);
  const Vector x = data.x(i).transpose();
  const double xx = x.squaredNorm();
  if (w == 0.0 || xx == 0.0) return centre;

  const double y = data.y(i);
  const double b = s.b[ii];
  const double rho = s.rho1;
  const auto objective = [&](const Vector& g) {
    return w * logistic_loss(y * (g.dot(x) + b)) + 0.5 * rho * (g - centre).squaredNorm();
  };

  Vector g = centre;
  double f = objective(g);
  for (int iter = 0; iter < config.newton_max_iters; ++iter) {
    const double margin = y * (g.dot(x) + b);
    const double tail = sigmoid(-margin);
    const Vector grad = -w * y * tail * x + rho * (g - centre);
    if (grad.norm() <= config.newton_tol) break;
    const double curvature = w * tail * (1.0 - tail);
    const Vector step = -(grad - x * (curvature * x.dot(grad) / (rho + curvature * xx))) / rho;
    const double slope = grad.dot(step);
    double t = 1.0;
    Vector trial = g + step;
    double f_trial = objective(trial);
    while (f_trial > f + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      trial = g + t * step;
      f_trial = objective(trial);
    }
    if (!trial.allFinite() || !std::isfinite(f_trial)) throw SolverError("non-finite local weight update", i);
    if (f_trial > f) break;  // no further progress representable
    g = std::move(trial);
    f = f_trial;
  }
  return g;
}

/// Stationary point of
///   lambda q (c_ij - c_ji)^2 + (rho2/2) [(b_i + u_ij - c_ij)^2 + (b_j + u_ji - c_ji)^2].
/// The 2x2 first-order system decouples in the mean and difference of the
/// copies. Returns (c_ij, c_ji) with i the canonical first endpoint.
inline std::pair<double, double> update_edge_copies(EdgeId e, const ADMMState& s, const SocialGraph& graph,
                                                    double lambda) {
  const Edge& edge = graph.edge(e);
  const double a1 = s.b[static_cast<Eigen::Index>(edge.u)] + s.duals_u[2 * e];
  const double a2 = s.b[static_cast<Eigen::Index>(edge.v)] + s.duals_u[2 * e + 1];
  const double coupling = lambda * s.edge_weights[e];
  if (coupling == 0.0) return {a1, a2};
  const double mean = 0.5 * (a1 + a2);
  const double half_diff = 0.5 * s.rho2 * (a1 - a2) / (s.rho2 + 4.0 * coupling);
  return {mean + half_diff, mean - half_diff};
}

/// r_i += W - g_i; u_ij += b_i - c_ij for every directed slot.
inline void update_duals(ADMMState& s, const SocialGraph& graph, int workers = 1) {
  parallel::for_each_index(static_cast<std::size_t>(s.g.rows()), workers, [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s.duals_r.row(ii) += s.W.transpose() - s.g.row(ii);
  });
  parallel::for_each_index(graph.num_edges(), workers, [&](std::size_t e) {
    const Edge& edge = graph.edge(e);
    s.duals_u[2 * e] += s.b[static_cast<Eigen::Index>(edge.u)] - s.copies[2 * e];
    s.duals_u[2 * e + 1] += s.b[static_cast<Eigen::Index>(edge.v)] - s.copies[2 * e + 1];
  });
}

/// max(max_i ||W - g_i||_inf, max_slot |b_owner - c_slot|).
inline double primal_residual(const ADMMState& s, const SocialGraph& graph, int workers = 1) {
  const auto max_of = [](double a, double b) { return std::max(a, b); };
  const double nodes = parallel::chunked_reduce(
      static_cast<std::size_t>(s.g.rows()), workers, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i)
          acc = std::max(acc, (s.g.row(static_cast<Eigen::Index>(i)) - s.W.transpose()).cwiseAbs().maxCoeff());
        return acc;
      },
      max_of);
  const double edges = parallel::chunked_reduce(
      graph.num_edges(), workers, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (EdgeId e = begin; e < end; ++e) {
          const Edge& edge = graph.edge(e);
          acc = std::max(acc, std::abs(s.b[static_cast<Eigen::Index>(edge.u)] - s.copies[2 * e]));
          acc = std::max(acc, std::abs(s.b[static_cast<Eigen::Index>(edge.v)] - s.copies[2 * e + 1]));
        }
        return acc;
      },
      max_of);
  return s.g.cols() == 0 ? edges : std::max(nodes, edges);
}

struct IterationResiduals {
  double primal = 0.0;
  double dual = 0.0;
};

/// One full iteration (W, b, g, edge copies, duals) in place.
inline IterationResiduals admm_iterate(ADMMState& s, const Dataset& data, const SocialGraph& graph, double lambda,
                                       const SolverConfig& config) {
  const int workers = std::max(1, config.workers);
  const std::size_t n = graph.num_nodes();
  const Vector previous_W = s.W;
  const std::vector<double> previous_copies = s.copies;

  s.W = update_global_W(s, workers);

  Vector next_b(static_cast<Eigen::Index>(n));
  parallel::for_each_index(n, workers, [&](std::size_t i) {
    next_b[static_cast<Eigen::Index>(i)] = update_offset_b(i, s, data, graph, config);
  });
  s.b = std::move(next_b);

  // g_i's update reads only W, b_i and r_i, so rows can be written in place.
  parallel::for_each_index(n, workers, [&](std::size_t i) {
    s.g.row(static_cast<Eigen::Index>(i)) = update_local_g(i, s, data, config).transpose();
  });

  parallel::for_each_index(graph.num_edges(), workers, [&](std::size_t e) {
    const auto [c_uv, c_vu] = update_edge_copies(e, s, graph, lambda);
    s.copies[2 * e] = c_uv;
    s.copies[2 * e + 1] = c_vu;
  });

  update_duals(s, graph, workers);

  IterationResiduals res;
  res.primal = primal_residual(s, graph, workers);
  const double copy_change = parallel::chunked_reduce(
      s.copies.size(), workers, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t k = begin; k < end; ++k) acc = std::max(acc, std::abs(s.copies[k] - previous_copies[k]));
        return acc;
      },
      [](double a, double b) { return std::max(a, b); });
  const double w_change = s.W.size() ? (s.W - previous_W).cwiseAbs().maxCoeff() : 0.0;
  res.dual = std::max(s.rho1 * w_change, s.rho2 * copy_change);
  return res;
}

struct ADMMIterate {
  int iter = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double best_primal_residual = 0.0;  // min over iterations so far
  double seconds = 0.0;               // wall time since the start of the fit
};

struct ADMMResult {
  LLGRParams params;
  bool converged = false;
  int iters = 0;
  std::vector<ADMMIterate> history;
};

/// Runs ADMM from `init` (zeros when absent) until both residuals are below
/// tolerance or max_iters is reached. A non-converged run returns the
/// iterate with the smallest tolerance-scaled residual.
inline ADMMResult admm_fit(const Dataset& data, const SocialGraph& graph, const Hyperparams& hyper,
                           std::span<const double> node_weights, std::span<const double> edge_weights,
                           const SolverConfig& config, const std::optional<LLGRParams>& init = std::nullopt) {
  data.check_matches(graph);
  hyper.validate();
  config.validate();
  const std::size_t d = data.num_features();
  const std::size_t n = data.num_nodes();
  ADMMState state = ADMMState::initial(graph, d, hyper, init ? *init : LLGRParams::zeros(d, n), node_weights,
                                       edge_weights);

  ADMMResult result;
  result.history.reserve(static_cast<std::size_t>(config.max_iters));
  const auto start = std::chrono::steady_clock::now();
  double best_score = std::numeric_limits<double>::infinity();
  double best_primal = std::numeric_limits<double>::infinity();
  LLGRParams best = state.params();

  for (int k = 1; k <= config.max_iters; ++k) {
    const IterationResiduals res = admm_iterate(state, data, graph, hyper.lambda, config);
    best_primal = std::min(best_primal, res.primal);
    ADMMIterate it;
    it.iter = k;
    it.objective = weighted_objective(state.params(), data, graph, hyper.lambda, state.node_weights,
                                      state.edge_weights, config.workers);
    it.primal_residual = res.primal;
    it.dual_residual = res.dual;
    it.best_primal_residual = best_primal;
    it.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(it);
    result.iters = k;

    const double score = std::max(res.primal / config.tol_primal, res.dual / config.tol_dual);
    if (score < best_score) {
      best_score = score;
      best = state.params();
    }
    if (res.primal < config.tol_primal && res.dual < config.tol_dual) {
      result.converged = true;
      break;
    }
  }
  result.params = result.converged ? state.params() : std::move(best);
  return result;
}

/// Unweighted LLGR: every node and edge weight is 1.
inline ADMMResult admm_fit_llgr(const Dataset& data, const SocialGraph& graph, const Hyperparams& hyper,
                                const SolverConfig& config, const std::optional<LLGRParams>& init = std::nullopt) {
  const std::vector<double> node_weights(data.num_nodes(), 1.0);
  const std::vector<double> edge_weights(graph.num_edges(), 1.0);
  return admm_fit(data, graph, hyper, node_weights, edge_weights, config, init);
}

/// P(y_i = +1) = sigmoid(W'x_i + b_i).
inline double llgr_probability(const LLGRParams& params, const Dataset& data, NodeId i) {
  return sigmoid(data.x(i).dot(params.W) + params.b[static_cast<Eigen::Index>(i)]);
}

}  // namespace sdcm
