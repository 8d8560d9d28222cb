#pragma once

// Independent reference computations for the tests: brute-force
// enumeration of the MRF, dense grid search, plain gradient descent and
// direct re-summation. None of these share code paths with the library
// routines they check.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "sdcm/sdcm.hpp"

namespace oracle {

using sdcm::Matrix;
using sdcm::NodeId;
using sdcm::SocialGraph;
using sdcm::Vector;

inline double logit_prob(double h, int y) { return 1.0 / (1.0 + std::exp(-y * h)); }

/// Unnormalized prior weight of a full assignment.
inline double prior_weight(const SocialGraph& g, const Matrix& b, double lambda, const std::vector<int>& z) {
  double energy = 0.0;
  for (const auto& e : g.edges()) {
    if (z[e.u] != z[e.v]) continue;
    const double d = b(e.u, z[e.u]) - b(e.v, z[e.v]);
    energy += d * d;
  }
  return std::exp(-lambda * energy);
}

/// Calls fn(z) for every assignment in [0,K)^N.
inline void for_each_assignment(std::size_t n, std::size_t K, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> z(n, 0);
  while (true) {
    fn(z);
    std::size_t pos = 0;
    while (pos < n && ++z[pos] == static_cast<int>(K)) z[pos++] = 0;
    if (pos == n) break;
  }
}

struct ExactMarginals {
  Matrix node;       // N x K
  Matrix edge_pair;  // E x K^2
};

inline ExactMarginals enumerate_prior(const SocialGraph& g, const Matrix& b, double lambda) {
  const std::size_t n = g.num_nodes();
  const auto K = static_cast<std::size_t>(b.cols());
  ExactMarginals m{Matrix::Zero(n, K), Matrix::Zero(g.num_edges(), K * K)};
  double total = 0.0;
  for_each_assignment(n, K, [&](const std::vector<int>& z) {
    const double w = prior_weight(g, b, lambda, z);
    total += w;
    for (std::size_t i = 0; i < n; ++i) m.node(i, z[i]) += w;
    for (std::size_t e = 0; e < g.num_edges(); ++e) m.edge_pair(e, z[g.edge(e).u] * K + z[g.edge(e).v]) += w;
  });
  m.node /= total;
  m.edge_pair /= total;
  return m;
}

inline sdcm::MarginalEstimates as_estimates(const ExactMarginals& m) {
  sdcm::MarginalEstimates est;
  est.node = m.node;
  est.edge_pair = m.edge_pair;
  est.sample_count = 0;
  return est;
}

/// Likelihood of node i's label under class t; 1 when unlabelled.
inline double class_lik(const sdcm::LCGRParams& p, const sdcm::Dataset& d, NodeId i, int t) {
  if (d.y(i) == 0) return 1.0;
  double h = p.b(i, t);
  for (Eigen::Index j = 0; j < p.W.cols(); ++j) h += p.W(t, j) * d.features()(i, j);
  return logit_prob(h, d.y(i));
}

/// Node posterior by summing over every joint assignment:
/// q_i(t) = sum_z 1(z_i=t) P(z) L_i(z_i) / sum_z P(z) L_i(z_i).
inline Matrix bayes_node_posterior(const SocialGraph& g, const sdcm::LCGRParams& p, const sdcm::Dataset& d,
                                   double lambda) {
  const std::size_t n = g.num_nodes(), K = p.num_classes();
  Matrix num = Matrix::Zero(n, K);
  Vector den = Vector::Zero(n);
  for_each_assignment(n, K, [&](const std::vector<int>& z) {
    const double w = prior_weight(g, p.b, lambda, z);
    for (std::size_t i = 0; i < n; ++i) {
      const double l = w * class_lik(p, d, i, z[i]);
      num(i, z[i]) += l;
      den[i] += l;
    }
  });
  for (std::size_t i = 0; i < n; ++i) num.row(i) /= den[i];
  return num;
}

/// Same-class edge posterior by enumeration.
inline Matrix bayes_edge_posterior(const SocialGraph& g, const sdcm::LCGRParams& p, const sdcm::Dataset& d,
                                   double lambda) {
  const std::size_t n = g.num_nodes(), K = p.num_classes(), E = g.num_edges();
  Matrix num = Matrix::Zero(E, K);
  Vector den = Vector::Zero(E);
  for_each_assignment(n, K, [&](const std::vector<int>& z) {
    const double w = prior_weight(g, p.b, lambda, z);
    for (std::size_t e = 0; e < E; ++e) {
      const NodeId u = g.edge(e).u, v = g.edge(e).v;
      const double l = w * class_lik(p, d, u, z[u]) * class_lik(p, d, v, z[v]);
      den[e] += l;
      if (z[u] == z[v]) num(e, z[u]) += l;
    }
  });
  for (std::size_t e = 0; e < E; ++e) num.row(e) /= den[e];
  return num;
}

/// Straightforward re-summation of the weighted objective.
inline double objective(const sdcm::LLGRParams& p, const sdcm::Dataset& d, const SocialGraph& g, double lambda,
                        const std::vector<double>& nw, const std::vector<double>& ew) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.num_nodes(); ++i) {
    if (d.y(i) == 0) continue;
    double h = p.b[i];
    for (Eigen::Index j = 0; j < p.W.size(); ++j) h += p.W[j] * d.features()(i, j);
    total += nw[i] * std::log(1.0 + std::exp(-d.y(i) * h));
  }
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const double diff = p.b[g.edge(e).u] - p.b[g.edge(e).v];
    total += lambda * ew[e] * diff * diff;
  }
  return total;
}

/// Two-stage dense grid: step `coarse` over [lo, hi], then step `fine`
/// around the best coarse point. Returns (argmin, min).
inline std::pair<double, double> grid_minimize(const std::function<double(double)>& f, double lo, double hi,
                                               double coarse = 1e-3, double fine = 1e-6) {
  double best_x = lo, best_f = f(lo);
  for (double x = lo; x <= hi; x += coarse) {
    const double v = f(x);
    if (v < best_f) best_f = v, best_x = x;
  }
  const double a = best_x - 2 * coarse, c = best_x + 2 * coarse;
  for (double x = a; x <= c; x += fine) {
    const double v = f(x);
    if (v < best_f) best_f = v, best_x = x;
  }
  return {best_x, best_f};
}

/// Fixed-step gradient descent on a smooth strongly convex function.
inline Vector gradient_descent(const std::function<Vector(const Vector&)>& grad, Vector x, double step, int iters) {
  for (int k = 0; k < iters; ++k) x -= step * grad(x);
  return x;
}

/// Newton-free logistic fit by gradient descent, for cross-checking.
inline Vector logistic_by_descent(const Matrix& X, const std::vector<int>& y, double l2, int iters) {
  const Eigen::Index d = X.cols();
  Vector theta = Vector::Zero(d + 1);
  double lip = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) lip += 0.25 * (X.row(i).squaredNorm() + 1.0);
  const double step = 1.0 / (lip + l2);
  auto grad = [&](const Vector& t) {
    Vector g = Vector::Zero(d + 1);
    g.head(d) = l2 * t.head(d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double h = X.row(i).dot(t.head(d)) + t[d];
      const double s = 1.0 / (1.0 + std::exp(y[i] * h));
      g.head(d) -= y[i] * s * X.row(i).transpose();
      g[d] -= y[i] * s;
    }
    return g;
  };
  return gradient_descent(grad, theta, step, iters);
}

/// Random connected graph on n nodes: a random spanning tree plus extra edges.
inline SocialGraph random_connected(std::size_t n, double extra_p, std::mt19937_64& rng) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (NodeId i = 1; i < n; ++i) pairs.emplace_back(std::uniform_int_distribution<NodeId>(0, i - 1)(rng), i);
  std::bernoulli_distribution coin(extra_p);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (coin(rng)) pairs.emplace_back(i, j);
  return SocialGraph(n, pairs);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

inline std::vector<sdcm::Label> random_labels(std::size_t n, double p_unlabeled, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<sdcm::Label> y(n);
  for (auto& v : y) {
    const double r = u(rng);
    v = r < p_unlabeled ? sdcm::Label{0} : (r < p_unlabeled + (1 - p_unlabeled) / 2 ? sdcm::Label{1} : sdcm::Label{-1});
  }
  return y;
}

/// Total variation distance between two probability vectors.
template <class A, class B>
double tv(const A& p, const B& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace oracle
