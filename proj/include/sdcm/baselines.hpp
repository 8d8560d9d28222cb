#pragma once

// Non-social reference models: plain logistic regression (Newton) and a
// latent-class mixture of logistic regressions with an i.i.d. class prior
// (EM with seeded restarts).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sdcm/graph_model.hpp"
#include "sdcm/parallel.hpp"
#include "sdcm/random.hpp"

namespace sdcm {

struct LogisticModel {
  Vector w;
  double b = 0.0;
  /// Set when the data are separable and the coefficients were capped.
  bool separated = false;
  int iters = 0;
};

struct LogisticOptions {
  double l2 = 1e-6;
  int max_iters = 200;
  double grad_tol = 1e-8;
  double norm_cap = 1e3;
};

namespace detail {

/// sum_r weight_r log(1 + exp(-y_r (w'x_r + b))) + (l2/2)||w||^2 over the rows
/// listed in `rows`; theta = [w; b].
class WeightedLogistic {
 public:
  WeightedLogistic(const Matrix& X, std::span<const Label> y, std::span<const double> weights,
                   std::span<const NodeId> rows, double l2)
      : X_(X), y_(y), weights_(weights), rows_(rows), l2_(l2), d_(X.cols()) {}

  double value(const Vector& theta) const {
    double f = 0.5 * l2_ * theta.head(d_).squaredNorm();
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      const double w = weights_[k];
      if (w == 0.0) continue;
      const NodeId r = rows_[k];
      f += w * logistic_loss(y_[r] * score(theta, r));
    }
    return f;
  }

  void derivatives(const Vector& theta, Vector& grad, Eigen::MatrixXd& hess) const {
    grad = Vector::Zero(d_ + 1);
    hess = Eigen::MatrixXd::Zero(d_ + 1, d_ + 1);
    grad.head(d_) = l2_ * theta.head(d_);
    hess.topLeftCorner(d_, d_).diagonal().setConstant(l2_);
    Vector z(d_ + 1);
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      const double w = weights_[k];
      if (w == 0.0) continue;
      const NodeId r = rows_[k];
      const double y = y_[r];
      const double tail = sigmoid(-y * score(theta, r));
      z.head(d_) = X_.row(static_cast<Eigen::Index>(r)).transpose();
      z[d_] = 1.0;
      grad -= w * y * tail * z;
      hess.noalias() += (w * tail * (1.0 - tail)) * z * z.transpose();
    }
  }

  /// True when every weighted row is classified with positive margin.
  bool all_margins_positive(const Vector& theta) const {
    for (std::size_t k = 0; k < rows_.size(); ++k)
      if (weights_[k] > 0.0 && y_[rows_[k]] * score(theta, rows_[k]) <= 0.0) return false;
    return true;
  }

  /// +1 / -1 when every weighted row carries that label, 0 otherwise.
  int common_label() const {
    int common = 0;
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      if (weights_[k] <= 0.0) continue;
      const int y = y_[rows_[k]];
      if (common == 0) common = y;
      else if (common != y) return 0;
    }
    return common;
  }

 private:
  double score(const Vector& theta, NodeId r) const {
    return X_.row(static_cast<Eigen::Index>(r)).dot(theta.head(d_)) + theta[d_];
  }

  const Matrix& X_;
  std::span<const Label> y_;
  std::span<const double> weights_;
  std::span<const NodeId> rows_;
  double l2_;
  Eigen::Index d_;
};

}  // namespace detail

/// Newton's method with backtracking on the weighted logistic loss over
/// `rows` (weights aligned with rows). Starts from `warm` when given.
inline LogisticModel fit_weighted_logistic(const Matrix& X, std::span<const Label> y, std::span<const NodeId> rows,
                                           std::span<const double> weights, const LogisticOptions& options,
                                           const LogisticModel* warm = nullptr) {
  if (!(options.l2 >= 0.0)) throw ValidationError("l2 must be >= 0");
  if (weights.size() != rows.size()) throw DimensionError("weights and rows differ in length");
  const Eigen::Index d = X.cols();
  detail::WeightedLogistic problem(X, y, weights, rows, options.l2);

  LogisticModel model;
  Vector theta = Vector::Zero(d + 1);
  if (warm != nullptr) {
    theta.head(d) = warm->w;
    theta[d] = warm->b;
  }

  const int common = problem.common_label();
  double f = problem.value(theta);
  Vector grad;
  Eigen::MatrixXd hess;
  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    problem.derivatives(theta, grad, hess);
    if (grad.norm() <= options.grad_tol) break;
    hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Vector step = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || grad.dot(step) >= 0.0) step = -grad;
    const double slope = grad.dot(step);
    double t = 1.0;
    double f_trial = problem.value(theta + step);
    while (!(f_trial <= f + 1e-4 * t * slope) && t > 1e-14) {
      t *= 0.5;
      f_trial = problem.value(theta + t * step);
    }
    if (!(f_trial < f)) break;
    Vector next = theta + t * step;
    if (next.norm() > options.norm_cap) {
      // Stop on the cap sphere; by convexity the objective there is still <= f.
      const double a = (t * step).squaredNorm();
      const double bq = 2.0 * theta.dot(t * step);
      const double c = theta.squaredNorm() - options.norm_cap * options.norm_cap;
      const double s = (-bq + std::sqrt(std::max(0.0, bq * bq - 4.0 * a * c))) / (2.0 * a);
      theta += std::clamp(s, 0.0, 1.0) * t * step;
      model.separated = true;
      break;
    }
    theta = std::move(next);
    f = f_trial;
  }
  model.iters = iter;

  // The infimum is not attained for separable data: push to the cap.
  if (!model.separated && !rows.empty()) {
    if (common != 0) {
      theta.head(d).setZero();
      theta[d] = common * options.norm_cap;
      model.separated = true;
    } else if (options.l2 == 0.0 && problem.all_margins_positive(theta)) {
      theta *= options.norm_cap / theta.norm();
      model.separated = true;
    }
  }
  model.w = theta.head(d);
  model.b = theta[d];
  return model;
}

inline std::vector<NodeId> labeled_nodes(const Dataset& data) {
  std::vector<NodeId> rows;
  rows.reserve(data.num_nodes());
  for (NodeId i = 0; i < data.num_nodes(); ++i)
    if (data.labeled(i)) rows.push_back(i);
  return rows;
}

/// Maximizes sum_labelled log sigmoid(y_i (w'x_i + b)) - (l2/2)||w||^2.
inline LogisticModel fit_logistic(const Dataset& data, double l2 = 1e-6) {
  const auto rows = labeled_nodes(data);
  if (rows.empty()) throw ValidationError("logistic regression needs at least one labelled node");
  const std::vector<double> weights(rows.size(), 1.0);
  LogisticOptions options;
  options.l2 = l2;
  return fit_weighted_logistic(data.features(), data.labels(), rows, weights, options);
}

struct LatentClassModel {
  Matrix W;    // K x d
  Vector b;    // K
  Vector pi;   // K, sums to 1
  double log_likelihood = -std::numeric_limits<double>::infinity();  // penalized
  std::vector<double> trace;                                          // per EM iteration
  bool reseeded = false;
  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(W.rows()); }
};

struct LatentClassOptions {
  double l2 = 1e-6;
  int restarts = 5;
  double tol = 1e-10;
  int workers = 1;
};

namespace detail {

inline double component_likelihood(const LatentClassModel& m, std::size_t t, const Dataset& data, NodeId i) {
  const auto ti = static_cast<Eigen::Index>(t);
  return choice_probability(data.x(i).dot(m.W.row(ti)) + m.b[ti], data.y(i));
}

inline double penalized_log_likelihood(const LatentClassModel& m, const Dataset& data, std::span<const NodeId> rows,
                                       double l2) {
  double ll = 0.0;
  for (NodeId i : rows) {
    double mix = 0.0;
    for (std::size_t t = 0; t < m.num_classes(); ++t)
      mix += m.pi[static_cast<Eigen::Index>(t)] * component_likelihood(m, t, data, i);
    ll += std::log(std::max(mix, std::numeric_limits<double>::min()));
  }
  return ll - 0.5 * l2 * m.W.squaredNorm();
}

inline LatentClassModel run_latent_class_em(const Dataset& data, std::span<const NodeId> rows, std::size_t K,
                                            int em_iters, Rng rng, double l2, double tol) {
  const std::size_t n = rows.size();
  const auto d = static_cast<Eigen::Index>(data.num_features());
  const auto k = static_cast<Eigen::Index>(K);
  LatentClassModel m;
  m.W = Matrix::Zero(k, d);
  m.b = Vector::Zero(k);
  m.pi = Vector::Constant(k, 1.0 / static_cast<double>(K));

  Matrix resp(static_cast<Eigen::Index>(n), k);
  for (Eigen::Index r = 0; r < resp.rows(); ++r) {
    for (Eigen::Index t = 0; t < k; ++t) resp(r, t) = 0.05 + uniform01(rng);
    resp.row(r) /= resp.row(r).sum();
  }

  LogisticOptions options;
  options.l2 = l2;
  std::vector<LogisticModel> comps(K, LogisticModel{Vector::Zero(d), 0.0, false, 0});
  std::vector<double> weights(n);
  for (int it = 0; it < em_iters; ++it) {
    for (std::size_t t = 0; t < K; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      for (std::size_t r = 0; r < n; ++r) weights[r] = resp(static_cast<Eigen::Index>(r), ti);
      comps[t] = fit_weighted_logistic(data.features(), data.labels(), rows, weights, options, &comps[t]);
      m.W.row(ti) = comps[t].w.transpose();
      m.b[ti] = comps[t].b;
      m.pi[ti] = resp.col(ti).sum() / static_cast<double>(n);
    }
    const double ll = penalized_log_likelihood(m, data, rows, l2);
    m.trace.push_back(ll);
    m.log_likelihood = ll;
    if (it > 0 && std::abs(ll - m.trace[m.trace.size() - 2]) <= tol * (1.0 + std::abs(ll))) break;

    for (std::size_t r = 0; r < n; ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      for (std::size_t t = 0; t < K; ++t)
        resp(ri, static_cast<Eigen::Index>(t)) = m.pi[static_cast<Eigen::Index>(t)] * component_likelihood(m, t, data, rows[r]);
      const double total = resp.row(ri).sum();
      if (total > 0.0) resp.row(ri) /= total;
      else resp.row(ri).setConstant(1.0 / static_cast<double>(K));
    }
    for (std::size_t t = 0; t < K; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      if (resp.col(ti).sum() >= 1e-8) continue;
      // Empty class: restart it from random responsibilities.
      m.reseeded = true;
      for (Eigen::Index r = 0; r < resp.rows(); ++r) {
        resp(r, ti) = uniform01(rng);
        resp.row(r) /= resp.row(r).sum();
      }
      comps[t] = LogisticModel{Vector::Zero(d), 0.0, false, 0};
    }
  }
  return m;
}

}  // namespace detail

/// EM for a K-component mixture of logistic regressions with mixing
/// proportions pi; the best of `restarts` seeded runs is returned.
inline LatentClassModel fit_latent_class(const Dataset& data, int K, int em_iters, std::uint64_t seed,
                                         const LatentClassOptions& options = {}) {
  if (K < 1) throw ValidationError("latent class model needs K >= 1");
  if (em_iters < 1) throw ValidationError("em_iters must be >= 1");
  const auto rows = labeled_nodes(data);
  if (rows.empty()) throw ValidationError("latent class model needs at least one labelled node");

  if (K == 1) {
    const LogisticModel single = fit_logistic(data, options.l2);
    LatentClassModel m;
    m.W = single.w.transpose();
    m.b = Vector::Constant(1, single.b);
    m.pi = Vector::Ones(1);
    m.log_likelihood = detail::penalized_log_likelihood(m, data, rows, options.l2);
    m.trace = {m.log_likelihood};
    return m;
  }

  const int restarts = std::max(1, options.restarts);
  std::vector<LatentClassModel> runs(static_cast<std::size_t>(restarts));
  parallel::for_each_index(runs.size(), options.workers, [&](std::size_t r) {
    runs[r] = detail::run_latent_class_em(data, rows, static_cast<std::size_t>(K), em_iters, make_rng(seed, 1000 + r),
                                          options.l2, options.tol);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].log_likelihood > runs[best].log_likelihood) best = r;
  return std::move(runs[best]);
}

struct BaselinePrediction {
  double probability = 0.5;  // P(y = +1)
  Label label = 1;
};

inline Label label_from_probability(double p) { return p >= 0.5 ? Label{1} : Label{-1}; }

template <class Row>
BaselinePrediction predict_baseline(const LogisticModel& model, const Row& x) {
  const double p = sigmoid(x.dot(model.w) + model.b);
  return {p, label_from_probability(p)};
}

template <class Row>
BaselinePrediction predict_baseline(const LatentClassModel& model, const Row& x) {
  double p = 0.0;
  for (Eigen::Index t = 0; t < model.W.rows(); ++t) p += model.pi[t] * sigmoid(x.dot(model.W.row(t)) + model.b[t]);
  return {p, label_from_probability(p)};
}

}  // namespace sdcm
