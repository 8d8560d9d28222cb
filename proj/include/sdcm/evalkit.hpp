#pragma once

// Model dispatch, masked cross-validation, lambda sweeps and regularization
// path snapshots.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sdcm/admm_solver.hpp"
#include "sdcm/baselines.hpp"
#include "sdcm/graph_io.hpp"
#include "sdcm/mcem_lcgr.hpp"
#include "sdcm/parallel.hpp"
#include "sdcm/random.hpp"

namespace sdcm {

enum class ModelKind { kLogistic, kLatentClass, kLLGR, kLCGR };

inline std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kLatentClass: return "latent_class";
    case ModelKind::kLLGR: return "llgr";
    case ModelKind::kLCGR: return "lcgr";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : {ModelKind::kLogistic, ModelKind::kLatentClass, ModelKind::kLLGR, ModelKind::kLCGR})
    if (model_name(k) == name) return k;
  throw ValidationError("unknown model '" + std::string(name) + "' (expected logistic, latent_class, llgr or lcgr)");
}

/// Everything needed to train one model. K, lambda, the solver and the seed
/// live in `mcem` and are shared by every kind that uses them.
struct ModelConfig {
  ModelKind kind = ModelKind::kLCGR;
  MCEMConfig mcem;
  double l2 = 1e-6;
  int latent_em_iters = 200;
  int latent_restarts = 5;

  double lambda() const noexcept { return mcem.lambda; }
  int workers() const noexcept { return mcem.solver.workers; }
};

struct FittedModel {
  ModelKind kind = ModelKind::kLogistic;
  std::variant<LogisticModel, LatentClassModel, ADMMResult, MCEMResult> model;
  bool converged = true;
};

inline FittedModel fit_model(const ModelConfig& config, const Dataset& data, const SocialGraph& graph) {
  data.check_matches(graph);
  FittedModel fitted;
  fitted.kind = config.kind;
  switch (config.kind) {
    case ModelKind::kLogistic:
      fitted.model = fit_logistic(data, config.l2);
      break;
    case ModelKind::kLatentClass: {
      LatentClassOptions options;
      options.l2 = config.l2;
      options.restarts = config.latent_restarts;
      options.workers = config.workers();
      fitted.model = fit_latent_class(data, static_cast<int>(config.mcem.K), config.latent_em_iters, config.mcem.seed,
                                      options);
      break;
    }
    case ModelKind::kLLGR: {
      ADMMResult fit = admm_fit_llgr(data, graph, config.mcem.hyper(), config.mcem.solver);
      fitted.converged = fit.converged;
      fitted.model = std::move(fit);
      break;
    }
    case ModelKind::kLCGR: {
      MCEMResult fit = mcem_fit(data, graph, config.mcem);
      fitted.converged = fit.converged;
      fitted.model = std::move(fit);
      break;
    }
  }
  return fitted;
}

/// P(y = +1) and the label for each node in `nodes`. LCGR uses the
/// posteriors of its final E-step, so `data` must be the training data.
inline std::vector<Prediction> predict_model(const FittedModel& fitted, const Dataset& data,
                                             std::span<const NodeId> nodes) {
  std::vector<Prediction> out;
  out.reserve(nodes.size());
  auto push = [&](NodeId i, double p) { out.push_back({i, p, p >= 0.5 ? Label{1} : Label{-1}}); };
  switch (fitted.kind) {
    case ModelKind::kLogistic:
      for (NodeId i : nodes) push(i, predict_baseline(std::get<LogisticModel>(fitted.model), data.x(i)).probability);
      break;
    case ModelKind::kLatentClass:
      for (NodeId i : nodes) push(i, predict_baseline(std::get<LatentClassModel>(fitted.model), data.x(i)).probability);
      break;
    case ModelKind::kLLGR:
      for (NodeId i : nodes) push(i, llgr_probability(std::get<ADMMResult>(fitted.model).params, data, i));
      break;
    case ModelKind::kLCGR: {
      const auto& fit = std::get<MCEMResult>(fitted.model);
      return predict(fit.params, fit.posteriors, data, nodes);
    }
  }
  return out;
}

/// Fraction of masked positions where predicted == truth.
inline double accuracy(std::span<const Label> predicted, std::span<const Label> truth, std::span<const bool> mask) {
  if (predicted.size() != truth.size() || mask.size() != truth.size())
    throw DimensionError("accuracy inputs differ in length");
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask[i]) continue;
    if (truth[i] == kUnobserved) throw ContractViolation("accuracy mask selects an unlabelled node");
    ++total;
    correct += predicted[i] == truth[i] ? 1 : 0;
  }
  if (total == 0) throw ValidationError("accuracy needs a nonempty mask");
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Fold id per node; -1 for nodes outside every fold (unlabelled, or not in
/// the test set of a holdout plan).
struct CVPlan {
  std::size_t k = 0;
  std::vector<int> fold;
  std::uint64_t seed = 0;

  /// Label-stratified k folds: each label group is shuffled, the groups are
  /// concatenated and dealt round-robin.
  static CVPlan stratified(const Dataset& data, std::size_t k, std::uint64_t seed) {
    const std::size_t labeled = data.num_labeled();
    if (k < 1 || k > labeled) throw ValidationError("fold count must be in [1, number of labelled nodes]");
    CVPlan plan{k, std::vector<int>(data.num_nodes(), -1), seed};
    Rng rng = make_rng(seed, 20);
    std::vector<NodeId> order;
    for (Label group : {Label{-1}, Label{1}}) {
      std::vector<NodeId> members;
      for (NodeId i = 0; i < data.num_nodes(); ++i)
        if (data.y(i) == group) members.push_back(i);
      for (std::size_t m = members.size(); m > 1; --m) std::swap(members[m - 1], members[uniform_index(rng, m)]);
      order.insert(order.end(), members.begin(), members.end());
    }
    for (std::size_t p = 0; p < order.size(); ++p) plan.fold[order[p]] = static_cast<int>(p % k);
    return plan;
  }

  /// One fold: `n_test` labelled nodes chosen uniformly at random.
  static CVPlan holdout(const Dataset& data, std::size_t n_test, std::uint64_t seed) {
    std::vector<NodeId> labeled = labeled_nodes(data);
    if (n_test < 1 || n_test >= labeled.size())
      throw ValidationError("test set size must be in [1, number of labelled nodes)");
    CVPlan plan{1, std::vector<int>(data.num_nodes(), -1), seed};
    Rng rng = make_rng(seed, 21);
    for (std::size_t p = 0; p < n_test; ++p) {
      std::swap(labeled[p], labeled[p + uniform_index(rng, labeled.size() - p)]);
      plan.fold[labeled[p]] = 0;
    }
    return plan;
  }

  std::vector<NodeId> fold_nodes(std::size_t f) const {
    std::vector<NodeId> nodes;
    for (NodeId i = 0; i < fold.size(); ++i)
      if (fold[i] == static_cast<int>(f)) nodes.push_back(i);
    return nodes;
  }
};

struct FoldResult {
  std::size_t fold = 0;
  double accuracy = 0.0;
  bool ok = false;
  std::string error;
  bool converged = true;
};

struct CVResult {
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation over successful folds
  std::vector<std::string> warnings;
};

inline void summarize(CVResult& result) {
  std::vector<double> acc;
  for (const auto& f : result.folds) {
    if (f.ok) acc.push_back(f.accuracy);
    else result.warnings.push_back("fold " + std::to_string(f.fold) + " failed and is excluded: " + f.error);
  }
  if (acc.empty()) {
    result.mean = result.stdev = std::nan("");
    return;
  }
  double sum = 0.0;
  for (double a : acc) sum += a;
  result.mean = sum / static_cast<double>(acc.size());
  double ss = 0.0;
  for (double a : acc) ss += (a - result.mean) * (a - result.mean);
  result.stdev = acc.size() > 1 ? std::sqrt(ss / static_cast<double>(acc.size() - 1)) : 0.0;
}

/// For each fold: hide its labels, call
/// train_predict(masked_data, graph, test_nodes) -> labels for test_nodes,
/// and score against the true labels. The graph is never altered.
template <class TrainPredict>
  requires std::invocable<TrainPredict&, const Dataset&, const SocialGraph&, std::span<const NodeId>>
CVResult kfold_masked_cv(TrainPredict&& train_predict, const Dataset& data, const SocialGraph& graph,
                         const CVPlan& plan, int workers = 1) {
  data.check_matches(graph);
  if (plan.fold.size() != data.num_nodes()) throw DimensionError("CV plan does not match the dataset");
  CVResult result;
  result.folds.resize(plan.k);
  parallel::for_each_index(
      plan.k, workers,
      [&](std::size_t f) {
        FoldResult& out = result.folds[f];
        out.fold = f;
        const std::vector<NodeId> test = plan.fold_nodes(f);
        try {
          const Dataset masked = data.masked(test);
          const std::vector<Label> labels = train_predict(masked, graph, std::span<const NodeId>(test));
          if (labels.size() != test.size()) throw DimensionError("predictor returned the wrong number of labels");
          std::size_t correct = 0;
          for (std::size_t p = 0; p < test.size(); ++p) correct += labels[p] == data.y(test[p]) ? 1 : 0;
          out.accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
          out.ok = !test.empty();
          if (test.empty()) out.error = "empty fold";
        } catch (const std::exception& e) {
          out.ok = false;
          out.error = e.what();
        }
      },
      parallel::Schedule::kDynamic);
  summarize(result);
  return result;
}

inline CVResult kfold_masked_cv(const ModelConfig& config, const Dataset& data, const SocialGraph& graph,
                                const CVPlan& plan, int workers = 1) {
  std::vector<char> converged(plan.k, 1);
  auto run = [&](const Dataset& masked, const SocialGraph& g, std::span<const NodeId> test) {
    const FittedModel fitted = fit_model(config, masked, g);
    const auto preds = predict_model(fitted, masked, test);
    std::vector<Label> labels;
    labels.reserve(preds.size());
    for (const auto& p : preds) labels.push_back(p.label);
    if (!fitted.converged && !test.empty()) converged[static_cast<std::size_t>(plan.fold[test.front()])] = 0;
    return labels;
  };
  CVResult result = kfold_masked_cv(run, data, graph, plan, workers);
  for (auto& f : result.folds) f.converged = converged[f.fold] != 0;
  return result;
}

struct SweepRow {
  double lambda = 0.0;
  CVResult cv;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // grid order
  double best_lambda = 0.0;
  double best_accuracy = 0.0;
};

/// Cross-validates `base` at every lambda with the same plan and seeds; the
/// best mean accuracy wins, ties going to the smaller lambda.
inline SweepResult lambda_sweep(std::span<const double> lambdas, const ModelConfig& base, const Dataset& data,
                                const SocialGraph& graph, const CVPlan& plan, int workers = 1) {
  if (lambdas.empty()) throw ValidationError("lambda grid is empty");
  SweepResult out;
  out.rows.resize(lambdas.size());
  parallel::for_each_index(
      lambdas.size(), workers,
      [&](std::size_t k) {
        ModelConfig config = base;
        config.mcem.lambda = lambdas[k];
        out.rows[k] = {lambdas[k], kfold_masked_cv(config, data, graph, plan)};
      },
      parallel::Schedule::kDynamic);
  bool have = false;
  for (const auto& row : out.rows) {
    if (std::isnan(row.cv.mean)) continue;
    if (!have || row.cv.mean > out.best_accuracy ||
        (row.cv.mean == out.best_accuracy && row.lambda < out.best_lambda)) {
      out.best_accuracy = row.cv.mean;
      out.best_lambda = row.lambda;
      have = true;
    }
  }
  if (!have) throw Error("every fold of every lambda failed");
  return out;
}

/// model,lambda,fold,accuracy
inline std::string format_metrics(std::string_view model, std::span<const SweepRow> rows) {
  std::string out = "model,lambda,fold,accuracy\n";
  for (const auto& row : rows)
    for (const auto& f : row.cv.folds)
      out += std::string(model) + "," + format_double(row.lambda) + "," + std::to_string(f.fold) + "," +
             (f.ok ? format_double(f.accuracy) : std::string("nan")) + "\n";
  return out;
}

/// model,lambda,mean_accuracy,std
inline std::string format_summary(std::string_view model, std::span<const SweepRow> rows) {
  std::string out = "model,lambda,mean_accuracy,std\n";
  for (const auto& row : rows)
    out += std::string(model) + "," + format_double(row.lambda) + "," + format_double(row.cv.mean) + "," +
           format_double(row.cv.stdev) + "\n";
  return out;
}

/// Node-level parameters at one lambda: class memberships and offsets.
struct PathSnapshot {
  double lambda = 0.0;
  Matrix membership;  // N x K
  Matrix b;           // N x K
};

/// node_id,q_0..q_{K-1},b_0..b_{K-1}
inline std::string format_snapshot(const PathSnapshot& snap) {
  const Eigen::Index K = snap.membership.cols();
  std::string out = "node_id";
  for (Eigen::Index t = 0; t < K; ++t) out += ",q_" + std::to_string(t);
  for (Eigen::Index t = 0; t < K; ++t) out += ",b_" + std::to_string(t);
  out += '\n';
  for (Eigen::Index i = 0; i < snap.membership.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index t = 0; t < K; ++t) out += "," + format_double(snap.membership(i, t));
    for (Eigen::Index t = 0; t < K; ++t) out += "," + format_double(snap.b(i, t));
    out += '\n';
  }
  return out;
}

inline PathSnapshot parse_snapshot(std::istream& in, double lambda) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty snapshot", 1);
  const auto names = detail::split_fields(detail::trim(header), ',');
  if (names.size() < 3 || names.front() != "node_id" || (names.size() - 1) % 2 != 0)
    throw ParseError("snapshot header must be node_id,q_0..,b_0..", 1);
  const std::size_t K = (names.size() - 1) / 2;
  Matrix table = parse_features(in);
  if (static_cast<std::size_t>(table.cols()) != names.size()) throw ParseError("snapshot column count mismatch", 2);
  PathSnapshot snap;
  snap.lambda = lambda;
  snap.membership = table.middleCols(1, static_cast<Eigen::Index>(K));
  snap.b = table.rightCols(static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    if (table(i, 0) != static_cast<double>(i)) throw ParseError("snapshot rows must be in node order", static_cast<std::size_t>(i) + 2);
  return snap;
}

inline std::string snapshot_filename(std::size_t index, double lambda) {
  return "path_" + std::to_string(index) + "_lambda_" + format_double(lambda) + ".csv";
}

/// Fits LCGR at each lambda (K from `base`) and returns one snapshot per
/// lambda in grid order.
inline std::vector<PathSnapshot> regularization_path(const Dataset& data, const SocialGraph& graph,
                                                     std::span<const double> lambdas, const MCEMConfig& base,
                                                     int workers = 1) {
  if (lambdas.empty()) throw ValidationError("lambda grid is empty");
  std::vector<PathSnapshot> out(lambdas.size());
  parallel::for_each_index(
      lambdas.size(), workers,
      [&](std::size_t k) {
        MCEMConfig config = base;
        config.lambda = lambdas[k];
        const MCEMResult fit = mcem_fit(data, graph, config);
        out[k] = {lambdas[k], fit.posteriors.node, fit.params.b};
      },
      parallel::Schedule::kDynamic);
  return out;
}

}  // namespace sdcm
