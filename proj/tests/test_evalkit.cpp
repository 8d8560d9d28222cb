#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "sdcm/evalkit.hpp"
#include "sdcm/synthgen.hpp"

using namespace sdcm;

namespace {

std::vector<Label> constant_predictor(const Dataset&, const SocialGraph&, std::span<const NodeId> test) {
  return std::vector<Label>(test.size(), 1);
}

}  // namespace

TEST(Accuracy, SimpleCases) {
  const std::vector<Label> truth{1, -1, 1, -1};
  const bool mask[4] = {true, true, true, true};
  EXPECT_EQ(accuracy(truth, truth, mask), 1.0);
  const std::vector<Label> half{1, 1, -1, -1};
  EXPECT_EQ(accuracy(half, truth, mask), 0.5);
  const bool none[4] = {false, false, false, false};
  EXPECT_THROW(accuracy(half, truth, none), ValidationError);
  const std::vector<Label> with_gap{1, 0, 1, -1};
  EXPECT_THROW(accuracy(half, with_gap, mask), ContractViolation);
}

TEST(Accuracy, MatchesRecount) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial;
    std::vector<Label> pred(n), truth(n);
    std::unique_ptr<bool[]> mask(new bool[n]);
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = coin(rng) ? 1 : -1;
      truth[i] = coin(rng) ? 1 : -1;
      mask[i] = i == 0 || coin(rng);
      if (mask[i]) {
        ++total;
        if (pred[i] == truth[i]) ++correct;
      }
    }
    EXPECT_DOUBLE_EQ(accuracy(pred, truth, std::span<const bool>(mask.get(), n)),
                     static_cast<double>(correct) / static_cast<double>(total));
  }
}

TEST(CVPlan, FoldsPartitionLabelledNodes) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d(Matrix::Zero(40, 1), oracle::random_labels(40, 0.25, rng));
    const std::size_t k = 1 + trial % 7;
    auto plan = CVPlan::stratified(d, k, trial);
    std::set<NodeId> seen;
    for (std::size_t f = 0; f < k; ++f) {
      auto nodes = plan.fold_nodes(f);
      EXPECT_FALSE(nodes.empty());
      for (NodeId i : nodes) {
        EXPECT_TRUE(d.labeled(i));
        EXPECT_TRUE(seen.insert(i).second);
      }
    }
    EXPECT_EQ(seen.size(), d.num_labeled());
    for (NodeId i = 0; i < 40; ++i)
      if (!d.labeled(i)) EXPECT_EQ(plan.fold[i], -1);
  }
}

TEST(CVPlan, FoldsAreStratified) {
  std::vector<Label> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = i < 30 ? 1 : -1;
  Dataset d(Matrix::Zero(60, 1), y);
  auto plan = CVPlan::stratified(d, 3, 5);
  for (std::size_t f = 0; f < 3; ++f) {
    int pos = 0;
    for (NodeId i : plan.fold_nodes(f)) pos += d.y(i) == 1 ? 1 : 0;
    EXPECT_EQ(pos, 10);
  }
}

TEST(CVPlan, HoldoutSize) {
  std::mt19937_64 rng(3);
  Dataset d(Matrix::Zero(100, 1), oracle::random_labels(100, 0.0, rng));
  auto plan = CVPlan::holdout(d, 50, 4);
  EXPECT_EQ(plan.fold_nodes(0).size(), 50u);
  EXPECT_EQ(CVPlan::holdout(d, 50, 4).fold, plan.fold);
  EXPECT_THROW(CVPlan::holdout(d, 100, 4), ValidationError);
  EXPECT_THROW(CVPlan::stratified(d, 0, 4), ValidationError);
}

TEST(KFold, ConstantPredictorOnPositiveLabels) {
  SocialGraph g(12, std::vector<std::pair<NodeId, NodeId>>{{0, 1}});
  Dataset d(Matrix::Zero(12, 1), std::vector<Label>(12, 1));
  auto result = kfold_masked_cv(constant_predictor, d, g, CVPlan::stratified(d, 3, 0));
  EXPECT_EQ(result.mean, 1.0);
  EXPECT_EQ(result.folds.size(), 3u);
}

TEST(KFold, LeaveOneOut) {
  std::mt19937_64 rng(4);
  SocialGraph g = oracle::random_connected(9, 0.2, rng);
  Dataset d(Matrix::Zero(9, 1), oracle::random_labels(9, 0.0, rng));
  std::size_t calls = 0;
  auto probe = [&](const Dataset& masked, const SocialGraph& graph, std::span<const NodeId> test) {
    ++calls;
    EXPECT_EQ(test.size(), 1u);
    EXPECT_EQ(masked.y(test[0]), 0);
    EXPECT_EQ(masked.num_labeled(), 8u);
    EXPECT_EQ(graph, g);
    return std::vector<Label>{d.y(test[0])};
  };
  auto result = kfold_masked_cv(probe, d, g, CVPlan::stratified(d, 9, 1));
  EXPECT_EQ(calls, 9u);
  EXPECT_EQ(result.mean, 1.0);
  EXPECT_EQ(d.num_labeled(), 9u);
}

TEST(KFold, FailedFoldIsExcluded) {
  SocialGraph g(6, std::vector<std::pair<NodeId, NodeId>>{});
  Dataset d(Matrix::Zero(6, 1), std::vector<Label>(6, 1));
  auto plan = CVPlan::stratified(d, 3, 0);
  auto flaky = [&](const Dataset&, const SocialGraph&, std::span<const NodeId> test) {
    if (plan.fold[test[0]] == 1) throw SolverError("boom", 0);
    return std::vector<Label>(test.size(), 1);
  };
  auto result = kfold_masked_cv(flaky, d, g, plan);
  EXPECT_FALSE(result.folds[1].ok);
  EXPECT_EQ(result.mean, 1.0);
  ASSERT_EQ(result.warnings.size(), 1u);
}

TEST(KFold, LogisticIgnoresTheGraph) {
  // Features and labels do not depend on beta, only the edges do.
  BetaExperimentSpec spec;
  spec.seed = 2;
  spec.graph_seed = 2;
  ModelConfig config;
  config.kind = ModelKind::kLogistic;
  std::vector<double> acc;
  for (double beta : {1e-4, 1e-3, 1e-2, 1e-1}) {
    spec.beta = beta;
    auto s = generate_beta_experiment(spec);
    acc.push_back(kfold_masked_cv(config, s.data, s.graph, CVPlan::holdout(s.data, 50, 7)).mean);
  }
  for (double a : acc) EXPECT_EQ(a, acc.front());
}

TEST(KFold, WorkerCountIsInvisible) {
  BetaExperimentSpec spec;
  spec.n_nodes = 60;
  auto s = generate_beta_experiment(spec);
  ModelConfig config;
  config.kind = ModelKind::kLLGR;
  config.mcem.lambda = 0.5;
  auto plan = CVPlan::stratified(s.data, 3, 1);
  auto a = kfold_masked_cv(config, s.data, s.graph, plan, 1);
  auto b = kfold_masked_cv(config, s.data, s.graph, plan, 3);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(a.folds[f].accuracy, b.folds[f].accuracy);
}

TEST(Sweep, SingleValueGrid) {
  std::mt19937_64 rng(5);
  SocialGraph g = oracle::random_connected(20, 0.1, rng);
  Dataset d(oracle::random_matrix(20, 2, 1.0, rng), oracle::random_labels(20, 0.0, rng));
  ModelConfig config;
  config.kind = ModelKind::kLLGR;
  const std::vector<double> grid{0.3};
  auto r = lambda_sweep(grid, config, d, g, CVPlan::stratified(d, 2, 0));
  EXPECT_EQ(r.best_lambda, 0.3);
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_THROW(lambda_sweep(std::vector<double>{}, config, d, g, CVPlan::stratified(d, 2, 0)), ValidationError);
}

TEST(Sweep, TiesGoToSmallerLambda) {
  // The logistic baseline ignores lambda, so every grid point ties.
  std::mt19937_64 rng(6);
  SocialGraph g = oracle::random_connected(30, 0.1, rng);
  Dataset d(oracle::random_matrix(30, 2, 1.0, rng), oracle::random_labels(30, 0.0, rng));
  ModelConfig config;
  config.kind = ModelKind::kLogistic;
  const std::vector<double> grid{1.0, 0.01, 10.0, 0.1};
  auto r = lambda_sweep(grid, config, d, g, CVPlan::stratified(d, 3, 0), 2);
  EXPECT_EQ(r.best_lambda, 0.01);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_EQ(r.rows[k].lambda, grid[k]);
}

TEST(Sweep, ReproducibleAcrossWorkers) {
  BetaExperimentSpec spec;
  spec.n_nodes = 45;
  auto s = generate_beta_experiment(spec);
  ModelConfig config;
  config.kind = ModelKind::kLLGR;
  const std::vector<double> grid{0.01, 1.0, 100.0};
  auto plan = CVPlan::stratified(s.data, 3, 2);
  auto a = lambda_sweep(grid, config, s.data, s.graph, plan, 1);
  auto b = lambda_sweep(grid, config, s.data, s.graph, plan, 3);
  EXPECT_EQ(format_metrics("llgr", a.rows), format_metrics("llgr", b.rows));
  EXPECT_EQ(a.best_lambda, b.best_lambda);
}

TEST(Sweep, CsvLayout) {
  SweepRow row{0.5, CVResult{{FoldResult{0, 0.75, true, "", true}, FoldResult{1, 0.25, true, "", true}}, 0.5, 0.0, {}}};
  summarize(row.cv);
  const std::vector<SweepRow> rows{row};
  EXPECT_EQ(format_metrics("lcgr", rows), "model,lambda,fold,accuracy\nlcgr,0.5,0,0.75\nlcgr,0.5,1,0.25\n");
  const std::string summary = format_summary("lcgr", rows);
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "model,lambda,mean_accuracy,std");
  EXPECT_NE(summary.find("lcgr,0.5,0.5,"), std::string::npos);
}

TEST(Path, OneSnapshotPerLambdaAndRoundTrip) {
  std::mt19937_64 rng(7);
  SocialGraph g = oracle::random_connected(15, 0.15, rng);
  Dataset d(oracle::random_matrix(15, 2, 1.0, rng), oracle::random_labels(15, 0.2, rng));
  MCEMConfig base;
  base.max_em_iters = 2;
  base.schedule_base = 30;
  base.burn_in = 5;
  const std::vector<double> grid{0.1, 1.0, 10.0};
  auto path = regularization_path(d, g, grid, base);
  ASSERT_EQ(path.size(), 3u);
  for (const auto& snap : path) {
    std::istringstream in(format_snapshot(snap));
    auto back = parse_snapshot(in, snap.lambda);
    EXPECT_EQ(back.membership, snap.membership);
    EXPECT_EQ(back.b, snap.b);
    for (Eigen::Index i = 0; i < back.membership.rows(); ++i) EXPECT_NEAR(back.membership.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(back.membership.minCoeff(), 0.0);
    EXPECT_LE(back.membership.maxCoeff(), 1.0);
  }
  EXPECT_NE(snapshot_filename(0, 0.1), snapshot_filename(1, 1.0));
}

TEST(Path, SingleClassMembershipIsOne) {
  std::mt19937_64 rng(8);
  SocialGraph g = oracle::random_connected(10, 0.2, rng);
  Dataset d(oracle::random_matrix(10, 2, 1.0, rng), oracle::random_labels(10, 0.2, rng));
  MCEMConfig base;
  base.K = 1;
  auto path = regularization_path(d, g, std::vector<double>{0.5}, base);
  EXPECT_EQ(path[0].membership, Matrix::Ones(10, 1));
}

TEST(ModelKinds, NamesRoundTrip) {
  for (ModelKind k : {ModelKind::kLogistic, ModelKind::kLatentClass, ModelKind::kLLGR, ModelKind::kLCGR})
    EXPECT_EQ(parse_model_kind(model_name(k)), k);
  EXPECT_THROW(parse_model_kind("svm"), ValidationError);
}
