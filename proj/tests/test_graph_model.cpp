#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sdcm/graph_io.hpp"
#include "sdcm/graph_model.hpp"

using namespace sdcm;

namespace {

SocialGraph graph_from_text(const std::string& text) {
  std::istringstream in(text);
  return parse_graph(in);
}

}  // namespace

TEST(SocialGraph, PathFromEdgeList) {
  auto g = graph_from_text("0 1\n1 2\n");
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 2u);
  auto nb = g.neighbors(1);
  ASSERT_EQ(nb.size(), 2u);
  EXPECT_EQ(nb[0].neighbor, 0u);
  EXPECT_EQ(nb[1].neighbor, 2u);
}

TEST(SocialGraph, OrientationDuplicatesCollapse) {
  auto g = graph_from_text("0 1\n1 0\n");
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_EQ(g.edge(0), (Edge{0, 1}));
}

TEST(SocialGraph, SelfLoopRejected) { EXPECT_THROW(graph_from_text("3 3\n"), ValidationError); }

TEST(SocialGraph, MalformedLineReportsLine) {
  try {
    graph_from_text("0 1\n# comment\n1 x\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(SocialGraph, WeightColumnRejected) { EXPECT_THROW(graph_from_text("0 1 0.5\n"), ValidationError); }

TEST(SocialGraph, NodeHeaderKeepsIsolatedNodes) {
  auto g = graph_from_text("# nodes 5\n0 1\n");
  EXPECT_EQ(g.num_nodes(), 5u);
  EXPECT_EQ(g.degree(4), 0u);
  EXPECT_THROW(graph_from_text("# nodes 2\n0 3\n"), ValidationError);
}

TEST(SocialGraph, AdjacencyMatchesEdgesOnRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<NodeId> node(0, 29);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (int k = 0; k < 60; ++k) {
      NodeId a = node(rng), b = node(rng);
      if (a != b) pairs.emplace_back(a, b);
    }
    SocialGraph g(30, pairs);
    std::size_t incidences = 0;
    for (NodeId i = 0; i < 30; ++i) {
      for (const auto& inc : g.neighbors(i)) {
        const Edge& e = g.edge(inc.edge);
        EXPECT_TRUE((e.u == i && e.v == inc.neighbor) || (e.v == i && e.u == inc.neighbor));
        EXPECT_TRUE(g.has_edge(i, inc.neighbor));
        ++incidences;
      }
    }
    EXPECT_EQ(incidences, 2 * g.num_edges());
    for (std::size_t e = 1; e < g.num_edges(); ++e) EXPECT_LT(g.edge(e - 1), g.edge(e));
    for (const auto& e : g.edges()) EXPECT_LT(e.u, e.v);
  }
}

TEST(SocialGraph, SerializeReloadIsIdentity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = oracle::random_connected(12, 0.2, rng);
    auto again = graph_from_text(format_graph(g));
    EXPECT_EQ(g, again);
    EXPECT_EQ(graph_from_text(format_graph(again)), again);
  }
}

TEST(Dataset, LabelsDefaultToUnobserved) {
  SocialGraph g(3, std::vector<std::pair<NodeId, NodeId>>{{0, 1}});
  std::istringstream features("x0,x1\n1,2\n3,4\n5,6\n");
  std::istringstream labels("node_id,label\n0,1\n2,-1\n");
  Dataset d(parse_features(features), parse_labels(labels, 3));
  EXPECT_EQ(d.y(0), 1);
  EXPECT_EQ(d.y(1), 0);
  EXPECT_EQ(d.y(2), -1);
  EXPECT_EQ(d.num_features(), 2u);
  EXPECT_EQ(d.num_labeled(), 2u);
}

TEST(Dataset, RowCountMismatchIsDimensionError) {
  SocialGraph g(3, std::vector<std::pair<NodeId, NodeId>>{{0, 1}});
  Matrix x(2, 1);
  x << 1, 2;
  Dataset d(x, std::vector<Label>{1, -1});
  EXPECT_THROW(d.check_matches(g), DimensionError);
}

TEST(Dataset, LabelOutsideTernaryRejected) {
  std::istringstream labels("0,2\n");
  EXPECT_THROW(parse_labels(labels, 3), ValidationError);
  std::istringstream dup("0,1\n0,-1\n");
  EXPECT_THROW(parse_labels(dup, 3), ValidationError);
  std::istringstream outside("7,1\n");
  EXPECT_THROW(parse_labels(outside, 3), ValidationError);
}

TEST(Dataset, RaggedFeaturesRejected) {
  std::istringstream features("1,2\n3\n");
  EXPECT_THROW(parse_features(features), ParseError);
}

TEST(Dataset, MaskingLeavesOriginalIntact) {
  Matrix x = Matrix::Zero(4, 1);
  Dataset d(x, std::vector<Label>{1, -1, 1, 0});
  const std::vector<NodeId> hide{0, 2};
  Dataset m = d.masked(hide);
  EXPECT_EQ(m.y(0), 0);
  EXPECT_EQ(m.y(2), 0);
  EXPECT_EQ(m.y(1), -1);
  EXPECT_EQ(d.y(0), 1);
  EXPECT_EQ(d.y(2), 1);
}

TEST(Dataset, FormatParseRoundTrip) {
  std::mt19937_64 rng(3);
  Matrix x = oracle::random_matrix(7, 3, 2.0, rng);
  auto y = oracle::random_labels(7, 0.3, rng);
  std::istringstream fin(format_features(x));
  std::istringstream lin(format_labels(y));
  EXPECT_EQ(parse_features(fin), x);
  EXPECT_EQ(parse_labels(lin, 7), y);
}

TEST(ChoiceProbability, ClosedForms) {
  EXPECT_DOUBLE_EQ(choice_probability(0.0, 1), 0.5);
  EXPECT_NEAR(choice_probability(std::log(3.0), 1), 0.75, 1e-15);
  EXPECT_NEAR(choice_probability(std::log(3.0), -1), 0.25, 1e-15);
  EXPECT_THROW(choice_probability(0.0, 0), ContractViolation);
}

TEST(ChoiceProbability, ComplementAndMonotone) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-800.0, 800.0);
  for (int k = 0; k < 2000; ++k) {
    const double h = u(rng);
    const double p = choice_probability(h, 1), q = choice_probability(h, -1);
    EXPECT_TRUE(std::isfinite(p) && std::isfinite(q));
    EXPECT_NEAR(p + q, 1.0, 1e-12);
    EXPECT_LE(choice_probability(h - 0.5, 1), p);
  }
  EXPECT_GT(choice_probability(-700.0, 1), 0.0);
  EXPECT_EQ(choice_probability(700.0, 1), 1.0);
}

TEST(ChoiceProbability, LossIsStable) {
  EXPECT_NEAR(logistic_loss(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(logistic_loss(-800.0), 800.0, 1e-9);
  EXPECT_GE(logistic_loss(800.0), 0.0);
}

TEST(Params, ShapeChecks) {
  EXPECT_NO_THROW(LLGRParams::zeros(2, 3).check(2, 3));
  EXPECT_THROW(LLGRParams::zeros(2, 3).check(3, 3), DimensionError);
  auto p = LCGRParams::zeros(2, 3, 4);
  EXPECT_NO_THROW(p.check(3, 4));
  p.b(0, 0) = std::nan("");
  EXPECT_THROW(p.check(3, 4), ValidationError);
  EXPECT_THROW((Hyperparams{-1.0, 1.0, 1.0}.validate()), ValidationError);
  EXPECT_THROW((Hyperparams{1.0, 0.0, 1.0}.validate()), ValidationError);
}

TEST(AtomicFileSet, FailedCommitRestoresPreviousFiles) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdcm_atomic_rollback";
  fs::remove_all(dir);
  fs::create_directories(dir / "c.txt" / "inner");
  std::ofstream(dir / "a.txt") << "old";
  AtomicFileSet set;
  set.add(dir / "a.txt", "new a");
  set.add(dir / "b.txt", "new b");
  set.add(dir / "c.txt", "new c");
  EXPECT_THROW(set.commit(), Error);
  std::ifstream in(dir / "a.txt");
  std::string a;
  in >> a;
  EXPECT_EQ(a, "old");
  EXPECT_FALSE(fs::exists(dir / "b.txt"));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 2u);  // a.txt and the c.txt directory

  AtomicFileSet ok;
  ok.add(dir / "a.txt", "fresh");
  ok.commit();
  std::ifstream again(dir / "a.txt");
  again >> a;
  EXPECT_EQ(a, "fresh");
  EXPECT_FALSE(fs::exists(dir / "a.txt.bak"));
  fs::remove_all(dir);
}
