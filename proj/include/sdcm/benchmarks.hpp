#pragma once

// Thread-scaling timings for one ADMM iteration and for Gibbs sweeps on a
// large random graph. Every timed run also checks that its output matches
// the single-worker output bit for bit.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "sdcm/admm_solver.hpp"
#include "sdcm/graph_io.hpp"
#include "sdcm/mrf_gibbs.hpp"
#include "sdcm/random.hpp"
#include "sdcm/synthgen.hpp"

namespace sdcm {

struct BenchConfig {
  std::size_t nodes = 100000;
  std::size_t edges = 500000;
  std::size_t dim = 5;
  std::size_t classes = 2;
  std::size_t blocks = 10;
  std::size_t sweeps = 5;
  int repeats = 3;  // best of
  std::vector<int> workers{1, 8};
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string benchmark;  // admm_iteration | gibbs_sweep
  int workers = 1;
  double seconds = 0.0;   // per iteration or per sweep, best of repeats
  double speedup = 1.0;   // against the reference row of the same benchmark
  bool identical = true;  // output equals the single-worker output
};

struct BenchProblem {
  SocialGraph graph;
  Dataset data;
  Matrix b;  // N x classes, offsets for the MRF
};

inline BenchProblem make_bench_problem(const BenchConfig& config) {
  BenchProblem p{random_graph(config.nodes, config.edges, config.seed), Dataset(), Matrix()};
  Rng rng = make_rng(config.seed, 5);
  Matrix x(static_cast<Eigen::Index>(config.nodes), static_cast<Eigen::Index>(config.dim));
  std::vector<Label> y(config.nodes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = standard_normal(rng);
    y[static_cast<std::size_t>(i)] = uniform01(rng) < 0.5 ? Label{1} : Label{-1};
  }
  p.data = Dataset(std::move(x), std::move(y));
  p.b.resize(static_cast<Eigen::Index>(config.nodes), static_cast<Eigen::Index>(config.classes));
  for (Eigen::Index i = 0; i < p.b.rows(); ++i)
    for (Eigen::Index t = 0; t < p.b.cols(); ++t) p.b(i, t) = standard_normal(rng);
  return p;
}

namespace detail {

template <class Fn>
double best_seconds(int repeats, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

inline bool same_state(const ADMMState& a, const ADMMState& b) {
  return a.W == b.W && a.b == b.b && a.g == b.g && a.copies == b.copies && a.duals_u == b.duals_u &&
         a.duals_r == b.duals_r;
}

}  // namespace detail

/// One ADMM iteration from the same starting state at each worker count.
/// Speedups are relative to the first entry of config.workers.
inline std::vector<BenchRow> bench_admm(const BenchProblem& p, const BenchConfig& config) {
  const Hyperparams hyper{1.0, 1.0, 1.0};
  const std::vector<double> nw(p.data.num_nodes(), 1.0), ew(p.graph.num_edges(), 1.0);
  LLGRParams init = LLGRParams::zeros(p.data.num_features(), p.data.num_nodes());
  init.b = p.b.col(0);
  const ADMMState start = ADMMState::initial(p.graph, p.data.num_features(), hyper, init, nw, ew);

  std::vector<BenchRow> rows;
  ADMMState reference;
  for (std::size_t k = 0; k < config.workers.size(); ++k) {
    SolverConfig solver;
    solver.workers = config.workers[k];
    ADMMState result;
    const double seconds = detail::best_seconds(config.repeats, [&] {
      result = start;
      admm_iterate(result, p.data, p.graph, hyper.lambda, solver);
    });
    if (k == 0) reference = result;
    rows.push_back({"admm_iteration", config.workers[k], seconds, rows.empty() ? 1.0 : rows[0].seconds / seconds,
                    detail::same_state(reference, result)});
  }
  return rows;
}

/// Plain single-chain Gibbs (reported with workers = 0) against the blocked
/// sampler at each worker count. Speedups are relative to the plain chain.
inline std::vector<BenchRow> bench_gibbs(const BenchProblem& p, const BenchConfig& config) {
  const MRFSpec spec{p.graph, p.b, 1.0};
  const BlockPartition partition = partition_blocks(p.graph, config.blocks, config.seed);
  const std::size_t sweeps = std::max<std::size_t>(1, config.sweeps);

  std::vector<BenchRow> rows;
  SampleSet plain;
  const double plain_seconds =
      detail::best_seconds(config.repeats, [&] { plain = sample_prior(spec, sweeps, 0, 1, config.seed); }) /
      static_cast<double>(sweeps);
  rows.push_back({"gibbs_sweep", 0, plain_seconds, 1.0, true});

  SampleSet reference;
  for (std::size_t k = 0; k < config.workers.size(); ++k) {
    SampleSet blocked;
    const double seconds = detail::best_seconds(config.repeats, [&] {
                             blocked = sample_prior_blocked(spec, partition, sweeps, 0, 1, config.seed,
                                                            config.workers[k]);
                           }) /
                           static_cast<double>(sweeps);
    if (k == 0) reference = blocked;
    rows.push_back({"gibbs_sweep", config.workers[k], seconds, plain_seconds / seconds, reference == blocked});
  }
  return rows;
}

/// benchmark,workers,seconds,speedup,identical
inline std::string format_bench(const std::vector<BenchRow>& rows, bool timings) {
  std::string out = "benchmark,workers,seconds,speedup,identical\n";
  for (const auto& r : rows)
    out += r.benchmark + "," + std::to_string(r.workers) + "," + (timings ? format_double(r.seconds) : "0") + "," +
           (timings ? format_double(r.speedup) : "0") + "," + (r.identical ? "1" : "0") + "\n";
  return out;
}

}  // namespace sdcm
