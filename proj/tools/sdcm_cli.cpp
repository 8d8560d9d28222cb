// sdcm: synth | fit | predict | cv | sweep | path | bench
//
// Every command reads a flat key=value config (--config FILE) with
// overrides given as key=value arguments or --set key=value. Exit codes:
// 0 success, 2 usage/config/input error, 3 finished without convergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "sdcm/sdcm.hpp"

namespace fs = std::filesystem;
using namespace sdcm;
using sdcm::cli::ConfigError;
using sdcm::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotConverged = 3;

const std::vector<double> kDefaultGrid{0.01, 0.1, 1, 10, 100};

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::string> overrides;
  std::string out;
  std::string seed;
  int workers = 0;
  bool timings = false;
};

const std::set<std::string> kCommonKeys{"seed", "out", "workers", "timings"};
const std::set<std::string> kDataKeys{"data", "graph", "features", "labels"};
const std::set<std::string> kSolverKeys{"max_iters",     "tol_primal",   "tol_dual", "newton_max_iters",
                                        "newton_tol",    "bisection_tol", "offset_bound"};
const std::set<std::string> kMCEMKeys{"K",           "lambda",        "rho1",        "rho2",    "schedule",
                                      "schedule_base", "burn_in",     "thin",        "blocks",  "max_em_iters",
                                      "em_tol",      "em_window",     "smoothing",   "init_sigma"};
const std::set<std::string> kBaselineKeys{"l2", "latent_em_iters", "latent_restarts"};
const std::set<std::string> kBetaKeys{"n_communities", "n_classes", "p_same_class", "beta", "graph_seed"};
const std::set<std::string> kWKeys{"w_norm", "b_sigma", "p_cross"};
const std::set<std::string> kSynthSharedKeys{"experiment", "n_nodes", "dim", "feature_mean", "feature_sd", "p_in"};
const std::set<std::string> kCVKeys{"models", "folds", "holdout"};
const std::set<std::string> kBenchKeys{"nodes", "edges", "dim", "classes", "blocks", "sweeps", "repeats", "bench_workers"};

std::set<std::string> keys(std::initializer_list<const std::set<std::string>*> groups,
                           std::initializer_list<const char*> extra = {}) {
  std::set<std::string> out(kCommonKeys);
  for (const auto* g : groups) out.insert(g->begin(), g->end());
  for (const char* k : extra) out.insert(k);
  return out;
}

struct Context {
  RunConfig config;
  fs::path out;
  std::uint64_t seed = 0;
  int workers = 1;
  bool timings = false;
};

Context make_context(const CommonArgs& args, const std::set<std::string>& allowed, std::string_view command) {
  Context ctx;
  if (!args.config_file.empty()) ctx.config.load_file(args.config_file);
  for (const auto& s : args.sets) ctx.config.set(s);
  for (const auto& s : args.overrides) ctx.config.set(s);
  if (!args.out.empty()) ctx.config.set("out", args.out);
  if (!args.seed.empty()) ctx.config.set("seed", args.seed);
  if (args.workers > 0) ctx.config.set("workers", std::to_string(args.workers));
  if (args.timings) ctx.config.set("timings", "1");
  ctx.config.require_known(allowed, command);

  ctx.seed = ctx.config.integer<std::uint64_t>("seed", 0);
  ctx.workers = parallel::resolve_workers(ctx.config.integer<int>("workers", 0));
  ctx.timings = ctx.config.flag("timings", false);
  ctx.out = ctx.config.text("out", ".");
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out))
    throw ConfigError("key 'out': cannot use " + ctx.out.string() + " as an output directory");
  return ctx;
}

struct Inputs {
  SocialGraph graph;
  Dataset data;
};

/// graph/features/labels, each defaulting to the synth file names under `data`.
Inputs load_inputs(const RunConfig& config) {
  const fs::path dir = config.text("data", "");
  auto path_of = [&](const char* key, const char* name) {
    return config.input(key, dir.empty() ? fs::path() : dir / name);
  };
  const fs::path graph_file = path_of("graph", "graph.edges");
  const fs::path features_file = path_of("features", "features.csv");
  const fs::path labels_file = path_of("labels", "labels.csv");
  Inputs in{load_graph(graph_file), Dataset()};
  in.data = load_dataset(features_file, labels_file, in.graph);
  return in;
}

ModelConfig model_config(const Context& ctx, ModelKind kind) {
  const RunConfig& c = ctx.config;
  ModelConfig m;
  m.kind = kind;
  SolverConfig& s = m.mcem.solver;
  s.max_iters = c.integer("max_iters", s.max_iters);
  s.tol_primal = c.real("tol_primal", s.tol_primal);
  s.tol_dual = c.real("tol_dual", s.tol_dual);
  s.newton_max_iters = c.integer("newton_max_iters", s.newton_max_iters);
  s.newton_tol = c.real("newton_tol", s.newton_tol);
  s.bisection_tol = c.real("bisection_tol", s.bisection_tol);
  s.offset_bound = c.real("offset_bound", s.offset_bound);
  s.workers = ctx.workers;

  MCEMConfig& e = m.mcem;
  e.K = c.integer("K", e.K);
  e.lambda = c.real("lambda", e.lambda);
  e.rho1 = c.real("rho1", e.rho1);
  e.rho2 = c.real("rho2", e.rho2);
  e.schedule = c.integers<std::size_t>("schedule", e.schedule);
  e.schedule_base = c.integer("schedule_base", e.schedule_base);
  e.burn_in = c.integer("burn_in", e.burn_in);
  e.thin = c.integer("thin", e.thin);
  e.blocks = c.integer("blocks", e.blocks);
  e.max_em_iters = c.integer("max_em_iters", e.max_em_iters);
  e.em_tol = c.real("em_tol", e.em_tol);
  e.em_window = c.integer("em_window", e.em_window);
  e.smoothing = c.real("smoothing", e.smoothing);
  e.init_sigma = c.real("init_sigma", e.init_sigma);
  e.seed = ctx.seed;

  m.l2 = c.real("l2", m.l2);
  m.latent_em_iters = c.integer("latent_em_iters", m.latent_em_iters);
  m.latent_restarts = c.integer("latent_restarts", m.latent_restarts);
  if (m.l2 < 0) throw ConfigError("key 'l2' must be >= 0");
  if (m.latent_em_iters < 1) throw ConfigError("key 'latent_em_iters' must be >= 1");
  if (m.latent_restarts < 1) throw ConfigError("key 'latent_restarts' must be >= 1");
  m.mcem.validate();
  return m;
}

std::vector<ModelKind> model_kinds(const RunConfig& config) {
  std::vector<ModelKind> kinds;
  for (const auto& name : config.list("models", "logistic,latent_class,llgr,lcgr")) {
    try {
      kinds.push_back(parse_model_kind(name));
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("key 'models': ") + e.what());
    }
  }
  return kinds;
}

CVPlan cv_plan(const Context& ctx, const Dataset& data) {
  const auto holdout = ctx.config.integer<std::size_t>("holdout", 0);
  if (holdout > 0) return CVPlan::holdout(data, holdout, ctx.seed);
  return CVPlan::stratified(data, ctx.config.integer<std::size_t>("folds", 5), ctx.seed);
}

std::string strip_header(const std::string& csv) { return csv.substr(csv.find('\n') + 1); }

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonArgs& args) {
  Context ctx = make_context(args, keys({&kSynthSharedKeys, &kBetaKeys, &kWKeys}), "synth");
  const RunConfig& c = ctx.config;
  const std::string experiment = c.text("experiment", "beta");
  const std::set<std::string>* foreign = nullptr;
  SyntheticData s;
  if (experiment == "beta") {
    foreign = &kWKeys;
    BetaExperimentSpec spec;
    spec.n_nodes = c.integer("n_nodes", spec.n_nodes);
    spec.n_communities = c.integer("n_communities", spec.n_communities);
    spec.n_classes = c.integer("n_classes", spec.n_classes);
    spec.p_in = c.real("p_in", spec.p_in);
    spec.p_same_class = c.real("p_same_class", spec.p_same_class);
    spec.beta = c.real("beta", spec.beta);
    spec.dim = c.integer("dim", spec.dim);
    spec.feature_mean = c.real("feature_mean", spec.feature_mean);
    spec.feature_sd = c.real("feature_sd", spec.feature_sd);
    spec.seed = ctx.seed;
    if (c.has("graph_seed")) spec.graph_seed = c.integer<std::uint64_t>("graph_seed", 0);
    for (const auto& key : *foreign)
      if (c.has(key)) throw ConfigError("key '" + key + "' does not apply to experiment beta");
    s = generate_beta_experiment(spec);
  } else if (experiment == "w") {
    foreign = &kBetaKeys;
    WExperimentSpec spec;
    spec.n_nodes = c.integer("n_nodes", spec.n_nodes);
    spec.w_norm = c.real("w_norm", spec.w_norm);
    spec.b_sigma = c.real("b_sigma", spec.b_sigma);
    spec.dim = c.integer("dim", spec.dim);
    spec.feature_mean = c.real("feature_mean", spec.feature_mean);
    spec.feature_sd = c.real("feature_sd", spec.feature_sd);
    spec.p_in = c.real("p_in", spec.p_in);
    spec.p_cross = c.real("p_cross", spec.p_cross);
    spec.seed = ctx.seed;
    for (const auto& key : *foreign)
      if (c.has(key)) throw ConfigError("key '" + key + "' does not apply to experiment w");
    s = generate_w_experiment(spec);
  } else {
    throw ConfigError("key 'experiment' must be beta or w, got '" + experiment + "'");
  }

  AtomicFileSet files;
  files.add(ctx.out / "graph.edges", format_graph(s.graph));
  files.add(ctx.out / "features.csv", format_features(s.data.features()));
  files.add(ctx.out / "labels.csv", format_labels(s.data.labels()));
  files.add(ctx.out / "truth.csv", format_truth(s.truth, s.data));
  files.commit();

  std::map<std::size_t, std::size_t> classes;
  for (auto cls : s.truth.cls) ++classes[cls];
  std::printf("nodes %zu\nedges %zu\n", s.data.num_nodes(), s.graph.num_edges());
  for (const auto& [cls, count] : classes) std::printf("class %zu: %zu nodes\n", cls, count);
  return kExitOk;
}

// ---------------------------------------------------------------- fit

std::string fit_diagnostics(const FittedModel& fitted, bool timings) {
  switch (fitted.kind) {
    case ModelKind::kLogistic: {
      const auto& m = std::get<LogisticModel>(fitted.model);
      return "iters,separated\n" + std::to_string(m.iters) + "," + (m.separated ? "1" : "0") + "\n";
    }
    case ModelKind::kLatentClass: {
      const auto& m = std::get<LatentClassModel>(fitted.model);
      std::string out = "iter,log_likelihood\n";
      for (std::size_t k = 0; k < m.trace.size(); ++k) out += std::to_string(k) + "," + format_double(m.trace[k]) + "\n";
      return out;
    }
    case ModelKind::kLLGR:
      return format_admm_diagnostics(std::get<ADMMResult>(fitted.model).history, timings);
    case ModelKind::kLCGR:
      return format_em_diagnostics(std::get<MCEMResult>(fitted.model).history, timings);
  }
  return {};
}

ModelKind single_model(const RunConfig& config) {
  try {
    return parse_model_kind(config.text("model", "lcgr"));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("key 'model': ") + e.what());
  }
}

int cmd_fit(const CommonArgs& args) {
  Context ctx = make_context(args, keys({&kDataKeys, &kSolverKeys, &kMCEMKeys, &kBaselineKeys}, {"model"}), "fit");
  const ModelConfig config = model_config(ctx, single_model(ctx.config));
  const Inputs in = load_inputs(ctx.config);
  const FittedModel fitted = fit_model(config, in.data, in.graph);

  AtomicFileSet files;
  files.add(ctx.out / "model.json", model_to_json(fitted, config).dump(2) + "\n");
  files.add(ctx.out / "diagnostics.csv", fit_diagnostics(fitted, ctx.timings));
  files.commit();

  std::printf("model %s fitted on %zu nodes (%zu labelled), %s\n", std::string(model_name(config.kind)).c_str(),
              in.data.num_nodes(), in.data.num_labeled(), fitted.converged ? "converged" : "NOT converged");
  if (!fitted.converged) {
    std::fprintf(stderr, "warning: the fit stopped before meeting its tolerance; artifacts were written\n");
    return kExitNotConverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const CommonArgs& args) {
  Context ctx = make_context(args, keys({&kDataKeys}, {"model_file", "nodes"}), "predict");
  const fs::path model_file = ctx.config.input("model_file");
  const Inputs in = load_inputs(ctx.config);

  std::ifstream stream(model_file);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(stream);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("key 'model_file': " + model_file.string() + " is not valid JSON: " + e.what());
  }
  const FittedModel fitted = model_from_json(doc);
  check_model_shape(fitted, in.data.num_nodes(), in.data.num_features());

  const std::string which = ctx.config.text("nodes", "all");
  std::vector<NodeId> nodes;
  for (NodeId i = 0; i < in.data.num_nodes(); ++i) {
    if (which == "all" || (which == "unlabeled" && !in.data.labeled(i)) || (which == "labeled" && in.data.labeled(i)))
      nodes.push_back(i);
    else if (which != "unlabeled" && which != "labeled")
      throw ConfigError("key 'nodes' must be all, labeled or unlabeled, got '" + which + "'");
  }
  const auto preds = predict_model(fitted, in.data, nodes);
  write_file_atomic(ctx.out / "predictions.csv", format_predictions(preds));

  std::size_t scored = 0, correct = 0;
  for (const auto& p : preds)
    if (in.data.labeled(p.node)) {
      ++scored;
      correct += p.label == in.data.y(p.node) ? 1 : 0;
    }
  std::printf("predicted %zu nodes", preds.size());
  if (scored > 0) std::printf(", accuracy on %zu labelled nodes %.4f", scored, double(correct) / double(scored));
  std::printf("\n");
  return kExitOk;
}

// ---------------------------------------------------------------- cv / sweep

void print_table(const std::vector<std::pair<ModelKind, SweepResult>>& results) {
  std::printf("%-14s %10s %10s %8s %6s\n", "model", "lambda", "accuracy", "std", "folds");
  for (const auto& [kind, sweep] : results)
    for (const auto& row : sweep.rows) {
      std::size_t ok = 0;
      for (const auto& f : row.cv.folds) ok += f.ok ? 1 : 0;
      std::printf("%-14s %10g %10.4f %8.4f %3zu/%zu\n", std::string(model_name(kind)).c_str(), row.lambda, row.cv.mean,
                  row.cv.stdev, ok, row.cv.folds.size());
    }
  if (results.front().second.rows.size() > 1) {
    std::printf("\nbest lambda per model\n");
    for (const auto& [kind, sweep] : results)
      std::printf("%-14s %10g %10.4f\n", std::string(model_name(kind)).c_str(), sweep.best_lambda, sweep.best_accuracy);
  }
}

int run_sweep(const CommonArgs& args, std::string_view command) {
  const bool is_sweep = command == "sweep";
  auto allowed = keys({&kDataKeys, &kSolverKeys, &kMCEMKeys, &kBaselineKeys, &kCVKeys});
  if (is_sweep) allowed.insert("lambdas");
  Context ctx = make_context(args, allowed, command);
  const auto kinds = model_kinds(ctx.config);
  std::vector<ModelConfig> configs;
  for (ModelKind kind : kinds) configs.push_back(model_config(ctx, kind));
  const std::vector<double> grid =
      is_sweep ? ctx.config.reals("lambdas", kDefaultGrid) : std::vector<double>{configs.front().lambda()};
  const Inputs in = load_inputs(ctx.config);
  const CVPlan plan = cv_plan(ctx, in.data);

  std::vector<std::pair<ModelKind, SweepResult>> results;
  std::string metrics = "model,lambda,fold,accuracy\n", summary = "model,lambda,mean_accuracy,std\n";
  bool converged = true;
  for (std::size_t m = 0; m < kinds.size(); ++m) {
    SweepResult sweep = lambda_sweep(grid, configs[m], in.data, in.graph, plan, ctx.workers);
    const auto name = model_name(kinds[m]);
    metrics += strip_header(format_metrics(name, sweep.rows));
    summary += strip_header(format_summary(name, sweep.rows));
    for (const auto& row : sweep.rows) {
      for (const auto& w : row.cv.warnings)
        std::fprintf(stderr, "warning: %s lambda=%g: %s\n", std::string(name).c_str(), row.lambda, w.c_str());
      for (const auto& f : row.cv.folds) converged = converged && (!f.ok || f.converged);
    }
    results.emplace_back(kinds[m], std::move(sweep));
  }

  AtomicFileSet files;
  files.add(ctx.out / "metrics.csv", std::move(metrics));
  files.add(ctx.out / "summary.csv", std::move(summary));
  files.commit();

  print_table(results);
  if (!converged) {
    std::fprintf(stderr, "warning: some fold fits stopped before meeting their tolerance\n");
    return kExitNotConverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- path

int cmd_path(const CommonArgs& args) {
  Context ctx = make_context(args, keys({&kDataKeys, &kSolverKeys, &kMCEMKeys}, {"lambdas"}), "path");
  const ModelConfig config = model_config(ctx, ModelKind::kLCGR);
  const std::vector<double> grid = ctx.config.reals("lambdas", kDefaultGrid);
  const Inputs in = load_inputs(ctx.config);
  const auto snapshots = regularization_path(in.data, in.graph, grid, config.mcem, ctx.workers);

  AtomicFileSet files;
  for (std::size_t k = 0; k < snapshots.size(); ++k)
    files.add(ctx.out / snapshot_filename(k, snapshots[k].lambda), format_snapshot(snapshots[k]));
  files.commit();

  std::printf("%10s  nodes per most likely class\n", "lambda");
  for (const auto& snap : snapshots) {
    std::vector<std::size_t> count(static_cast<std::size_t>(snap.membership.cols()), 0);
    for (Eigen::Index i = 0; i < snap.membership.rows(); ++i) {
      Eigen::Index best = 0;
      snap.membership.row(i).maxCoeff(&best);
      ++count[static_cast<std::size_t>(best)];
    }
    std::printf("%10g ", snap.lambda);
    for (auto c : count) std::printf(" %zu", c);
    std::printf("\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const CommonArgs& args) {
  Context ctx = make_context(args, keys({&kBenchKeys}), "bench");
  const RunConfig& c = ctx.config;
  BenchConfig config;
  config.nodes = c.integer("nodes", config.nodes);
  config.edges = c.integer("edges", config.edges);
  config.dim = c.integer("dim", config.dim);
  config.classes = c.integer("classes", config.classes);
  config.blocks = c.integer("blocks", config.blocks);
  config.sweeps = c.integer("sweeps", config.sweeps);
  config.repeats = c.integer("repeats", config.repeats);
  config.workers = c.integers<int>("bench_workers", config.workers);
  config.seed = ctx.seed;
  for (int w : config.workers)
    if (w < 1) throw ConfigError("key 'bench_workers' entries must be >= 1");
  if (config.classes < 1 || config.dim < 1) throw ConfigError("keys 'classes' and 'dim' must be >= 1");

  const BenchProblem problem = make_bench_problem(config);
  std::vector<BenchRow> rows = bench_admm(problem, config);
  const auto gibbs = bench_gibbs(problem, config);
  rows.insert(rows.end(), gibbs.begin(), gibbs.end());
  write_file_atomic(ctx.out / "bench.csv", format_bench(rows, ctx.timings));

  std::printf("%-16s %8s %12s %8s %10s\n", "benchmark", "workers", "seconds", "speedup", "identical");
  for (const auto& r : rows)
    std::printf("%-16s %8s %12.6f %8.2f %10s\n", r.benchmark.c_str(),
                r.workers == 0 ? "plain" : std::to_string(r.workers).c_str(), r.seconds, r.speedup,
                r.identical ? "yes" : "NO");
  return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_file, "flat key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", args.sets, "override one config key (key=value), repeatable");
  sub->add_option("--out", args.out, "output directory (default .)");
  sub->add_option("--seed", args.seed, "top-level random seed");
  sub->add_option("--workers", args.workers, "worker threads (default: SDCM_WORKERS or 1)");
  sub->add_flag("--timings", args.timings, "write wall-clock seconds into output files");
  sub->add_option("overrides", args.overrides, "key=value overrides");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social discrete choice models on graphs"};
  app.require_subcommand(1);
  CommonArgs args;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic experiment (experiment=beta|w)", cmd_synth},
      {"fit", "train one model (model=logistic|latent_class|llgr|lcgr)", cmd_fit},
      {"predict", "predict with a saved model (model_file=...)", cmd_predict},
      {"cv", "masked k-fold cross-validation of several models", [](const CommonArgs& a) { return run_sweep(a, "cv"); }},
      {"sweep", "cross-validate several models over a lambda grid",
       [](const CommonArgs& a) { return run_sweep(a, "sweep"); }},
      {"path", "LCGR regularization path snapshots over a lambda grid", cmd_path},
      {"bench", "thread-scaling timings for ADMM and Gibbs sweeps", cmd_bench},
  };
  for (const auto& cmd : commands) add_common(app.add_subcommand(cmd.name, cmd.help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (const auto& cmd : commands) {
    if (!app.got_subcommand(cmd.name)) continue;
    try {
      return cmd.run(args);
    } catch (const ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitUsage;
    } catch (const SolverError& e) {
      std::fprintf(stderr, "solver error: %s\n", e.what());
      return kExitFailure;
    } catch (const sdcm::Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitUsage;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "internal error: %s\n", e.what());
      return kExitFailure;
    }
  }
  return kExitUsage;
}
