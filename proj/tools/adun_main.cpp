// adun - sparse recovery with unfolded networks and adaptive depth.
// Subcommands cover data generation, classic solvers, training, adaptive
// inference, evaluation sweeps, and the convergence-theory harnesses.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "adun/analysis.hpp"
#include "adun/config.hpp"
#include "adun/experiment.hpp"
#include "adun/io.hpp"
#include "adun/parallel.hpp"
#include "adun/rng.hpp"
#include "adun/training.hpp"

namespace fs = std::filesystem;
using namespace adun;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

ExperimentConfig load_config(const std::string& path, const GlobalOptions& global) {
  ConfigMap map = path.empty() ? ConfigMap() : ConfigMap::parse_file(path);
  if (global.seed) {
    map.set("seed", *global.seed);
    if (!map.has("batch.master_seed")) map.set("batch.master_seed", *global.seed);
  }
  if (global.threads) map.set("threads", static_cast<long>(*global.threads));
  if (global.out) map.set("out.dir", *global.out);
  return experiment_config_from_map(map);
}

fs::path ensure_dir(const std::string& dir) {
  fs::path path(dir);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
  return path;
}

std::vector<ProblemInstance> load_dataset(const std::string& path) {
  return dataset_batch_instances(read_dataset_batch(path));
}

UnfoldedNet load_bound_net(const std::string& ckpt_path, const std::string& dataset_path,
                           std::optional<HaltingParams>* hp_out) {
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  DatasetBatch batch = read_dataset_batch(dataset_path);
  bind_matrix(ckpt.net, batch.A);
  if (hp_out) *hp_out = std::move(ckpt.hp);
  return std::move(ckpt.net);
}

void write_trace_csv(const fs::path& path, const SolverTrace& trace) {
  CsvWriter csv(path, {"iter", "objective", "error_vs_truth"});
  for (std::size_t t = 0; t < trace.iterates.size(); ++t) {
    csv.field(static_cast<long>(t));
    csv.field(trace.objective_values[t]);
    csv.field(trace.errors_vs_truth ? (*trace.errors_vs_truth)[t] : 0.0);
    csv.end_row();
  }
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["nmse_db_mean"] = report.nmse_db_mean;
  j["error_std"] = report.error_std;
  j["success_rate"] = report.success_rate;
  j["avg_exit_layer"] = report.avg_exit_layer;
  j["samples"] = report.samples;
  j["exit_histogram"] = report.exit_histogram;
  nlohmann::json per_s = nlohmann::json::object();
  for (const auto& [s, stats] : report.per_sparsity)
    per_s[std::to_string(s)] = {{"nmse_db", stats.nmse_db},
                                {"avg_layers", stats.avg_layers},
                                {"count", stats.count}};
  j["per_sparsity"] = per_s;
  return j;
}

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& dataset_out) {
  fs::path dir = ensure_dir(dataset_out.empty() ? cfg.out_dir : dataset_out);
  BatchStream stream(cfg.batch);
  experiment_config_to_map(cfg).write_file(dir / "resolved.cfg");
  for (int b = 0; b < cfg.batch.n_batches; ++b) {
    char name[32];
    std::snprintf(name, sizeof name, "batch_%05d.bin", b);
    write_dataset_batch(dir / name, stream.batch(b));
  }
  std::cout << "wrote " << cfg.batch.n_batches << " batch files to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_solve(const ExperimentConfig& cfg, const std::string& algo, double beta, double lambda,
              double radius, int iters, int sparsity, const std::string& out_csv) {
  BatchStream stream(cfg.batch);
  auto batch = stream.batch(0);
  const ProblemInstance& inst = batch.front();
  fs::path out = out_csv.empty() ? ensure_dir(cfg.out_dir) / "trace.csv" : fs::path(out_csv);
  if (!out.parent_path().empty()) ensure_dir(out.parent_path().string());

  if (algo == "ista") {
    write_trace_csv(out, ista_solve(inst, lambda, beta, iters));
  } else if (algo == "pgd-l1") {
    double r = radius > 0.0 ? radius : inst.x().lpNorm<1>();
    write_trace_csv(out, pgd_solve(inst, Constraint::l1(r), beta, iters));
  } else if (algo == "pgd-l0") {
    int s = sparsity > 0 ? sparsity : inst.signal.sparsity;
    write_trace_csv(out, pgd_solve(inst, Constraint::l0(s), beta, iters));
  } else if (algo == "oracle-pgd") {
    std::vector<ProblemInstance> instances(batch.begin(),
                                           batch.begin() + std::min<std::size_t>(batch.size(), 3));
    std::vector<int> budgets(instances.size(), iters);
    OracleResult result = oracle_adaptive_pgd(instances, ConstraintKind::l1_ball, budgets, beta);
    CsvWriter csv(out, {"signal", "iter", "objective", "error_vs_truth"});
    for (std::size_t i = 0; i < result.traces.size(); ++i) {
      const auto& trace = result.traces[i];
      for (std::size_t t = 0; t < trace.iterates.size(); ++t) {
        csv.field(static_cast<long>(i));
        csv.field(static_cast<long>(t));
        csv.field(trace.objective_values[t]);
        csv.field((*trace.errors_vs_truth)[t]);
        csv.end_row();
      }
    }
    std::cout << "oracle total error " << format_double(result.total_error) << "\n";
  } else {
    throw ParamError("unknown --algo: " + algo);
  }
  std::cout << "trace -> " << out.string() << "\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& mode, const std::string& resume,
              const std::string& out_ckpt) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  BatchStream stream(cfg.train.data);
  const Matrix& a = stream.matrix()->entries;
  experiment_config_to_map(cfg).write_file(dir / "resolved.cfg");

  TrainResult result;
  if (mode == "fixed") {
    UnfoldedNet net;
    if (resume.empty()) {
      net = init_network(cfg.net_kind, a, cfg.fixed_depth, cfg.shared, cfg.seed, cfg.lambda0,
                         cfg.cpss_p_max);
    } else {
      Checkpoint ckpt = read_checkpoint(resume);
      bind_matrix(ckpt.net, a);
      net = std::move(ckpt.net);
    }
    HaltingParams hp = init_halting(cfg.halting_design, a.rows(), net.depth, cfg.seed, cfg.h_last);
    result = train_fixed_depth(cfg.train, std::move(net), hp, stream);
    write_checkpoint(out_ckpt.empty() ? dir / "fixed.ckpt" : fs::path(out_ckpt), result.net, nullptr);
  } else if (mode == "two-stage") {
    UnfoldedNet net;
    std::optional<HaltingParams> hp;
    if (resume.empty()) {
      net = init_network(cfg.net_kind, a, cfg.depth, cfg.shared, cfg.seed, cfg.lambda0,
                         cfg.cpss_p_max);
    } else {
      Checkpoint ckpt = read_checkpoint(resume);
      bind_matrix(ckpt.net, a);
      net = extend_depth(ckpt.net, std::max(cfg.depth, ckpt.net.depth));
      hp = std::move(ckpt.hp);
    }
    if (!hp) hp = init_halting(cfg.halting_design, a.rows(), net.depth, cfg.seed, cfg.h_last);
    result = train_two_stage(cfg.train, std::move(net), std::move(*hp), stream);
    write_checkpoint(out_ckpt.empty() ? dir / "adaptive.ckpt" : fs::path(out_ckpt), result.net,
                     &result.hp);
  } else {
    throw ParamError("unknown --mode: " + mode);
  }

  CsvWriter csv(dir / "history.csv", {"batch", "loss", "lr", "stage"});
  for (const auto& row : result.history) {
    csv.field(static_cast<long>(row.batch));
    csv.field(row.loss);
    csv.field(row.lr);
    csv.field(static_cast<long>(row.stage));
    csv.end_row();
  }
  std::cout << "trained " << result.history.size() << " batches; history -> "
            << (dir / "history.csv").string() << "\n";
  return kExitOk;
}

int cmd_infer(const ExperimentConfig& cfg, const std::string& ckpt, const std::string& dataset,
              double epsilon) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  std::optional<HaltingParams> hp;
  UnfoldedNet net = load_bound_net(ckpt, dataset, &hp);
  if (!hp) throw ParamError("checkpoint has no halting parameters; train with mode two-stage");
  auto instances = load_dataset(dataset);

  CsvWriter csv(dir / "infer.csv", {"sample_id", "exit_layer", "nmse_db", "scores"});
  std::vector<long> histogram(static_cast<std::size_t>(net.depth), 0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    AdaptiveOutput out = infer_adaptive(net, *hp, instances[i].y(), epsilon);
    csv.field(static_cast<long>(i));
    csv.field(static_cast<long>(out.exit_layer));
    csv.field(nmse_db(out.estimate, instances[i].x()));
    for (double h : out.scores) csv.field(h);
    csv.end_row();
    ++histogram[static_cast<std::size_t>(out.exit_layer - 1)];
  }
  CsvWriter hist(dir / "exit_hist.csv", {"layer", "count"});
  for (std::size_t layer = 0; layer < histogram.size(); ++layer) {
    hist.field(static_cast<long>(layer + 1));
    hist.field(histogram[layer]);
    hist.end_row();
  }
  std::cout << "inference over " << instances.size() << " samples -> " << (dir / "infer.csv").string()
            << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& ckpt, const std::string& dataset,
             double epsilon) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  std::optional<HaltingParams> hp;
  UnfoldedNet net = load_bound_net(ckpt, dataset, &hp);
  if (!hp) throw ParamError("checkpoint has no halting parameters");
  auto instances = load_dataset(dataset);
  EvalReport report = evaluate(net, *hp, instances, epsilon, cfg.success_threshold_db);

  CsvWriter csv(dir / "eval.csv",
                {"epsilon", "nmse_db_mean", "error_std", "success_rate", "avg_exit_layer", "samples"});
  csv.field(epsilon);
  csv.field(report.nmse_db_mean);
  csv.field(report.error_std);
  csv.field(report.success_rate);
  csv.field(report.avg_exit_layer);
  csv.field(report.samples);
  csv.end_row();

  std::ofstream json_out(dir / "eval.json");
  if (!json_out) throw IoError("cannot write: " + (dir / "eval.json").string());
  json_out << report_to_json(report).dump(2) << "\n";
  std::cout << report_to_json(report).dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& ckpt, const std::string& dataset) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  std::optional<HaltingParams> hp;
  UnfoldedNet net = load_bound_net(ckpt, dataset, &hp);
  if (!hp) throw ParamError("checkpoint has no halting parameters");
  auto instances = load_dataset(dataset);
  auto rows = sweep_epsilon(net, *hp, instances, cfg.epsilons, cfg.success_threshold_db);

  CsvWriter csv(dir / "sweep.csv", {"epsilon", "avg_layers", "nmse_db", "error_std", "success_rate"});
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows) {
    csv.field(row.epsilon);
    csv.field(row.avg_layers);
    csv.field(row.nmse_db);
    csv.field(row.error_std);
    csv.field(row.success_rate);
    csv.end_row();
    j.push_back({{"epsilon", row.epsilon},
                 {"avg_layers", row.avg_layers},
                 {"nmse_db", row.nmse_db},
                 {"error_std", row.error_std},
                 {"success_rate", row.success_rate}});
  }
  std::ofstream json_out(dir / "sweep.json");
  json_out << j.dump(2) << "\n";
  std::cout << "sweep over " << rows.size() << " epsilon values -> " << (dir / "sweep.csv").string()
            << "\n";
  return kExitOk;
}

int cmd_verify_theory(const ExperimentConfig& cfg) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  const std::uint64_t seed = cfg.seed;
  nlohmann::json summary;

  // contraction regimes: perfect-radius convergence + undersized-radius floor
  ContractionReport t1 = pgd_contraction_experiment(100, 200, 5, 100, 200, 0.6, derive_seed(seed, 1));
  {
    CsvWriter csv(dir / "pgd_contraction.csv", {"trial", "final_error", "mismatch_error"});
    for (std::size_t i = 0; i < t1.final_errors.size(); ++i) {
      csv.field(static_cast<long>(i));
      csv.field(t1.final_errors[i]);
      csv.field(t1.mismatch_errors[i]);
      csv.end_row();
    }
    summary["pgd_contraction"] = {{"trials", t1.trials},
                           {"successes", t1.successes},
                           {"success_error", t1.success_error},
                           {"verdict", t1.successes >= 95 ? "contraction confirmed" : "inconclusive"}};
  }

  // learned-PGD error bound with Monte Carlo cone factors
  {
    auto matrix = std::make_shared<const MeasurementMatrix>(
        gen_matrix(MatrixKind::gaussian, 100, 200, derive_seed(seed, 2)));
    SparseSignal signal = gen_sparse_signal(200, 5, 5, derive_seed(seed, 3));
    ProblemInstance inst = gen_measurement(matrix, std::move(signal), std::nullopt, seed);
    Matrix b = 0.6 * inst.A().transpose();
    double radius = inst.x().lpNorm<1>();
    SolverTrace trace = pgd_solve_learned(inst, Constraint::l1(radius), b, 60, 0.0);

    ConeSampleSet set = sample_descent_cone(inst.x(), ConstraintKind::l1_ball, 317,
                                            derive_seed(seed, 4));  // 317^2 > 1e5 pairs
    add_feasible_points(set, trace.iterates);
    double rho_hat = estimate_rho(b, inst.A(), set);
    BoundReport bound = verify_learned_pgd_bound(trace, rho_hat, 0.0, 1.0, 0.0, inst.x().norm());

    CsvWriter csv(dir / "learned_pgd_bound.csv", {"iter", "observed_error", "bound", "violation"});
    for (std::size_t t = 0; t < bound.observed.size(); ++t) {
      csv.field(static_cast<long>(t));
      csv.field(bound.observed[t]);
      csv.field(bound.bound.empty() ? 0.0 : bound.bound[t]);
      csv.field(static_cast<long>(!bound.bound.empty() && bound.observed[t] > bound.bound[t] ? 1 : 0));
      csv.end_row();
    }
    const auto pairs = static_cast<long>(set.directions.size() * set.directions.size());
    summary["learned_pgd_bound"] = {{"rho_hat", rho_hat},
                           {"kappa_rho", bound.kappa_rho},
                           {"cone_pairs", pairs},
                           {"violations", bound.violations},
                           {"verdict", bound.verdict}};
  }

  // oracle adaptive depth vs a fixed common radius
  OracleDepthReport t3 = oracle_depth_experiment(3, 100, 200, {3, 6, 9}, {200, 200, 200}, derive_seed(seed, 5));
  {
    CsvWriter csv(dir / "oracle_depth.csv", {"signal", "oracle_error", "fixed_error"});
    for (std::size_t i = 0; i < t3.oracle_errors.size(); ++i) {
      csv.field(static_cast<long>(i));
      csv.field(t3.oracle_errors[i]);
      csv.field(t3.fixed_errors[i]);
      csv.end_row();
    }
    summary["oracle_depth"] = {
        {"oracle_total", t3.oracle_total},
        {"fixed_total", t3.fixed_total},
        {"verdict",
         t3.oracle_total < 1e-5 && t3.fixed_total > 1e-2 ? "adaptive depth confirmed" : "inconclusive"}};
  }

  std::ofstream json_out(dir / "verify_summary.json");
  json_out << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_grad_check(const ExperimentConfig& cfg) {
  const double tolerance = 1e-4;
  double worst = 0.0;
  std::cout << "design      block            max_rel_error\n";
  for (auto design : {HaltingDesign::learned_q, HaltingDesign::no_q, HaltingDesign::mlp2}) {
    for (std::uint64_t trial = 0; trial < 2; ++trial) {
      std::uint64_t seed = derive_seed(cfg.seed, trial);
      for (std::uint64_t attempt = 0;; ++attempt) {
        std::uint64_t trial_seed = derive_seed(seed, attempt);
        auto matrix = std::make_shared<const MeasurementMatrix>(
            gen_matrix(MatrixKind::gaussian, 8, 16, trial_seed));
        SparseSignal signal = gen_sparse_signal(16, 4, 4, derive_seed(trial_seed, 1));
        ProblemInstance inst = gen_measurement(matrix, std::move(signal), std::nullopt, trial_seed);
        UnfoldedNet net = init_network(NetKind::lista, inst.A(), 3, true, trial_seed);
        Rng rng(derive_seed(trial_seed, 2));
        for (Eigen::Index i = 0; i < net.weights_W[0].size(); ++i)
          net.weights_W[0].data()[i] += 0.02 * rng.normal();
        for (Eigen::Index i = 0; i < net.weights_B[0].size(); ++i)
          net.weights_B[0].data()[i] += 0.02 * rng.normal();
        HaltingParams hp = init_halting(design, 8, 3, trial_seed);
        for (Eigen::Index t = 0; t < hp.phi.size(); ++t) {
          hp.phi[t] = 0.5 + rng.uniform01();
          hp.psi[t] = rng.normal();
        }
        if (has_threshold_kink(net, hp, inst, 1e-4)) continue;
        for (const auto& row : gradient_check(net, hp, inst, cfg.train.tau)) {
          std::printf("%-11s %-16s %.3e\n", to_string(design), row.block.c_str(), row.max_rel_error);
          worst = std::max(worst, row.max_rel_error);
        }
        break;
      }
    }
  }
  std::cout << "worst relative error: " << format_double(worst) << " (tolerance "
            << format_double(tolerance) << ")\n";
  return worst < tolerance ? kExitOk : kExitNumeric;
}

int cmd_experiment(const ExperimentConfig& cfg, bool dry_run) {
  if (cfg.scenario == Scenario::mixed_sparsity_fig1) {
    if (dry_run) {
      std::cout << "dry run: configuration is valid (mixed-sparsity study, three trainings)\n";
      return kExitOk;
    }
    run_mixed_sparsity_study(cfg, std::cout);
    return kExitOk;
  }
  run_experiment(cfg, dry_run, std::cout);
  return kExitOk;
}

int cmd_compare(const ExperimentConfig& cfg, const std::string& fixed_ckpt,
                const std::string& adaptive_ckpt, const std::string& dataset) {
  fs::path dir = ensure_dir(cfg.out_dir);
  set_thread_count(cfg.threads);
  std::optional<HaltingParams> hp;
  UnfoldedNet adaptive = load_bound_net(adaptive_ckpt, dataset, &hp);
  if (!hp) throw ParamError("adaptive checkpoint has no halting parameters");
  std::optional<HaltingParams> unused;
  UnfoldedNet fixed = load_bound_net(fixed_ckpt, dataset, &unused);
  auto instances = load_dataset(dataset);
  auto rows = compare_fixed_vs_adaptive(fixed, adaptive, *hp, instances, cfg.epsilons);
  CsvWriter csv(dir / "compare.csv", {"epsilon", "avg_layers_adaptive", "nmse_adaptive_db",
                                      "nmse_fixed_interp_db", "adaptive_wins"});
  int wins = 0;
  for (const auto& row : rows) {
    csv.field(row.epsilon);
    csv.field(row.avg_layers_adaptive);
    csv.field(row.nmse_adaptive_db);
    csv.field(row.nmse_fixed_interp_db);
    csv.field(static_cast<long>(row.adaptive_wins ? 1 : 0));
    csv.end_row();
    wins += row.adaptive_wins ? 1 : 0;
  }
  std::cout << "adaptive matches or beats fixed on " << wins << "/" << rows.size()
            << " sweep points -> " << (dir / "compare.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adun: sparse linear inverse recovery with adaptive-depth unfolded networks"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { global.seed = v; }, "master seed override");
  app.add_option_function<int>(
      "--threads", [&](int v) { global.threads = v; }, "worker threads for evaluation");
  app.add_option_function<std::string>(
      "--out", [&](const std::string& v) { global.out = v; }, "output directory override");

  std::string config_path, dataset_out, algo = "ista", mode = "two-stage", resume, out_ckpt;
  std::string ckpt_path, dataset_path, fixed_ckpt, adaptive_ckpt, out_csv;
  double beta = 0.6, lambda = 0.1, radius = 0.0, epsilon = 0.05;
  int iters = 200, sparsity = 0;
  bool dry_run = false;

  auto* gen = app.add_subcommand("gen-data", "generate dataset batch files");
  gen->add_option("--config", config_path, "experiment config file");
  gen->add_option("--dataset-out", dataset_out, "directory for batch files");

  auto* solve = app.add_subcommand("solve", "run a classic iterative solver");
  solve->add_option("--config", config_path, "experiment config file");
  solve->add_option("--algo", algo, "ista | pgd-l1 | pgd-l0 | oracle-pgd");
  solve->add_option("--beta", beta, "gradient step size");
  solve->add_option("--lambda", lambda, "ista shrinkage threshold");
  solve->add_option("--radius", radius, "l1 radius (0 = perfect oracle radius)");
  solve->add_option("--sparsity", sparsity, "l0 sparsity (0 = true sparsity)");
  solve->add_option("--iters", iters, "iteration budget");
  solve->add_option("--trace-out", out_csv, "trace csv path");

  auto* train = app.add_subcommand("train", "train fixed or adaptive networks");
  train->add_option("--config", config_path, "experiment config file");
  train->add_option("--mode", mode, "fixed | two-stage");
  train->add_option("--resume", resume, "checkpoint to initialize from");
  train->add_option("--out-ckpt", out_ckpt, "checkpoint output path");

  auto* infer = app.add_subcommand("infer", "adaptive-depth inference over a dataset");
  infer->add_option("--config", config_path, "experiment config file");
  infer->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  infer->add_option("--dataset", dataset_path, "dataset batch file")->required();
  infer->add_option("--epsilon", epsilon, "halting constant");

  auto* eval = app.add_subcommand("eval", "aggregate adaptive evaluation report");
  eval->add_option("--config", config_path, "experiment config file");
  eval->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  eval->add_option("--dataset", dataset_path, "dataset batch file")->required();
  eval->add_option("--epsilon", epsilon, "halting constant");

  auto* sweep = app.add_subcommand("sweep", "epsilon sweep producing depth-accuracy rows");
  sweep->add_option("--config", config_path, "experiment config file");
  sweep->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  sweep->add_option("--dataset", dataset_path, "dataset batch file")->required();

  auto* verify = app.add_subcommand("verify-theory", "empirical checks of the convergence results");
  verify->add_option("--config", config_path, "experiment config file");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of analytic gradients");
  grad->add_option("--config", config_path, "experiment config file");

  auto* experiment = app.add_subcommand("experiment", "full scenario pipeline");
  experiment->add_option("--config", config_path, "experiment config file");
  experiment->add_flag("--dry-run", dry_run, "validate and print the plan only");

  auto* compare = app.add_subcommand("compare", "fixed vs adaptive at matched average depth");
  compare->add_option("--config", config_path, "experiment config file");
  compare->add_option("--fixed", fixed_ckpt, "fixed-depth checkpoint")->required();
  compare->add_option("--adaptive", adaptive_ckpt, "adaptive checkpoint")->required();
  compare->add_option("--dataset", dataset_path, "dataset batch file")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load_config(config_path, global);
    if (gen->parsed()) return cmd_gen_data(cfg, dataset_out);
    if (solve->parsed()) return cmd_solve(cfg, algo, beta, lambda, radius, iters, sparsity, out_csv);
    if (train->parsed()) return cmd_train(cfg, mode, resume, out_ckpt);
    if (infer->parsed()) return cmd_infer(cfg, ckpt_path, dataset_path, epsilon);
    if (eval->parsed()) return cmd_eval(cfg, ckpt_path, dataset_path, epsilon);
    if (sweep->parsed()) return cmd_sweep(cfg, ckpt_path, dataset_path);
    if (verify->parsed()) return cmd_verify_theory(cfg);
    if (grad->parsed()) return cmd_grad_check(cfg);
    if (experiment->parsed()) return cmd_experiment(cfg, dry_run);
    if (compare->parsed()) return cmd_compare(cfg, fixed_ckpt, adaptive_ckpt, dataset_path);
    std::cerr << "no subcommand\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParamError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
