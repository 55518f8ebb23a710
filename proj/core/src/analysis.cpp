#include "adun/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adun/parallel.hpp"
#include "adun/rng.hpp"

namespace adun {

double nmse_db(const Vector& estimate, const Vector& truth) {
  double denom = truth.squaredNorm();
  if (!(denom > 0.0)) throw ParamError("nmse_db: truth must be nonzero");
  double ratio = (truth - estimate).squaredNorm() / denom;
  if (ratio <= 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

double kappa_f(ConstraintKind kind) { return kind == ConstraintKind::l1_ball ? 1.0 : 2.0; }

EvalReport evaluate(const UnfoldedNet& net, const HaltingParams& hp,
                    const std::vector<ProblemInstance>& dataset, double epsilon,
                    double success_threshold_db) {
  if (dataset.empty()) throw ParamError("evaluate: empty dataset");
  EvalReport report;
  report.exit_histogram.assign(static_cast<std::size_t>(net.depth), 0);
  report.samples = static_cast<long>(dataset.size());

  // per-sample slots first, sequential aggregation after: the result is
  // identical for any worker count
  const auto count_idx = static_cast<Eigen::Index>(dataset.size());
  std::vector<double> err_sqs(dataset.size());
  std::vector<int> exits(dataset.size());
  parallel_for(count_idx, thread_count(), [&](Eigen::Index i) {
    const auto& inst = dataset[static_cast<std::size_t>(i)];
    AdaptiveOutput out = infer_adaptive(net, hp, inst.y(), epsilon);
    err_sqs[static_cast<std::size_t>(i)] = (inst.x() - out.estimate).squaredNorm();
    exits[static_cast<std::size_t>(i)] = out.exit_layer;
  });

  double ratio_sum = 0.0;
  double sq_err_sum = 0.0, sq_err_sq_sum = 0.0;
  long successes = 0;
  double exit_sum = 0.0;
  std::map<int, std::pair<double, std::pair<double, long>>> by_s;  // s -> (ratio_sum, (layer_sum, count))

  for (std::size_t j = 0; j < dataset.size(); ++j) {
    const auto& inst = dataset[j];
    double err_sq = err_sqs[j];
    int exit_layer = exits[j];
    double ratio = err_sq / inst.x().squaredNorm();
    ratio_sum += ratio;
    sq_err_sum += err_sq;
    sq_err_sq_sum += err_sq * err_sq;
    if (10.0 * std::log10(std::max(ratio, 1e-300)) < success_threshold_db) ++successes;
    exit_sum += exit_layer;
    ++report.exit_histogram[static_cast<std::size_t>(exit_layer - 1)];
    auto& slot = by_s[inst.signal.sparsity];
    slot.first += ratio;
    slot.second.first += exit_layer;
    slot.second.second += 1;
  }
  const double count = static_cast<double>(dataset.size());
  double mean_ratio = ratio_sum / count;
  report.nmse_db_mean =
      mean_ratio > 0.0 ? std::max(10.0 * std::log10(mean_ratio), kNmseFloorDb) : kNmseFloorDb;
  double mean_sq = sq_err_sum / count;
  report.error_std = std::sqrt(std::max(0.0, sq_err_sq_sum / count - mean_sq * mean_sq));
  report.success_rate = static_cast<double>(successes) / count;
  report.avg_exit_layer = exit_sum / count;
  for (const auto& [s, slot] : by_s) {
    SparsityStats stats;
    double mean_r = slot.first / static_cast<double>(slot.second.second);
    stats.nmse_db = mean_r > 0.0 ? std::max(10.0 * std::log10(mean_r), kNmseFloorDb) : kNmseFloorDb;
    stats.avg_layers = slot.second.first / static_cast<double>(slot.second.second);
    stats.count = slot.second.second;
    report.per_sparsity[s] = stats;
  }
  return report;
}

std::vector<SweepRow> sweep_epsilon(const UnfoldedNet& net, const HaltingParams& hp,
                                    const std::vector<ProblemInstance>& dataset,
                                    std::vector<double> epsilons, double success_threshold_db) {
  if (epsilons.empty()) throw ParamError("sweep_epsilon: need at least one epsilon");
  for (double e : epsilons)
    if (!(e > 0.0 && e < 1.0)) throw ParamError("sweep_epsilon: epsilons must lie in (0,1)");
  std::sort(epsilons.begin(), epsilons.end(), std::greater<double>());
  std::vector<SweepRow> rows;
  rows.reserve(epsilons.size());
  for (double eps : epsilons) {
    EvalReport report = evaluate(net, hp, dataset, eps, success_threshold_db);
    rows.push_back({eps, report.avg_exit_layer, report.nmse_db_mean, report.error_std,
                    report.success_rate});
  }
  return rows;
}

namespace {

// uniform direction on the l1 sphere via normalized Laplace draws
Vector l1_sphere_point(Eigen::Index m, Rng& rng) {
  Vector v(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double u = 1.0 - rng.uniform01();
    v[i] = rng.rademacher() * (-std::log(u));
  }
  return v / v.lpNorm<1>();
}

}  // namespace

ConeSampleSet sample_descent_cone(const Vector& x, ConstraintKind kind, int n_samples,
                                  std::uint64_t seed) {
  if (x.norm() == 0.0) throw ParamError("sample_descent_cone: x must be nonzero");
  if (n_samples < 1) throw ParamError("sample_descent_cone: need n_samples >= 1");
  ConeSampleSet set;
  set.anchor = x;
  set.kind = kind;
  set.directions.reserve(static_cast<std::size_t>(n_samples));
  set.witness_alphas.reserve(static_cast<std::size_t>(n_samples));
  Rng rng(derive_seed(seed, 0xC04E));
  const auto m = x.size();

  if (kind == ConstraintKind::l1_ball) {
    const double radius = x.lpNorm<1>();
    // z = 0 first: shrinking toward the origin never grows the norm
    {
      Vector d = -x / x.norm();
      set.directions.push_back(d);
      set.witness_alphas.push_back(x.norm());
    }
    while (static_cast<int>(set.directions.size()) < n_samples) {
      // random point in the ball: sphere point scaled by U^(1/m)
      double scale = std::pow(rng.uniform01(), 1.0 / static_cast<double>(m));
      Vector z = l1_sphere_point(m, rng) * (radius * scale);
      Vector d = z - x;
      double norm = d.norm();
      if (norm < 1e-14) continue;
      set.directions.push_back(d / norm);
      set.witness_alphas.push_back(norm);
    }
    return set;
  }

  // l0 cone: perturbations on the support are members at any step; swap
  // directions (cancel k support coordinates exactly, activate k new ones)
  // are members only at the cancellation step.
  std::vector<Eigen::Index> support, off_support;
  for (Eigen::Index i = 0; i < m; ++i)
    (x[i] != 0.0 ? support : off_support).push_back(i);
  const int s = static_cast<int>(support.size());
  while (static_cast<int>(set.directions.size()) < n_samples) {
    Vector d = Vector::Zero(m);
    int k = s > 0 ? static_cast<int>(rng.uniform_int(0, std::min<std::int64_t>(s, 3))) : 0;
    double alpha = 1.0;
    if (k == 0 || off_support.empty()) {
      for (auto i : support) d[i] = rng.normal();
    } else {
      // swap: cancel k distinct support coordinates, activate k new ones
      for (auto i : support) d[i] = 0.1 * rng.normal();
      std::vector<Eigen::Index> cancel_pool = support;
      for (int j = 0; j < k; ++j) {
        auto pick = static_cast<std::size_t>(
            rng.uniform_int(j, static_cast<std::int64_t>(cancel_pool.size()) - 1));
        std::swap(cancel_pool[static_cast<std::size_t>(j)], cancel_pool[pick]);
        auto cancel = cancel_pool[static_cast<std::size_t>(j)];
        d[cancel] = -x[cancel];
        auto fresh = off_support[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(off_support.size()) - 1))];
        d[fresh] = rng.normal();
      }
    }
    double norm = d.norm();
    if (norm < 1e-14) continue;
    set.directions.push_back(d / norm);
    set.witness_alphas.push_back(alpha * norm);  // the unnormalized step restores exact cancellation
  }
  return set;
}

void add_feasible_points(ConeSampleSet& set, const std::vector<Vector>& feasible_points) {
  for (const auto& z : feasible_points) {
    Vector d = z - set.anchor;
    double norm = d.norm();
    if (norm < 1e-14) continue;
    set.directions.push_back(d / norm);
    set.witness_alphas.push_back(norm);
  }
}

double estimate_rho(const Matrix& B, const Matrix& A, const ConeSampleSet& samples) {
  if (samples.directions.empty()) throw ParamError("estimate_rho: empty sample set");
  const auto m = A.cols();
  const auto count = static_cast<Eigen::Index>(samples.directions.size());
  Matrix v(m, count);
  for (Eigen::Index j = 0; j < count; ++j) v.col(j) = samples.directions[static_cast<std::size_t>(j)];
  Matrix iter_mat = Matrix::Identity(m, m) - B * A;
  Matrix gram = v.transpose() * (iter_mat * v);  // all (u, v) pairs, diagonal included
  return gram.maxCoeff();
}

double estimate_xi(const Matrix& B, const Vector& noise_direction, const ConeSampleSet& samples) {
  double norm = noise_direction.norm();
  if (!(norm > 0.0)) throw ParamError("estimate_xi: noise direction must be nonzero");
  Vector bw = B * (noise_direction / norm);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& u : samples.directions) best = std::max(best, u.dot(bw));
  return best;
}

BoundReport verify_learned_pgd_bound(const SolverTrace& trace, double rho_hat, double xi_hat,
                                     double kappa_f, double noise_norm, double x_norm) {
  if (!trace.errors_vs_truth) throw ParamError("verify_learned_pgd_bound: trace lacks errors");
  BoundReport report;
  report.kappa_rho = kappa_f * rho_hat;
  report.observed = *trace.errors_vs_truth;
  if (!(report.kappa_rho < 1.0)) {
    report.applicable = false;
    report.verdict = "inapplicable";
    return report;
  }
  const double kr = report.kappa_rho;
  report.bound.reserve(report.observed.size());
  for (std::size_t t = 0; t < report.observed.size(); ++t) {
    double krt = std::pow(kr, static_cast<double>(t));
    double bound = krt * x_norm;
    if (noise_norm > 0.0)
      bound += kappa_f * (1.0 - krt) / (1.0 - kr) * xi_hat * noise_norm;
    report.bound.push_back(bound);
    if (report.observed[t] > bound * (1.0 + 1e-12)) ++report.violations;
  }
  // rho_hat and xi_hat are lower bounds of suprema; a violation only shows
  // the sampling was too sparse, never that the bound failed
  report.verdict = report.violations == 0 ? "satisfied" : "inconclusive (sampling)";
  return report;
}

ContractionReport pgd_contraction_experiment(int n, int m, int s, int trials, int max_iters, double beta,
                                   std::uint64_t seed) {
  if (trials < 1) throw ParamError("pgd_contraction_experiment: trials must be >= 1");
  ContractionReport report;
  report.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
    auto matrix = std::make_shared<const MeasurementMatrix>(
        gen_matrix(MatrixKind::gaussian, n, m, trial_seed));
    SparseSignal signal = gen_sparse_signal(m, s, s, derive_seed(trial_seed, 1));
    ProblemInstance inst = gen_measurement(matrix, std::move(signal), std::nullopt, trial_seed);
    double radius = inst.x().lpNorm<1>();
    SolverTrace perfect = pgd_solve(inst, Constraint::l1(radius), beta, max_iters, 0.0);
    SolverTrace mismatch = pgd_solve(inst, Constraint::l1(0.5 * radius), beta, max_iters, 0.0);
    report.final_errors.push_back(perfect.final_error());
    report.mismatch_errors.push_back(mismatch.final_error());
    if (perfect.final_error() < report.success_error) ++report.successes;
  }
  return report;
}

OracleDepthReport oracle_depth_experiment(int K, int n, int m, const std::vector<int>& sparsities,
                                   const std::vector<int>& schedule, std::uint64_t seed) {
  if (K < 1) throw ParamError("oracle_depth_experiment: K must be >= 1");
  if (static_cast<int>(sparsities.size()) != K || static_cast<int>(schedule.size()) != K)
    throw ParamError("oracle_depth_experiment: need K sparsities and K budgets");
  auto matrix = std::make_shared<const MeasurementMatrix>(
      gen_matrix(MatrixKind::gaussian, n, m, derive_seed(seed, 0xA)));
  std::vector<ProblemInstance> instances;
  instances.reserve(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) {
    SparseSignal signal =
        gen_sparse_signal(m, sparsities[static_cast<std::size_t>(i)], sparsities[static_cast<std::size_t>(i)],
                          derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
    instances.push_back(gen_measurement(matrix, std::move(signal), std::nullopt, seed));
  }
  // continuous draws make f ties a measure-zero event; ordering stays
  // deterministic either way via the index tie-break in oracle_adaptive_pgd
  const double beta = 0.6;
  OracleResult oracle = oracle_adaptive_pgd(instances, ConstraintKind::l1_ball, schedule, beta);

  OracleDepthReport report;
  std::vector<double> f_values;
  f_values.reserve(instances.size());
  for (const auto& inst : instances) f_values.push_back(inst.x().lpNorm<1>());
  std::vector<double> sorted_f = f_values;
  std::sort(sorted_f.begin(), sorted_f.end());
  double median = sorted_f[sorted_f.size() / 2];

  int cumulative = 0;
  for (int k = 0; k < K; ++k) {
    const auto i = static_cast<std::size_t>(oracle.order[static_cast<std::size_t>(k)]);
    cumulative += schedule[static_cast<std::size_t>(k)];
    report.oracle_errors.push_back(oracle.traces[i].errors_vs_truth->back());
    SolverTrace fixed =
        pgd_solve(instances[i], Constraint::l1(median), beta, cumulative, 0.0);
    report.fixed_errors.push_back(fixed.final_error());
  }
  report.oracle_total = std::accumulate(report.oracle_errors.begin(), report.oracle_errors.end(), 0.0);
  report.fixed_total = std::accumulate(report.fixed_errors.begin(), report.fixed_errors.end(), 0.0);
  return report;
}

std::vector<double> per_layer_nmse_db(const UnfoldedNet& net,
                                      const std::vector<ProblemInstance>& dataset) {
  if (dataset.empty()) throw ParamError("per_layer_nmse_db: empty dataset");
  std::vector<double> ratio_sums(static_cast<std::size_t>(net.depth), 0.0);
  for (const auto& inst : dataset) {
    LayerTrace trace = forward(net, inst.y());
    double denom = inst.x().squaredNorm();
    for (int t = 0; t < net.depth; ++t)
      ratio_sums[static_cast<std::size_t>(t)] +=
          (inst.x() - trace.layer_outputs[static_cast<std::size_t>(t)]).squaredNorm() / denom;
  }
  std::vector<double> out(static_cast<std::size_t>(net.depth));
  for (int t = 0; t < net.depth; ++t) {
    double mean = ratio_sums[static_cast<std::size_t>(t)] / static_cast<double>(dataset.size());
    out[static_cast<std::size_t>(t)] =
        mean > 0.0 ? std::max(10.0 * std::log10(mean), kNmseFloorDb) : kNmseFloorDb;
  }
  return out;
}

std::vector<double> mean_scores_per_layer(const UnfoldedNet& net, const HaltingParams& hp,
                                          const std::vector<ProblemInstance>& dataset) {
  if (dataset.empty()) throw ParamError("mean_scores_per_layer: empty dataset");
  std::vector<double> sums(static_cast<std::size_t>(net.depth), 0.0);
  for (const auto& inst : dataset) {
    ScoredTrace st = score_trace(net, hp, inst.y());
    for (int t = 0; t < net.depth; ++t) sums[static_cast<std::size_t>(t)] += st.scores[static_cast<std::size_t>(t)];
  }
  for (auto& v : sums) v /= static_cast<double>(dataset.size());
  return sums;
}

}  // namespace adun
