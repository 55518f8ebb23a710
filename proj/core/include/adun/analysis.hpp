#pragma once

#include <map>
#include <string>
#include <vector>

#include "adun/halting.hpp"
#include "adun/solvers.hpp"

namespace adun {

/// 10 log10(|x - x_hat|^2 / |x|^2), floored at -160 dB for exact recovery.
double nmse_db(const Vector& estimate, const Vector& truth);

constexpr double kNmseFloorDb = -160.0;

struct SparsityStats {
  double nmse_db = 0.0;
  double avg_layers = 0.0;
  long count = 0;
};

struct EvalReport {
  double nmse_db_mean = 0.0;   // dB of the mean error ratio
  double error_std = 0.0;      // std of per-sample squared l2 errors
  double success_rate = 0.0;   // fraction with per-sample NMSE below the threshold
  double avg_exit_layer = 0.0;
  std::vector<long> exit_histogram;  // counts per layer 1..L
  std::map<int, SparsityStats> per_sparsity;
  long samples = 0;
};

/// Runs infer_adaptive on every instance and aggregates the report.
EvalReport evaluate(const UnfoldedNet& net, const HaltingParams& hp,
                    const std::vector<ProblemInstance>& dataset, double epsilon,
                    double success_threshold_db = -10.0);

struct SweepRow {
  double epsilon = 0.0;
  double avg_layers = 0.0;
  double nmse_db = 0.0;
  double error_std = 0.0;
  double success_rate = 0.0;
};

/// One evaluate per epsilon; rows are sorted by epsilon descending.
std::vector<SweepRow> sweep_epsilon(const UnfoldedNet& net, const HaltingParams& hp,
                                    const std::vector<ProblemInstance>& dataset,
                                    std::vector<double> epsilons,
                                    double success_threshold_db = -10.0);

/// Unit directions that generate the descent cone of f at x, each with a
/// witness step alpha for which f(x + alpha d) <= f(x) holds exactly.
/// l1: d = (z - x)/|z - x| for random z in the |x|_1 ball (z = 0 included
/// first, so -x/|x| is always a member). l0: heuristic support perturbations
/// and swaps; the swap directions are cone members only at their witness step.
struct ConeSampleSet {
  Vector anchor;
  ConstraintKind kind = ConstraintKind::l1_ball;
  std::vector<Vector> directions;
  std::vector<double> witness_alphas;
};

ConeSampleSet sample_descent_cone(const Vector& x, ConstraintKind kind, int n_samples,
                                  std::uint64_t seed);

/// Adds d = (z - x)/|z - x| for feasible points z (f(z) <= f(x)), e.g. solver
/// iterates, which are exact descent-set members. Tightens the Monte Carlo
/// estimates below while preserving their lower-bound soundness.
void add_feasible_points(ConeSampleSet& set, const std::vector<Vector>& feasible_points);

/// Monte Carlo lower bound of rho(B) = sup_{u,v} u^T (I - BA) v over the
/// sampled directions (all pairs, including u = v).
double estimate_rho(const Matrix& B, const Matrix& A, const ConeSampleSet& samples);

/// Monte Carlo lower bound of xi(B) = sup_u u^T B omega/|omega|.
double estimate_xi(const Matrix& B, const Vector& noise_direction, const ConeSampleSet& samples);

struct BoundReport {
  std::vector<double> observed;  // |x_t - x| per iteration, t = 0..T
  std::vector<double> bound;     // bound value with the estimated factors
  int violations = 0;
  bool applicable = true;        // kappa_f * rho_hat < 1
  std::string verdict;           // "satisfied", "inconclusive (sampling)", "inapplicable"
  double kappa_rho = 0.0;
};

/// Checks the learned-PGD error bound
///   |x_t - x| <= (k rho)^t |x| + k (1-(k rho)^t)/(1-k rho) xi |omega|
/// against an observed trace. rho_hat/xi_hat are lower bounds of suprema, so
/// a violation is reported as inconclusive sampling rather than a bound
/// failure.
BoundReport verify_learned_pgd_bound(const SolverTrace& trace, double rho_hat, double xi_hat,
                                     double kappa_f, double noise_norm, double x_norm);

struct ContractionReport {
  int trials = 0;
  int successes = 0;          // error < success_error within max_iters
  double success_error = 1e-6;
  std::vector<double> final_errors;
  std::vector<double> mismatch_errors;  // same seeds with R = 0.5 f(x)
};

/// Empirical contraction check for perfectly tuned l1 PGD on seeded
/// column-normalized Gaussian instances, plus the R = 0.5 f(x) mismatch arm.
/// The measurement-count sufficiency machinery (minimum sample counts from
/// cone widths and their confidence parameter) is intentionally not computed;
/// contraction is observed directly on the drawn instances.
ContractionReport pgd_contraction_experiment(int n, int m, int s, int trials, int max_iters,
                                             double beta, std::uint64_t seed);

struct OracleDepthReport {
  std::vector<double> oracle_errors;  // per signal, ascending f order
  std::vector<double> fixed_errors;   // same signals, common median radius
  double oracle_total = 0.0;
  double fixed_total = 0.0;
};

/// Oracle adaptive-depth PGD against a fixed-R (median f) PGD on the same K
/// signals; the fixed arm gets each signal's full cumulative budget.
OracleDepthReport oracle_depth_experiment(int K, int n, int m, const std::vector<int>& sparsities,
                                          const std::vector<int>& schedule, std::uint64_t seed);

/// Constraint-geometry constant: 1 for the convex l1 ball, 2 for the l0 ball.
double kappa_f(ConstraintKind kind);

/// Fixed-depth per-layer NMSE curve (dB at depths 1..L) over a dataset.
std::vector<double> per_layer_nmse_db(const UnfoldedNet& net,
                                      const std::vector<ProblemInstance>& dataset);

/// Mean halting score per layer over a dataset (training-mode full passes).
std::vector<double> mean_scores_per_layer(const UnfoldedNet& net, const HaltingParams& hp,
                                          const std::vector<ProblemInstance>& dataset);

}  // namespace adun
