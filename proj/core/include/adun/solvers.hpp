#pragma once

#include <optional>
#include <vector>

#include "adun/problems.hpp"

namespace adun {

enum class ConstraintKind : std::uint8_t { l1_ball = 0, l0_ball = 1 };

/// Feasible set {x : f(x) <= R} with f = l1 norm or the nonzero count.
struct Constraint {
  ConstraintKind kind = ConstraintKind::l1_ball;
  double radius = 1.0;  // R for l1_ball
  int sparsity = 1;     // s for l0_ball

  static Constraint l1(double radius);
  static Constraint l0(int sparsity);

  /// f(x): l1 norm or nonzero count, matching the ball kind.
  double value(const Vector& x) const;
  Vector project(const Vector& z) const;
  /// 1 for the convex l1 ball, 2 for the non-convex l0 ball.
  double kappa() const { return kind == ConstraintKind::l1_ball ? 1.0 : 2.0; }
};

/// Elementwise sgn(z_i) * max(|z_i| - lambda, 0).
Vector soft_threshold(const Vector& z, double lambda);

/// Keeps the s largest-magnitude entries, zeroing the rest. Magnitude ties
/// break toward the lowest index so traces stay deterministic.
Vector project_l0(const Vector& z, int s);

/// Euclidean projection onto {v : |v|_1 <= R} by sort-then-threshold.
Vector project_l1(const Vector& z, double R);

struct SolverTrace {
  std::vector<Vector> iterates;           // iterate 0 is the initial point
  std::vector<double> objective_values;   // same length as iterates
  std::optional<std::vector<double>> errors_vs_truth;

  const Vector& final_iterate() const { return iterates.back(); }
  double final_error() const { return errors_vs_truth->back(); }
  int iterations() const { return static_cast<int>(iterates.size()) - 1; }
};

/// ISTA iteration x_{t+1} = S_lambda((I - beta A^T A) x_t + beta A^T y).
/// Recorded objective is 0.5 |y - Ax|^2 + (lambda/beta) |x|_1, the composite
/// objective this iteration descends monotonically when beta <= 1/|A|_2^2
/// (the threshold lambda corresponds to the prox of (lambda/beta)|x|_1 at
/// step beta). Stops early once |x_{t+1} - x_t| < tol.
SolverTrace ista_solve(const ProblemInstance& instance, double lambda, double beta, int max_iters,
                       double tol = 1e-10, const std::optional<Vector>& x0 = std::nullopt);

/// 0.5 (Gamma(n/2)/Gamma((n+1)/2))^2, the ~1/n learning parameter used by the
/// convergence analysis for raw N(0,1) measurement matrices.
double theoretical_step_size(int n);

/// Projected gradient descent x_{t+1} = P_K((I - beta A^T A) x_t + beta A^T y)
/// from x_0 = 0. Recorded objective is |y - Ax|^2. tol = 0 disables the
/// early stop.
SolverTrace pgd_solve(const ProblemInstance& instance, const Constraint& constraint, double beta,
                      int max_iters, double tol = 1e-10,
                      const std::optional<Vector>& x0 = std::nullopt);

/// PGD with a learned gradient: x_{t+1} = P_K((I - B A) x_t + B y). The step
/// size is embedded in B.
SolverTrace pgd_solve_learned(const ProblemInstance& instance, const Constraint& constraint,
                              const Matrix& B, int max_iters, double tol = 1e-10,
                              const std::optional<Vector>& x0 = std::nullopt);

struct OracleResult {
  std::vector<SolverTrace> traces;  // in the order of the input instances
  std::vector<int> order;           // processing order: indices sorted by f(x) ascending
  double total_error = 0.0;         // sum of final |x_hat_i - x_i|
};

/// Oracle adaptive-depth PGD: instances are processed in ascending f(x_i)
/// order; during phase j every not-yet-ejected signal runs PGD with the
/// radius R = f(x_j) for budgets[j] iterations, and signal j is ejected at the
/// end of its phase. Later signals therefore pass through earlier mismatched
/// phases before reaching their perfectly tuned one.
OracleResult oracle_adaptive_pgd(const std::vector<ProblemInstance>& instances, ConstraintKind kind,
                                 const std::vector<int>& budgets, double beta);

}  // namespace adun
