#include "adun/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adun {
namespace {

double l1_objective(const Matrix& a, const Vector& y, const Vector& x, double weight) {
  return 0.5 * (y - a * x).squaredNorm() + weight * x.lpNorm<1>();
}

double quadratic_objective(const Matrix& a, const Vector& y, const Vector& x) {
  return (y - a * x).squaredNorm();
}

Vector start_point(const ProblemInstance& instance, const std::optional<Vector>& x0) {
  if (!x0) return Vector::Zero(instance.A().cols());
  if (x0->size() != instance.A().cols())
    throw DimensionError("solver: x0 length does not match matrix columns");
  return *x0;
}

}  // namespace

Constraint Constraint::l1(double radius) {
  if (!(radius > 0.0)) throw ParamError("Constraint::l1: radius must be positive");
  Constraint c;
  c.kind = ConstraintKind::l1_ball;
  c.radius = radius;
  return c;
}

Constraint Constraint::l0(int sparsity) {
  if (sparsity < 1) throw ParamError("Constraint::l0: sparsity must be >= 1");
  Constraint c;
  c.kind = ConstraintKind::l0_ball;
  c.sparsity = sparsity;
  return c;
}

double Constraint::value(const Vector& x) const {
  if (kind == ConstraintKind::l1_ball) return x.lpNorm<1>();
  return static_cast<double>((x.array() != 0.0).count());
}

Vector Constraint::project(const Vector& z) const {
  if (kind == ConstraintKind::l1_ball) return project_l1(z, radius);
  return project_l0(z, sparsity);
}

Vector soft_threshold(const Vector& z, double lambda) {
  if (lambda < 0.0) throw ParamError("soft_threshold: lambda must be >= 0");
  return z.array().sign() * (z.array().abs() - lambda).max(0.0);
}

Vector project_l0(const Vector& z, int s) {
  if (s < 1 || s > z.size()) throw ParamError("project_l0: s out of range");
  if (s == z.size()) return z;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(z.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::nth_element(idx.begin(), idx.begin() + (s - 1), idx.end(),
                   [&z](Eigen::Index a, Eigen::Index b) {
                     double fa = std::abs(z[a]), fb = std::abs(z[b]);
                     if (fa != fb) return fa > fb;
                     return a < b;  // tie -> lowest index wins
                   });
  Vector out = Vector::Zero(z.size());
  for (int k = 0; k < s; ++k) out[idx[static_cast<std::size_t>(k)]] = z[idx[static_cast<std::size_t>(k)]];
  return out;
}

Vector project_l1(const Vector& z, double R) {
  if (!(R > 0.0)) throw ParamError("project_l1: R must be positive");
  if (z.lpNorm<1>() <= R) return z;
  // sort |z| descending, find the largest k with u_k > (cumsum_k - R)/k
  std::vector<double> u(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(z[i]);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumsum += u[k];
    double candidate = (cumsum - R) / static_cast<double>(k + 1);
    if (u[k] > candidate)
      theta = candidate;
    else
      break;
  }
  // rounding can leave a tiny negative theta when z sits on the ball surface
  return soft_threshold(z, std::max(theta, 0.0));
}

double theoretical_step_size(int n) {
  if (n < 1) throw ParamError("theoretical_step_size: n must be >= 1");
  double log_ratio = std::lgamma(n / 2.0) - std::lgamma((n + 1) / 2.0);
  return 0.5 * std::exp(2.0 * log_ratio);
}

SolverTrace ista_solve(const ProblemInstance& instance, double lambda, double beta, int max_iters,
                       double tol, const std::optional<Vector>& x0) {
  if (lambda < 0.0) throw ParamError("ista_solve: lambda must be >= 0");
  const Matrix& a = instance.A();
  const Vector& y = instance.y();
  const Matrix gram = a.transpose() * a;
  const Vector aty = a.transpose() * y;
  const double weight = beta > 0.0 ? lambda / beta : lambda;

  SolverTrace trace;
  trace.errors_vs_truth.emplace();
  Vector x = start_point(instance, x0);
  trace.iterates.push_back(x);
  trace.objective_values.push_back(l1_objective(a, y, x, weight));
  trace.errors_vs_truth->push_back((x - instance.x()).norm());
  for (int t = 0; t < max_iters; ++t) {
    Vector next = soft_threshold(x - beta * (gram * x - aty), lambda);
    double step = (next - x).norm();
    x = std::move(next);
    trace.iterates.push_back(x);
    trace.objective_values.push_back(l1_objective(a, y, x, weight));
    trace.errors_vs_truth->push_back((x - instance.x()).norm());
    if (tol > 0.0 && step < tol) break;
  }
  return trace;
}

namespace {

SolverTrace pgd_run(const ProblemInstance& instance, const Constraint& constraint, const Matrix& iter_mat,
                    const Vector& input_term, int max_iters, double tol,
                    const std::optional<Vector>& x0) {
  // iterate x <- P_K(iter_mat x + input_term)
  SolverTrace trace;
  trace.errors_vs_truth.emplace();
  Vector x = start_point(instance, x0);
  trace.iterates.push_back(x);
  trace.objective_values.push_back(quadratic_objective(instance.A(), instance.y(), x));
  trace.errors_vs_truth->push_back((x - instance.x()).norm());
  for (int t = 0; t < max_iters; ++t) {
    Vector next = constraint.project(iter_mat * x + input_term);
    double step = (next - x).norm();
    x = std::move(next);
    trace.iterates.push_back(x);
    trace.objective_values.push_back(quadratic_objective(instance.A(), instance.y(), x));
    trace.errors_vs_truth->push_back((x - instance.x()).norm());
    if (tol > 0.0 && step < tol) break;
  }
  return trace;
}

}  // namespace

SolverTrace pgd_solve(const ProblemInstance& instance, const Constraint& constraint, double beta,
                      int max_iters, double tol, const std::optional<Vector>& x0) {
  const Matrix& a = instance.A();
  Matrix iter_mat = Matrix::Identity(a.cols(), a.cols()) - beta * (a.transpose() * a);
  Vector input_term = beta * (a.transpose() * instance.y());
  return pgd_run(instance, constraint, iter_mat, input_term, max_iters, tol, x0);
}

SolverTrace pgd_solve_learned(const ProblemInstance& instance, const Constraint& constraint,
                              const Matrix& B, int max_iters, double tol,
                              const std::optional<Vector>& x0) {
  const Matrix& a = instance.A();
  if (B.rows() != a.cols() || B.cols() != a.rows())
    throw DimensionError("pgd_solve_learned: B must be m x n");
  Matrix iter_mat = Matrix::Identity(a.cols(), a.cols()) - B * a;
  Vector input_term = B * instance.y();
  return pgd_run(instance, constraint, iter_mat, input_term, max_iters, tol, x0);
}

OracleResult oracle_adaptive_pgd(const std::vector<ProblemInstance>& instances, ConstraintKind kind,
                                 const std::vector<int>& budgets, double beta) {
  if (instances.empty()) throw ParamError("oracle_adaptive_pgd: empty instance list");
  if (budgets.size() != instances.size())
    throw ParamError("oracle_adaptive_pgd: one budget per instance required");
  for (int b : budgets)
    if (b < 1) throw ParamError("oracle_adaptive_pgd: budgets must be >= 1");

  const std::size_t count = instances.size();
  std::vector<double> f_values(count);
  for (std::size_t i = 0; i < count; ++i) {
    Constraint probe = kind == ConstraintKind::l1_ball ? Constraint::l1(1.0) : Constraint::l0(1);
    f_values[i] = probe.value(instances[i].x());
  }
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&f_values](int a, int b) {
    double fa = f_values[static_cast<std::size_t>(a)], fb = f_values[static_cast<std::size_t>(b)];
    if (fa != fb) return fa < fb;
    return a < b;  // deterministic order under f ties
  });

  OracleResult result;
  result.order = order;
  result.traces.resize(count);

  std::vector<Vector> state(count);
  std::vector<SolverTrace> traces(count);
  std::vector<Matrix> iter_mats(count);
  std::vector<Vector> input_terms(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Matrix& a = instances[i].A();
    state[i] = Vector::Zero(a.cols());
    iter_mats[i] = Matrix::Identity(a.cols(), a.cols()) - beta * (a.transpose() * a);
    input_terms[i] = beta * (a.transpose() * instances[i].y());
    traces[i].errors_vs_truth.emplace();
    traces[i].iterates.push_back(state[i]);
    traces[i].objective_values.push_back(
        quadratic_objective(instances[i].A(), instances[i].y(), state[i]));
    traces[i].errors_vs_truth->push_back((state[i] - instances[i].x()).norm());
  }

  for (std::size_t phase = 0; phase < count; ++phase) {
    const auto pivot = static_cast<std::size_t>(order[phase]);
    const double radius = f_values[pivot];
    Constraint constraint = kind == ConstraintKind::l1_ball
                                ? Constraint::l1(radius)
                                : Constraint::l0(static_cast<int>(radius));
    for (int it = 0; it < budgets[phase]; ++it) {
      for (std::size_t k = phase; k < count; ++k) {
        const auto i = static_cast<std::size_t>(order[k]);
        state[i] = constraint.project(iter_mats[i] * state[i] + input_terms[i]);
        traces[i].iterates.push_back(state[i]);
        traces[i].objective_values.push_back(
            quadratic_objective(instances[i].A(), instances[i].y(), state[i]));
        traces[i].errors_vs_truth->push_back((state[i] - instances[i].x()).norm());
      }
    }
    result.total_error += traces[pivot].errors_vs_truth->back();  // ejected after its phase
  }
  result.traces = std::move(traces);
  return result;
}

}  // namespace adun
