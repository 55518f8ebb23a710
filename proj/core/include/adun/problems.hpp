#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "adun/errors.hpp"

namespace adun {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class MatrixKind : std::uint8_t { gaussian = 0, rademacher = 1, qpsk_stacked = 2 };

const char* to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& s);

struct MeasurementMatrix {
  Matrix entries;  // n x m (already real-stacked for qpsk_stacked)
  MatrixKind kind = MatrixKind::gaussian;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return entries.rows(); }
  Eigen::Index m() const { return entries.cols(); }
};

struct SparseSignal {
  Vector values;
  int sparsity = 0;  // nonzero count; for stacked complex signals, the number of active complex coefficients
};

struct ProblemInstance {
  std::shared_ptr<const MeasurementMatrix> matrix;
  SparseSignal signal;
  Vector measurement;
  std::optional<double> snr_db;

  const Matrix& A() const { return matrix->entries; }
  const Vector& x() const { return signal.values; }
  const Vector& y() const { return measurement; }
};

/// Generates a measurement matrix. gaussian: N(0,1) entries, unit-norm
/// columns. rademacher: +-1 entries scaled to unit-norm columns. qpsk_stacked:
/// the caller passes the complex dimensions (n, m); entries are drawn i.i.d.
/// from {1, -1, i, -i} and returned as the 2n x 2m real stacking.
MeasurementMatrix gen_matrix(MatrixKind kind, Eigen::Index n, Eigen::Index m, std::uint64_t seed);

/// Real block stacking [[Re, -Im], [Im, Re]] of a complex matrix. Multiplying
/// the stacked matrix by a stacked vector [Re(x); Im(x)] equals the stacked
/// complex product.
Matrix complex_to_real_stack(const Matrix& re, const Matrix& im);
Vector complex_to_real_stack_vec(const Vector& re, const Vector& im);

/// Sparse signal with sparsity s uniform on [s_min, s_max], support uniform
/// without replacement, N(0,1) nonzeros, then unit l2 normalization.
SparseSignal gen_sparse_signal(Eigen::Index m, int s_min, int s_max, std::uint64_t seed);

/// Stacked complex sparse signal: s active complex coefficients on m complex
/// coordinates with CN(0,1)-style values; returned as length-2m [Re; Im],
/// unit-normalized. Support pairs (j, j+m) are active together.
SparseSignal gen_sparse_signal_stacked(Eigen::Index m_complex, int s_min, int s_max, std::uint64_t seed);

/// Clustered-angle sparse signal: the support is a union of contiguous index
/// runs (clusters). Plumbing stand-in for an external channel generator.
SparseSignal gen_clustered_sparse_signal(Eigen::Index m, int clusters_min, int clusters_max,
                                         int cluster_spread, std::uint64_t seed);

/// y = A x, plus white Gaussian noise scaled per sample so that
/// 10 log10(|Ax|^2/|noise|^2) equals snr_db exactly when snr_db is present.
ProblemInstance gen_measurement(std::shared_ptr<const MeasurementMatrix> matrix, SparseSignal signal,
                                std::optional<double> snr_db, std::uint64_t seed);

enum class SignalModel : std::uint8_t { uniform_range = 0, two_point = 1, clustered = 2 };

const char* to_string(SignalModel model);
SignalModel signal_model_from_string(const std::string& s);

struct BatchConfig {
  Eigen::Index n = 0;  // measurement dimension (complex pilot length for qpsk_stacked)
  Eigen::Index m = 0;  // signal dimension (complex user count for qpsk_stacked)
  int s_min = 1;
  int s_max = 1;
  int batch_size = 1;
  int n_batches = 1;
  std::optional<double> snr_db;
  MatrixKind matrix_kind = MatrixKind::gaussian;
  std::uint64_t master_seed = 0;
  // signal-model plumbing for the mixed-sparsity and clustered scenarios
  SignalModel signal_model = SignalModel::uniform_range;
  int clusters_min = 1;
  int clusters_max = 1;
  int cluster_spread = 4;

  void validate() const;
};

/// Stacks a batch into (X_true, Y) matrices with one sample per column.
std::pair<Matrix, Matrix> batch_matrices(const std::vector<ProblemInstance>& batch);

/// Deterministic stream of mini-batches. Batch i derives its seed from
/// (master_seed, i) so any batch regenerates independently in O(1). The
/// measurement matrix is generated once from the master seed and shared by
/// every instance.
class BatchStream {
public:
  explicit BatchStream(BatchConfig config);

  const BatchConfig& config() const { return config_; }
  const std::shared_ptr<const MeasurementMatrix>& matrix() const { return matrix_; }
  int n_batches() const { return config_.n_batches; }

  std::vector<ProblemInstance> batch(int index) const;

private:
  BatchConfig config_;
  std::shared_ptr<const MeasurementMatrix> matrix_;
};

}  // namespace adun
