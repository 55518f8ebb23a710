#include "adun/problems.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adun/rng.hpp"

namespace adun {
namespace {

// Stream tags for deriving per-purpose seeds from a batch/master seed.
constexpr std::uint64_t kMatrixStream = 0xA11CE;
constexpr std::uint64_t kSignalStream = 0x5167AL;
constexpr std::uint64_t kNoiseStream = 0x4015E;

void fill_normal(Matrix& a, Rng& rng) {
  // column-major fill order; part of the determinism contract
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
}

void normalize_columns(Matrix& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double norm = a.col(j).norm();
    if (norm > 0.0) a.col(j) /= norm;
  }
}

std::vector<Eigen::Index> sample_support(Eigen::Index m, int s, Rng& rng) {
  // partial Fisher-Yates on an index pool
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int k = 0; k < s; ++k) {
    auto j = static_cast<std::size_t>(rng.uniform_int(k, static_cast<std::int64_t>(m) - 1));
    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(s));
  return pool;
}

SparseSignal finalize_signal(Vector values, int sparsity) {
  double norm = values.norm();
  if (!(norm > 0.0)) throw NumericError("gen_sparse_signal: drew an all-zero signal");
  values /= norm;
  return SparseSignal{std::move(values), sparsity};
}

}  // namespace

const char* to_string(MatrixKind kind) {
  switch (kind) {
    case MatrixKind::gaussian: return "gaussian";
    case MatrixKind::rademacher: return "rademacher";
    case MatrixKind::qpsk_stacked: return "qpsk_stacked";
  }
  return "?";
}

MatrixKind matrix_kind_from_string(const std::string& s) {
  if (s == "gaussian") return MatrixKind::gaussian;
  if (s == "rademacher") return MatrixKind::rademacher;
  if (s == "qpsk_stacked") return MatrixKind::qpsk_stacked;
  throw ParamError("unknown matrix kind: " + s);
}

const char* to_string(SignalModel model) {
  switch (model) {
    case SignalModel::uniform_range: return "uniform_range";
    case SignalModel::two_point: return "two_point";
    case SignalModel::clustered: return "clustered";
  }
  return "?";
}

SignalModel signal_model_from_string(const std::string& s) {
  if (s == "uniform_range") return SignalModel::uniform_range;
  if (s == "two_point") return SignalModel::two_point;
  if (s == "clustered") return SignalModel::clustered;
  throw ParamError("unknown signal model: " + s);
}

MeasurementMatrix gen_matrix(MatrixKind kind, Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw DimensionError("gen_matrix: dimensions must be positive");
  Rng rng(derive_seed(seed, kMatrixStream));
  MeasurementMatrix out;
  out.kind = kind;
  out.seed = seed;
  switch (kind) {
    case MatrixKind::gaussian: {
      out.entries.resize(n, m);
      fill_normal(out.entries, rng);
      normalize_columns(out.entries);
      break;
    }
    case MatrixKind::rademacher: {
      out.entries.resize(n, m);
      const double scale = 1.0 / std::sqrt(static_cast<double>(n));
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) out.entries(i, j) = rng.rademacher() * scale;
      break;
    }
    case MatrixKind::qpsk_stacked: {
      // i.i.d. QPSK {1, -1, i, -i}: one of the four constellation points per entry
      Matrix re(n, m), im(n, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
          switch (rng.next_u64() & 3) {
            case 0: re(i, j) = 1.0; im(i, j) = 0.0; break;
            case 1: re(i, j) = -1.0; im(i, j) = 0.0; break;
            case 2: re(i, j) = 0.0; im(i, j) = 1.0; break;
            default: re(i, j) = 0.0; im(i, j) = -1.0; break;
          }
        }
      }
      out.entries = complex_to_real_stack(re, im);
      break;
    }
  }
  return out;
}

Matrix complex_to_real_stack(const Matrix& re, const Matrix& im) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw DimensionError("complex_to_real_stack: shape mismatch");
  Matrix out(2 * re.rows(), 2 * re.cols());
  out.topLeftCorner(re.rows(), re.cols()) = re;
  out.topRightCorner(re.rows(), re.cols()) = -im;
  out.bottomLeftCorner(re.rows(), re.cols()) = im;
  out.bottomRightCorner(re.rows(), re.cols()) = re;
  return out;
}

Vector complex_to_real_stack_vec(const Vector& re, const Vector& im) {
  if (re.size() != im.size()) throw DimensionError("complex_to_real_stack_vec: shape mismatch");
  Vector out(2 * re.size());
  out.head(re.size()) = re;
  out.tail(im.size()) = im;
  return out;
}

SparseSignal gen_sparse_signal(Eigen::Index m, int s_min, int s_max, std::uint64_t seed) {
  if (s_min < 1 || s_min > s_max || static_cast<Eigen::Index>(s_max) > m)
    throw ParamError("gen_sparse_signal: need 1 <= s_min <= s_max <= m");
  Rng rng(derive_seed(seed, kSignalStream));
  int s = static_cast<int>(rng.uniform_int(s_min, s_max));
  auto support = sample_support(m, s, rng);
  Vector values = Vector::Zero(m);
  for (auto idx : support) values[idx] = rng.normal();
  return finalize_signal(std::move(values), s);
}

SparseSignal gen_sparse_signal_stacked(Eigen::Index m_complex, int s_min, int s_max,
                                       std::uint64_t seed) {
  if (s_min < 1 || s_min > s_max || static_cast<Eigen::Index>(s_max) > m_complex)
    throw ParamError("gen_sparse_signal_stacked: need 1 <= s_min <= s_max <= m");
  Rng rng(derive_seed(seed, kSignalStream));
  int s = static_cast<int>(rng.uniform_int(s_min, s_max));
  auto support = sample_support(m_complex, s, rng);
  Vector values = Vector::Zero(2 * m_complex);
  for (auto idx : support) {
    values[idx] = rng.normal();              // Re
    values[idx + m_complex] = rng.normal();  // Im
  }
  return finalize_signal(std::move(values), s);
}

SparseSignal gen_clustered_sparse_signal(Eigen::Index m, int clusters_min, int clusters_max,
                                         int cluster_spread, std::uint64_t seed) {
  if (clusters_min < 1 || clusters_min > clusters_max)
    throw ParamError("gen_clustered_sparse_signal: bad cluster range");
  if (cluster_spread < 1) throw ParamError("gen_clustered_sparse_signal: spread must be >= 1");
  Rng rng(derive_seed(seed, kSignalStream));
  int c = static_cast<int>(rng.uniform_int(clusters_min, clusters_max));
  Vector values = Vector::Zero(m);
  for (int k = 0; k < c; ++k) {
    auto center = rng.uniform_int(0, static_cast<std::int64_t>(m) - 1);
    auto lo = std::max<std::int64_t>(0, center - cluster_spread / 2);
    auto hi = std::min<std::int64_t>(m - 1, lo + cluster_spread - 1);
    for (std::int64_t i = lo; i <= hi; ++i) values[i] = rng.normal();
  }
  int nnz = static_cast<int>((values.array() != 0.0).count());
  if (nnz == 0) {  // all clusters drew zero-width overlap; place one coefficient
    values[static_cast<Eigen::Index>(rng.uniform_int(0, m - 1))] = rng.normal();
    nnz = 1;
  }
  return finalize_signal(std::move(values), nnz);
}

ProblemInstance gen_measurement(std::shared_ptr<const MeasurementMatrix> matrix, SparseSignal signal,
                                std::optional<double> snr_db, std::uint64_t seed) {
  if (!matrix) throw ParamError("gen_measurement: null matrix");
  if (matrix->m() != signal.values.size())
    throw DimensionError("gen_measurement: signal length does not match matrix columns");
  ProblemInstance inst;
  inst.matrix = std::move(matrix);
  inst.measurement = inst.matrix->entries * signal.values;
  inst.signal = std::move(signal);
  inst.snr_db = snr_db;
  if (snr_db) {
    double signal_energy = inst.measurement.squaredNorm();
    if (!(signal_energy > 0.0))
      throw ParamError("gen_measurement: SNR undefined for zero signal energy");
    Rng rng(derive_seed(seed, kNoiseStream));
    Vector noise(inst.measurement.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    // per-sample scaling: 10 log10(|Ax|^2 / |noise|^2) == snr_db exactly
    double target_energy = signal_energy * std::pow(10.0, -*snr_db / 10.0);
    noise *= std::sqrt(target_energy / noise.squaredNorm());
    inst.measurement += noise;
  }
  return inst;
}

std::pair<Matrix, Matrix> batch_matrices(const std::vector<ProblemInstance>& batch) {
  if (batch.empty()) throw ParamError("batch_matrices: empty batch");
  const auto m = batch.front().x().size();
  const auto n = batch.front().y().size();
  Matrix x(m, static_cast<Eigen::Index>(batch.size()));
  Matrix y(n, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = batch[j].x();
    y.col(static_cast<Eigen::Index>(j)) = batch[j].y();
  }
  return {std::move(x), std::move(y)};
}

void BatchConfig::validate() const {
  if (n < 1 || m < 1) throw ParamError("BatchConfig: dimensions must be positive");
  if (batch_size < 1) throw ParamError("BatchConfig: batch_size must be >= 1");
  if (n_batches < 0) throw ParamError("BatchConfig: n_batches must be >= 0");
  if (signal_model == SignalModel::clustered) {
    if (clusters_min < 1 || clusters_min > clusters_max)
      throw ParamError("BatchConfig: bad cluster range");
  } else if (s_min < 1 || s_min > s_max || static_cast<Eigen::Index>(s_max) > m) {
    throw ParamError("BatchConfig: need 1 <= s_min <= s_max <= m");
  }
}

BatchStream::BatchStream(BatchConfig config) : config_(std::move(config)) {
  config_.validate();
  matrix_ = std::make_shared<const MeasurementMatrix>(
      gen_matrix(config_.matrix_kind, config_.n, config_.m,
                 derive_seed(config_.master_seed, kMatrixStream)));
}

std::vector<ProblemInstance> BatchStream::batch(int index) const {
  if (index < 0) throw ParamError("BatchStream::batch: negative index");
  std::uint64_t batch_seed = derive_seed(config_.master_seed, static_cast<std::uint64_t>(index) + 1);
  std::vector<ProblemInstance> out;
  out.reserve(static_cast<std::size_t>(config_.batch_size));
  const bool stacked = config_.matrix_kind == MatrixKind::qpsk_stacked;
  for (int j = 0; j < config_.batch_size; ++j) {
    std::uint64_t sample_seed = derive_seed(batch_seed, static_cast<std::uint64_t>(j));
    SparseSignal sig;
    switch (config_.signal_model) {
      case SignalModel::uniform_range:
        sig = stacked ? gen_sparse_signal_stacked(config_.m, config_.s_min, config_.s_max, sample_seed)
                      : gen_sparse_signal(config_.m, config_.s_min, config_.s_max, sample_seed);
        break;
      case SignalModel::two_point: {
        // half/half draw between the two endpoint sparsity levels
        Rng pick(derive_seed(sample_seed, 0x7F11));
        int s = (pick.next_u64() & 1) ? config_.s_max : config_.s_min;
        sig = stacked ? gen_sparse_signal_stacked(config_.m, s, s, sample_seed)
                      : gen_sparse_signal(config_.m, s, s, sample_seed);
        break;
      }
      case SignalModel::clustered: {
        if (stacked) {
          SparseSignal base = gen_clustered_sparse_signal(config_.m, config_.clusters_min,
                                                          config_.clusters_max, config_.cluster_spread,
                                                          sample_seed);
          Rng rng(derive_seed(sample_seed, kSignalStream + 1));
          Vector im = Vector::Zero(config_.m);
          for (Eigen::Index i = 0; i < config_.m; ++i)
            if (base.values[i] != 0.0) im[i] = rng.normal();
          Vector v = complex_to_real_stack_vec(base.values, im);
          v /= v.norm();
          sig = SparseSignal{std::move(v), base.sparsity};
        } else {
          sig = gen_clustered_sparse_signal(config_.m, config_.clusters_min, config_.clusters_max,
                                            config_.cluster_spread, sample_seed);
        }
        break;
      }
    }
    out.push_back(gen_measurement(matrix_, std::move(sig), config_.snr_db, sample_seed));
  }
  return out;
}

}  // namespace adun
