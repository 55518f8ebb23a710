#include "adun/io.hpp"

#include <bit>
#include <cinttypes>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "adun binary formats are written on little-endian hosts");

namespace adun {
namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t size, const std::filesystem::path& path) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed: " + path.string());
}

void read_bytes(std::ifstream& in, void* data, std::size_t size, const std::filesystem::path& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (in.gcount() != static_cast<std::streamsize>(size))
    throw IoError("truncated file: " + path.string());
}

template <typename T>
void write_pod(std::ofstream& out, T value, const std::filesystem::path& path) {
  write_bytes(out, &value, sizeof(T), path);
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T value;
  read_bytes(in, &value, sizeof(T), path);
  return value;
}

void write_matrix_rowmajor(std::ofstream& out, const Matrix& m, const std::filesystem::path& path) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(out, m(i, j), path);
}

Matrix read_matrix_rowmajor(std::ifstream& in, Eigen::Index rows, Eigen::Index cols,
                            const std::filesystem::path& path) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_pod<double>(in, path);
  return m;
}

void write_vector(std::ofstream& out, const Vector& v, const std::filesystem::path& path) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_pod<double>(out, v[i], path);
}

Vector read_vector(std::ifstream& in, Eigen::Index size, const std::filesystem::path& path) {
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = read_pod<double>(in, path);
  return v;
}

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::int32_t kNoiselessSentinel = INT32_MIN;

}  // namespace

void write_dataset_batch(const std::filesystem::path& path, const DatasetBatch& batch) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const auto n = static_cast<std::uint32_t>(batch.A.rows());
  const auto m = static_cast<std::uint32_t>(batch.A.cols());
  const auto batch_size = static_cast<std::uint32_t>(batch.x.cols());
  if (batch.x.rows() != batch.A.cols() || batch.y.rows() != batch.A.rows() ||
      batch.y.cols() != batch.x.cols())
    throw DimensionError("write_dataset_batch: inconsistent shapes");
  write_bytes(out, "ADUN", 4, path);
  write_pod<std::uint32_t>(out, kFormatVersion, path);
  write_pod<std::uint32_t>(out, n, path);
  write_pod<std::uint32_t>(out, m, path);
  write_pod<std::uint32_t>(out, batch_size, path);
  std::int32_t snr_millibel = kNoiselessSentinel;
  if (batch.snr_db) snr_millibel = static_cast<std::int32_t>(std::lround(*batch.snr_db * 100.0));
  write_pod<std::int32_t>(out, snr_millibel, path);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(batch.matrix_kind), path);
  write_matrix_rowmajor(out, batch.A, path);
  for (std::uint32_t j = 0; j < batch_size; ++j) {
    write_vector(out, batch.x.col(j), path);
    write_vector(out, batch.y.col(j), path);
  }
}

void write_dataset_batch(const std::filesystem::path& path,
                         const std::vector<ProblemInstance>& instances) {
  if (instances.empty()) throw ParamError("write_dataset_batch: empty batch");
  DatasetBatch batch;
  batch.A = instances.front().A();
  batch.matrix_kind = instances.front().matrix->kind;
  batch.snr_db = instances.front().snr_db;
  auto [x, y] = batch_matrices(instances);
  batch.x = std::move(x);
  batch.y = std::move(y);
  write_dataset_batch(path, batch);
}

DatasetBatch read_dataset_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "ADUN", 4) != 0) throw IoError("bad dataset magic: " + path.string());
  auto version = read_pod<std::uint32_t>(in, path);
  if (version != kFormatVersion) throw IoError("unsupported dataset version: " + path.string());
  const auto n = static_cast<Eigen::Index>(read_pod<std::uint32_t>(in, path));
  const auto m = static_cast<Eigen::Index>(read_pod<std::uint32_t>(in, path));
  const auto batch_size = static_cast<Eigen::Index>(read_pod<std::uint32_t>(in, path));
  const auto snr_millibel = read_pod<std::int32_t>(in, path);
  DatasetBatch batch;
  batch.matrix_kind = static_cast<MatrixKind>(read_pod<std::uint8_t>(in, path));
  if (snr_millibel != kNoiselessSentinel) batch.snr_db = static_cast<double>(snr_millibel) / 100.0;
  batch.A = read_matrix_rowmajor(in, n, m, path);
  batch.x.resize(m, batch_size);
  batch.y.resize(n, batch_size);
  for (Eigen::Index j = 0; j < batch_size; ++j) {
    batch.x.col(j) = read_vector(in, m, path);
    batch.y.col(j) = read_vector(in, n, path);
  }
  return batch;
}

std::vector<ProblemInstance> dataset_batch_instances(const DatasetBatch& batch) {
  auto matrix = std::make_shared<MeasurementMatrix>();
  matrix->entries = batch.A;
  matrix->kind = batch.matrix_kind;
  std::vector<ProblemInstance> out;
  out.reserve(static_cast<std::size_t>(batch.x.cols()));
  for (Eigen::Index j = 0; j < batch.x.cols(); ++j) {
    ProblemInstance inst;
    inst.matrix = matrix;
    inst.signal.values = batch.x.col(j);
    int nnz = static_cast<int>((inst.signal.values.array() != 0.0).count());
    // stacked complex signals pair (Re, Im) supports
    inst.signal.sparsity = batch.matrix_kind == MatrixKind::qpsk_stacked ? (nnz + 1) / 2 : nnz;
    inst.measurement = batch.y.col(j);
    inst.snr_db = batch.snr_db;
    out.push_back(std::move(inst));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const UnfoldedNet& net,
                      const HaltingParams* hp) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_bytes(out, "ADNW", 4, path);
  write_pod<std::uint32_t>(out, kFormatVersion, path);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(net.kind), path);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.depth), path);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.n()), path);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.m()), path);
  write_pod<std::uint8_t>(out, net.shared ? 1 : 0, path);
  for (const auto& w : net.weights_W) write_matrix_rowmajor(out, w, path);
  for (const auto& b : net.weights_B) write_matrix_rowmajor(out, b, path);
  write_vector(out, net.thresholds, path);
  if (net.kind == NetKind::lista_cpss) write_vector(out, net.support_fractions, path);
  write_pod<std::uint8_t>(out, hp ? 1 : 0, path);
  if (hp) {
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(hp->design), path);
    write_pod<double>(out, hp->h_last, path);
    if (hp->design == HaltingDesign::learned_q) write_matrix_rowmajor(out, hp->Q, path);
    write_vector(out, hp->phi, path);
    write_vector(out, hp->psi, path);
    if (hp->design == HaltingDesign::mlp2) {
      for (const auto& head : hp->mlp) {
        write_matrix_rowmajor(out, head.W1, path);
        write_vector(out, head.b1, path);
        write_vector(out, head.w2, path);
        write_pod<double>(out, head.b2, path);
      }
    }
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "ADNW", 4) != 0) throw IoError("bad checkpoint magic: " + path.string());
  auto version = read_pod<std::uint32_t>(in, path);
  if (version != kFormatVersion) throw IoError("unsupported checkpoint version: " + path.string());
  Checkpoint ckpt;
  UnfoldedNet& net = ckpt.net;
  net.kind = static_cast<NetKind>(read_pod<std::uint8_t>(in, path));
  net.depth = static_cast<int>(read_pod<std::uint32_t>(in, path));
  const auto n = static_cast<Eigen::Index>(read_pod<std::uint32_t>(in, path));
  const auto m = static_cast<Eigen::Index>(read_pod<std::uint32_t>(in, path));
  net.shared = read_pod<std::uint8_t>(in, path) != 0;
  const std::size_t copies = net.shared ? 1u : static_cast<std::size_t>(net.depth);
  if (net.kind == NetKind::lista)
    for (std::size_t i = 0; i < copies; ++i)
      net.weights_W.push_back(read_matrix_rowmajor(in, m, m, path));
  for (std::size_t i = 0; i < copies; ++i)
    net.weights_B.push_back(read_matrix_rowmajor(in, m, n, path));
  net.thresholds = read_vector(in, net.depth, path);
  if (net.kind == NetKind::lista_cpss) net.support_fractions = read_vector(in, net.depth, path);
  if (read_pod<std::uint8_t>(in, path) != 0) {
    HaltingParams hp;
    hp.design = static_cast<HaltingDesign>(read_pod<std::uint8_t>(in, path));
    hp.h_last = read_pod<double>(in, path);
    if (hp.design == HaltingDesign::learned_q) hp.Q = read_matrix_rowmajor(in, n, n, path);
    hp.phi = read_vector(in, net.depth, path);
    hp.psi = read_vector(in, net.depth, path);
    if (hp.design == HaltingDesign::mlp2) {
      hp.mlp.resize(static_cast<std::size_t>(net.depth));
      for (auto& head : hp.mlp) {
        head.W1 = read_matrix_rowmajor(in, 2 * n, n, path);
        head.b1 = read_vector(in, 2 * n, path);
        head.w2 = read_vector(in, 2 * n, path);
        head.b2 = read_pod<double>(in, path);
      }
    }
    ckpt.hp = std::move(hp);
  }
  return ckpt;
}

void bind_matrix(UnfoldedNet& net, Matrix A) {
  if (!net.weights_B.empty() &&
      (net.weights_B.front().rows() != A.cols() || net.weights_B.front().cols() != A.rows()))
    throw DimensionError("bind_matrix: matrix shape does not match checkpoint");
  net.A = std::move(A);
  net.validate();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path) {
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path.string());
  file_ = f;
  for (std::size_t i = 0; i < header.size(); ++i)
    std::fprintf(f, "%s%s", i ? "," : "", header[i].c_str());
  std::fputc('\n', f);
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(static_cast<FILE*>(file_));
}

void CsvWriter::field(const std::string& value) {
  FILE* f = static_cast<FILE*>(file_);
  std::fprintf(f, "%s%s", row_started_ ? "," : "", value.c_str());
  row_started_ = true;
}

void CsvWriter::field(double value) { field(format_double(value)); }

void CsvWriter::field(long value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld", value);
  field(std::string(buf));
}

void CsvWriter::end_row() {
  std::fputc('\n', static_cast<FILE*>(file_));
  row_started_ = false;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf);
}

}  // namespace adun
