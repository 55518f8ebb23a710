#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adun/halting.hpp"
#include "adun/network.hpp"
#include "adun/problems.hpp"

namespace adun {

/// One dumped batch: the shared matrix plus per-sample (x, y) pairs.
struct DatasetBatch {
  Matrix A;
  MatrixKind matrix_kind = MatrixKind::gaussian;
  std::optional<double> snr_db;
  Matrix x;  // m x batch_size
  Matrix y;  // n x batch_size
};

/// Binary batch file, little-endian:
///   magic "ADUN", version u32, n u32, m u32, batch_size u32,
///   snr_millibel i32 (INT32_MIN = noiseless), matrix_kind u8,
/// then f64 blocks: A row-major, then per sample x (m) and y (n).
void write_dataset_batch(const std::filesystem::path& path, const DatasetBatch& batch);
DatasetBatch read_dataset_batch(const std::filesystem::path& path);

void write_dataset_batch(const std::filesystem::path& path,
                         const std::vector<ProblemInstance>& batch);
std::vector<ProblemInstance> dataset_batch_instances(const DatasetBatch& batch);

/// Binary checkpoint, little-endian:
///   magic "ADNW", version u32, kind u8, L u32, n u32, m u32, sharing u8,
/// then f64 parameter blocks in declaration order (W blocks, B blocks,
/// thresholds, cpss support fractions), then a halting block when present:
///   present u8, design u8, h_last f64, Q (learned_q), phi, psi,
///   mlp heads (W1, b1, w2, b2 per layer). Matrices are row-major. The
/// measurement matrix is not stored; the loader re-binds it from the dataset.
void write_checkpoint(const std::filesystem::path& path, const UnfoldedNet& net,
                      const HaltingParams* hp);

struct Checkpoint {
  UnfoldedNet net;  // net.A is empty until bound
  std::optional<HaltingParams> hp;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Re-attaches a measurement matrix to a loaded checkpoint (shape-checked).
void bind_matrix(UnfoldedNet& net, Matrix A);

/// Minimal CSV writer with fixed round-trip float formatting (%.17g) so
/// reruns produce bit-identical files.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();

  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void field(const std::string& value);
  void field(double value);
  void field(long value);
  void field(int value) { field(static_cast<long>(value)); }
  void end_row();

private:
  void* file_;  // FILE*
  bool row_started_ = false;
  std::filesystem::path path_;
};

std::string format_double(double value);  // %.17g

}  // namespace adun
