#pragma once

#include <cstdint>
#include <vector>

#include "adun/problems.hpp"

namespace adun {

enum class NetKind : std::uint8_t { lista = 0, lista_cpss = 1 };

const char* to_string(NetKind kind);
NetKind net_kind_from_string(const std::string& s);

/// Unfolded shrinkage-thresholding network. For lista the layer map is
/// x_{t+1} = S_{lambda_t}(W_t x_t + B_t y). For lista_cpss the weight
/// coupling W_t = I - B_t A is structural (only B_t is stored) and the
/// top ceil(p_t m) magnitude coordinates bypass the shrinkage.
struct UnfoldedNet {
  NetKind kind = NetKind::lista;
  int depth = 0;
  bool shared = true;  // one W/B for all layers vs per-layer
  Matrix A;            // the measurement matrix the net is bound to
  std::vector<Matrix> weights_W;  // size 1 (shared) or depth; empty for cpss
  std::vector<Matrix> weights_B;  // size 1 (shared) or depth
  Vector thresholds;              // lambda_t > 0, size depth
  Vector support_fractions;       // p_t in (0,1], size depth; cpss only

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return A.cols(); }
  const Matrix& W(int layer) const { return weights_W[shared ? 0 : static_cast<std::size_t>(layer)]; }
  const Matrix& B(int layer) const { return weights_B[shared ? 0 : static_cast<std::size_t>(layer)]; }
  Matrix& W(int layer) { return weights_W[shared ? 0 : static_cast<std::size_t>(layer)]; }
  Matrix& B(int layer) { return weights_B[shared ? 0 : static_cast<std::size_t>(layer)]; }

  void validate() const;
};

struct LayerTrace {
  std::vector<Vector> layer_outputs;  // exactly depth entries, x_1 .. x_L
  Vector input;                       // the y it was computed from
};

/// Squared spectral norm |A|_2^2.
double spectral_norm_sq(const Matrix& A);

/// ISTA-equivalent initialization: B = A^T / |A|_2^2, W = I - B A (lista),
/// all thresholds lambda0. For cpss the support fractions ramp linearly from
/// p_max/L up to p_max. Deterministic; the seed is reserved for randomized
/// variants.
UnfoldedNet init_network(NetKind kind, const Matrix& A, int depth, bool shared, std::uint64_t seed,
                         double lambda0 = 0.1, double cpss_p_max = 0.1);

/// One layer update x_t -> x_{t+1}; layer is 0-based.
Vector layer_step(const UnfoldedNet& net, int layer, const Vector& x_prev, const Vector& y);

/// Full forward pass from x_0 = 0 through every layer.
LayerTrace forward(const UnfoldedNet& net, const Vector& y);

/// Batched forward: columns are samples. Returns depth+1 matrices
/// [x_0, x_1, ..., x_L] with x_0 = 0.
std::vector<Matrix> forward_batch(const UnfoldedNet& net, const Matrix& Y);

/// Indices of the ceil(p*m) largest-magnitude coordinates (ties to the lowest
/// index) that bypass shrinkage in a cpss layer.
std::vector<Eigen::Index> cpss_support(const Vector& z, double p);

}  // namespace adun
