#pragma once

#include <cstdint>
#include <vector>

#include "adun/network.hpp"

namespace adun {

enum class HaltingDesign : std::uint8_t { learned_q = 0, no_q = 1, mlp2 = 2 };

const char* to_string(HaltingDesign design);
HaltingDesign halting_design_from_string(const std::string& s);

/// Two-layer scoring head used by the mlp2 design:
/// sigma(w2^T relu(W1 r + b1) + b2) with 2n hidden units.
struct MlpHead {
  Matrix W1;  // 2n x n
  Vector b1;  // 2n
  Vector w2;  // 2n
  double b2 = 0.0;
};

/// Parameters of the halting-score branch. The last layer always reports the
/// fixed constant h_last so every task can emit there; phi/psi (and the mlp
/// heads) carry one entry per layer, with the final entry unused.
struct HaltingParams {
  HaltingDesign design = HaltingDesign::learned_q;
  Matrix Q;    // n x n, learned_q only; shared across layers
  Vector phi;  // per-layer, > 0
  Vector psi;  // per-layer
  std::vector<MlpHead> mlp;  // per-layer, mlp2 only
  double h_last = 0.01;      // fixed, non-trainable, in (0,1)

  int depth() const { return static_cast<int>(phi.size()); }
  void validate(Eigen::Index n) const;
};

/// Numerically stable logistic function, clamped into the open interval
/// (0, 1) so the 1/h cost term stays finite.
double stable_sigmoid(double v);

/// Q = I, phi = 1, psi = 0 makes the untrained score a calibrated function of
/// raw residual energy; mlp heads get small seeded Gaussian weights.
HaltingParams init_halting(HaltingDesign design, Eigen::Index n, int depth, std::uint64_t seed,
                           double h_last = 0.01);

/// Halting score for 1-based layer t with residual r = y - A x_t.
/// learned_q: sigma(phi_t |Q r|^2 + psi_t); no_q drops Q; mlp2 uses the
/// two-layer head. Layer depth returns h_last regardless of design.
double halting_score(const HaltingParams& hp, int layer, const Vector& residual);

struct ScoredTrace {
  LayerTrace trace;
  std::vector<double> scores;  // h_1 .. h_L
};

/// Training-mode pass: all layers run and every score is computed.
ScoredTrace score_trace(const UnfoldedNet& net, const HaltingParams& hp, const Vector& y);

struct AdaptiveOutput {
  Vector estimate;
  int exit_layer = 0;           // T, 1-based
  std::vector<double> scores;   // h_1 .. h_T
  bool halted_early = false;    // some h_t <= epsilon fired
  int layers_computed = 0;      // count of layer_step evaluations actually run
};

/// Inference-mode pass: layers are computed one at a time and the pass stops
/// at T = min{t : h_t <= epsilon}, falling back to T = L when no score
/// crosses. Layers beyond T are never evaluated.
AdaptiveOutput infer_adaptive(const UnfoldedNet& net, const HaltingParams& hp, const Vector& y,
                              double epsilon);

/// The score at which the cost derivative d/dh (err^2/h + tau h) vanishes:
/// sqrt(err_sq / tau). Used as tuning guidance for epsilon.
double optimal_halting_score(double err_sq, double tau);

}  // namespace adun
