#pragma once

#include <optional>
#include <vector>

#include "adun/halting.hpp"
#include "adun/problems.hpp"

namespace adun {

/// Per-layer cost sum_t [ |x - x_t|^2 / h_t + tau h_t ] over all L layers.
/// Intermediate layers contribute explicitly; any h_t <= 0 is a numeric-domain
/// error.
double cost(const LayerTrace& trace, const std::vector<double>& scores, const Vector& x_true,
            double tau);

/// d/dh of err_sq/h + tau h, i.e. tau - err_sq/h^2. Vanishes at the optimal
/// score h = sqrt(err_sq/tau).
double cost_score_derivative(double err_sq, double h, double tau);

/// Mirrors every trainable field of UnfoldedNet and HaltingParams.
struct Gradients {
  std::vector<Matrix> weights_W;
  std::vector<Matrix> weights_B;
  Vector thresholds;
  Matrix Q;
  Vector phi;
  Vector psi;
  std::vector<MlpHead> mlp;

  static Gradients zeros_like(const UnfoldedNet& net, const HaltingParams& hp);
};

/// Which parameter groups a pass updates.
enum class ParamSelect : std::uint8_t { net_only = 0, halting_only = 1, all = 2 };

struct BackwardOptions {
  ParamSelect select = ParamSelect::all;
  /// When set (depth x batch), scores are frozen constants: no halting branch
  /// exists and no gradient flows through h_t. Used for standard fixed-depth
  /// training and for the reduced-loss equivalence checks.
  std::optional<Matrix> frozen_scores;
};

struct BatchGradients {
  double loss = 0.0;  // mean per-sample cost over the batch
  Gradients grads;    // mean per-sample gradients
};

/// Analytic backpropagation of the halting cost through all layers for a
/// batch (columns are samples). The exact gradient is computed: every layer's
/// direct term, the halting-score path dh_t/dx_t, and the chain through the
/// shrinkage Jacobians. Soft-threshold derivative is 1 where |preact| >
/// lambda, else 0 (kink -> 0).
BatchGradients batch_gradients(const UnfoldedNet& net, const HaltingParams& hp, const Matrix& x_true,
                               const Matrix& y, double tau, const BackwardOptions& options = {});

/// Per-instance convenience wrappers over batch_gradients.
Gradients halting_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                            const ProblemInstance& instance, double tau);
Gradients network_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                            const ProblemInstance& instance, double tau);
BatchGradients all_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                             const ProblemInstance& instance, double tau);

/// dL/dx_t for every layer (1-based index t-1 in the result). With
/// last_layer_path_only, only the chain pulled back from the last layer's
/// direct term is accumulated; used to check the dominance of the 1/h_L path.
std::vector<Vector> loss_input_deltas(const UnfoldedNet& net, const HaltingParams& hp,
                                      const ProblemInstance& instance, double tau,
                                      bool last_layer_path_only = false);

/// Flat list of (pointer, length) blocks over a parameter set, in a fixed
/// declaration order shared between parameters and gradients.
struct ParamView {
  std::vector<std::pair<double*, Eigen::Index>> blocks;
  std::vector<std::string> names;

  Eigen::Index total_size() const;
};

ParamView trainable_params(UnfoldedNet& net, HaltingParams& hp, ParamSelect select);
ParamView gradient_blocks(Gradients& grads, const UnfoldedNet& net, const HaltingParams& hp,
                          ParamSelect select);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Standard bias-corrected Adam over a block view. Moments are allocated on
/// the first step and shape-checked afterwards.
class AdamState {
public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  void step(const ParamView& params, const ParamView& grads, double lr);
  long steps() const { return t_; }

private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Vector> m_, v_;
};

struct LrScheduleConfig {
  double lr0 = 1e-2;
  int patience = 200;                            // batches without a new best loss
  std::vector<double> ratios = {0.1, 0.01, 0.001};
};

/// Plateau schedule: when the best loss has not improved for `patience`
/// batches the next ratio is applied (lr = lr0 * ratio) and tracking restarts;
/// a plateau after the last ratio signals completion.
class LrSchedule {
public:
  explicit LrSchedule(LrScheduleConfig config);

  /// Observes one batch loss. Returns false once training should stop.
  bool update(double batch_loss);

  double lr() const;
  bool finished() const { return finished_; }
  int ratio_index() const { return ratio_index_; }  // -1 before the first plateau

private:
  LrScheduleConfig config_;
  double best_loss_;
  int since_improvement_ = 0;
  int ratio_index_ = -1;
  bool finished_ = false;
};

enum class TrainStage : std::uint8_t { pretrain_fixed = 0, halting_only = 1, fine_tune_all = 2 };

struct TrainConfig {
  double tau = 10.0;
  double lr0 = 1e-2;                    // stage 1 (halting-only) learning rate
  std::optional<double> stage2_lr0;     // defaults to lr0 / 10
  int plateau_patience = 200;
  std::vector<double> lr_ratios = {0.1, 0.01, 0.001};
  int stage1_batches = 1600;
  int stage2_batches = 1700;
  int pretrain_batches = 1500;          // fixed-depth baseline training
  double pretrain_lr0 = 1e-3;
  BatchConfig data;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistoryRow {
  int batch = 0;  // global batch counter across stages
  double loss = 0.0;
  double lr = 0.0;
  int stage = 0;  // TrainStage value
};

struct TrainResult {
  UnfoldedNet net;
  HaltingParams hp;
  std::vector<TrainHistoryRow> history;
};

struct GradCheckRow {
  std::string block;
  double max_rel_error = 0.0;  // max-norm error / max(block magnitudes, 1e-6)
};

/// Central finite differences of the full cost against the analytic
/// gradients, per parameter block. The FD side evaluates the cost through the
/// forward path only (score_trace + cost), independent of the backward pass.
std::vector<GradCheckRow> gradient_check(UnfoldedNet net, HaltingParams hp,
                                         const ProblemInstance& instance, double tau,
                                         double fd_step = 1e-6);

/// True when any shrinkage preactivation sits within tol of its threshold,
/// any mlp hidden unit within tol of the relu kink, or a cpss support
/// selection within tol of swapping. Such configurations are excluded from
/// finite-difference comparisons.
bool has_threshold_kink(const UnfoldedNet& net, const HaltingParams& hp,
                        const ProblemInstance& instance, double tol = 1e-4);

/// Standard fixed-depth training: the halting cost with scores frozen at
/// h_t = 1 (t < L) and h_L = hp.h_last, which reduces to the usual unfolded
/// objective dominated by the last layer. Only net parameters move.
TrainResult train_fixed_depth(const TrainConfig& config, UnfoldedNet net, const HaltingParams& hp,
                              const BatchStream& data);

/// Two-stage protocol: stage 1 freezes the base network and learns only the
/// halting parameters; stage 2 unlocks and fine-tunes everything. phi (and
/// thresholds in stage 2) are clamped to >= 1e-6 after each step.
TrainResult train_two_stage(const TrainConfig& config, UnfoldedNet net, HaltingParams hp,
                            const BatchStream& data);

}  // namespace adun
