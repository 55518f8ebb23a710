#pragma once

#include <filesystem>
#include <iosfwd>

#include "adun/analysis.hpp"
#include "adun/config.hpp"
#include "adun/io.hpp"

namespace adun {

/// Holds the out-directory lock for the lifetime of a run; at most one writer
/// per output directory.
class DirectoryLock {
public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
  std::filesystem::path lock_path_;
};

struct CompareRow {
  double epsilon = 0.0;
  double avg_layers_adaptive = 0.0;
  double nmse_adaptive_db = 0.0;
  double nmse_fixed_interp_db = 0.0;  // fixed-depth curve interpolated at the matched depth
  bool adaptive_wins = false;         // nmse_adaptive <= nmse_fixed_interp
};

/// Matched-average-depth comparison: the fixed net's per-layer NMSE curve is
/// interpolated (linearly in dB over the depth axis, clamped to [1, L]) at the
/// adaptive run's average executed layers for each epsilon.
std::vector<CompareRow> compare_fixed_vs_adaptive(const UnfoldedNet& fixed_net,
                                                  const UnfoldedNet& adaptive_net,
                                                  const HaltingParams& hp,
                                                  const std::vector<ProblemInstance>& dataset,
                                                  const std::vector<double>& epsilons);

/// Extends a trained fixed-depth net to the adaptive maximum depth: weights
/// are shared or the last layer is cloned; extra thresholds repeat the last
/// trained value.
UnfoldedNet extend_depth(const UnfoldedNet& net, int new_depth);

/// Deterministic evaluation dataset for an experiment config (derived seed,
/// eval_samples instances from the same measurement matrix as training).
std::vector<ProblemInstance> make_eval_dataset(const ExperimentConfig& config);

struct ExperimentResult {
  std::filesystem::path dir;
  UnfoldedNet fixed_net;
  UnfoldedNet adaptive_net;
  HaltingParams hp;
  std::vector<SweepRow> sweep;
  std::vector<CompareRow> compare;
};

/// Full pipeline: resolve config -> train fixed baseline -> two-stage adaptive
/// training -> epsilon sweep -> comparison + anchor tables. Every output file
/// lands under config.out_dir together with the resolved config for exact
/// reproduction. dry_run validates and prints the plan without computing.
ExperimentResult run_experiment(const ExperimentConfig& config, bool dry_run, std::ostream& log);

/// Fig-1-style study: one network trained on a two-point sparsity mix vs two
/// specialized networks of depth L-2 and L+2, compared at the same average
/// executed depth. Emits fig1.csv under config.out_dir.
void run_mixed_sparsity_study(const ExperimentConfig& config, std::ostream& log);

}  // namespace adun
