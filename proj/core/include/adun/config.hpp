#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adun/halting.hpp"
#include "adun/training.hpp"

namespace adun {

/// Flat key-value config with dotted nesting ("train.lr0 = 0.01"). Lines
/// starting with '#' are comments. Values keep their literal text; typed
/// accessors parse on demand and report the offending key on failure.
class ConfigMap {
public:
  ConfigMap() = default;

  static ConfigMap parse_file(const std::filesystem::path& path);
  static ConfigMap parse_string(const std::string& text);

  void write_file(const std::filesystem::path& path) const;
  std::string to_string() const;  // keys sorted, one per line

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long value);
  void set(const std::string& key, int value) { set(key, static_cast<long>(value)); }
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, bool value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// "none" (or absence) maps to nullopt.
  std::optional<double> get_optional_double(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;  // comma-separated

  const std::map<std::string, std::string>& entries() const { return entries_; }

private:
  std::map<std::string, std::string> entries_;
};

enum class Scenario : std::uint8_t {
  synthetic = 0,
  rademacher = 1,
  mtc_access = 2,
  mixed_sparsity_fig1 = 3,
  clustered_sparse = 4,
};

const char* to_string(Scenario scenario);
Scenario scenario_from_string(const std::string& s);

/// Everything a reproducible experiment run needs. Scenario selection seeds
/// the defaults; any config key overrides them.
struct ExperimentConfig {
  Scenario scenario = Scenario::synthetic;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "runs/out";

  BatchConfig batch;
  TrainConfig train;

  NetKind net_kind = NetKind::lista;
  int depth = 16;        // adaptive net maximum depth
  int fixed_depth = 14;  // fixed-depth comparison network
  bool shared = true;
  double lambda0 = 0.1;
  double cpss_p_max = 0.2;

  HaltingDesign halting_design = HaltingDesign::learned_q;
  double h_last = 0.01;

  std::vector<double> epsilons = {0.2, 0.1, 0.05, 0.03, 0.02};
  int eval_samples = 2000;
  double success_threshold_db = -10.0;

  void validate() const;
};

/// Scenario presets (matrix kind, dimensions, sparsity ranges, depths, tau).
ExperimentConfig scenario_defaults(Scenario scenario);

/// Defaults for cfg.scenario overridden by every present key. Collects all
/// violations into one ParamError message.
ExperimentConfig experiment_config_from_map(const ConfigMap& map);

/// Full resolved echo: every field, explicitly.
ConfigMap experiment_config_to_map(const ExperimentConfig& config);

}  // namespace adun
