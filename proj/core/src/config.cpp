#include "adun/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "adun/io.hpp"

namespace adun {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParamError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParamError("config line " + std::to_string(lineno) + ": empty key");
    map.entries_[key] = value;
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str());
}

std::string ConfigMap::to_string() const {
  std::ostringstream out;
  for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
  return out.str();
}

void ConfigMap::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << to_string();
  if (!out) throw IoError("write failed: " + path.string());
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) > 0; }

void ConfigMap::set(const std::string& key, const std::string& value) { entries_[key] = value; }
void ConfigMap::set(const std::string& key, double value) { entries_[key] = format_double(value); }
void ConfigMap::set(const std::string& key, long value) { entries_[key] = std::to_string(value); }
void ConfigMap::set(const std::string& key, std::uint64_t value) { entries_[key] = std::to_string(value); }
void ConfigMap::set(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

std::string ConfigMap::get_string(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ParamError("config: missing key '" + key + "'");
  return it->second;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    std::size_t pos = 0;
    double value = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw ParamError("config: key '" + key + "' is not a number: " + raw);
  }
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long ConfigMap::get_long(const std::string& key) const {
  const std::string raw = get_string(key);
  long value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size())
    throw ParamError("config: key '" + key + "' is not an integer: " + raw);
  return value;
}

long ConfigMap::get_long(const std::string& key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = get_string(key);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size())
    throw ParamError("config: key '" + key + "' is not an unsigned integer: " + raw);
  return value;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = get_string(key);
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ParamError("config: key '" + key + "' is not a boolean: " + raw);
}

std::optional<double> ConfigMap::get_optional_double(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  const std::string raw = get_string(key);
  if (raw == "none" || raw.empty()) return std::nullopt;
  return get_double(key);
}

std::vector<double> ConfigMap::get_double_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<double> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParamError("config: key '" + key + "' has a bad list entry: " + item);
    }
  }
  if (out.empty()) throw ParamError("config: key '" + key + "' is an empty list");
  return out;
}

const char* to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::synthetic: return "synthetic";
    case Scenario::rademacher: return "rademacher";
    case Scenario::mtc_access: return "mtc_access";
    case Scenario::mixed_sparsity_fig1: return "mixed_sparsity_fig1";
    case Scenario::clustered_sparse: return "clustered_sparse";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "synthetic") return Scenario::synthetic;
  if (s == "rademacher") return Scenario::rademacher;
  if (s == "mtc_access") return Scenario::mtc_access;
  if (s == "mixed_sparsity_fig1") return Scenario::mixed_sparsity_fig1;
  if (s == "clustered_sparse") return Scenario::clustered_sparse;
  throw ParamError("unknown scenario: " + s);
}

ExperimentConfig scenario_defaults(Scenario scenario) {
  ExperimentConfig cfg;
  cfg.scenario = scenario;
  // desk-scale training schedule; full-scale values stay reachable via config
  cfg.train.tau = 10.0;
  cfg.train.lr0 = 1e-2;
  cfg.train.stage2_lr0 = 1e-3;
  cfg.train.plateau_patience = 200;
  cfg.train.lr_ratios = {0.1, 0.01, 0.001};
  cfg.train.pretrain_batches = 1500;
  cfg.train.pretrain_lr0 = 1e-3;
  cfg.train.stage1_batches = 1600;
  cfg.train.stage2_batches = 1700;

  switch (scenario) {
    case Scenario::synthetic:
    case Scenario::rademacher:
      cfg.batch.n = 250;
      cfg.batch.m = 500;
      cfg.batch.s_min = 10;
      cfg.batch.s_max = 100;
      cfg.batch.batch_size = 1000;
      cfg.batch.n_batches = 100;
      cfg.batch.matrix_kind =
          scenario == Scenario::rademacher ? MatrixKind::rademacher : MatrixKind::gaussian;
      cfg.fixed_depth = 14;
      cfg.depth = 16;
      break;
    case Scenario::mtc_access:
      // m = 256 users, complex pilots of length n = 64 (stacked to 128 x 512)
      cfg.batch.n = 64;
      cfg.batch.m = 256;
      cfg.batch.s_min = 1;
      cfg.batch.s_max = 20;
      cfg.batch.batch_size = 1024;
      cfg.batch.n_batches = 100;
      cfg.batch.snr_db = 20.0;
      cfg.batch.matrix_kind = MatrixKind::qpsk_stacked;
      cfg.fixed_depth = 18;
      cfg.depth = 20;
      cfg.train.tau = 100.0;
      break;
    case Scenario::mixed_sparsity_fig1:
      cfg.batch.n = 40;
      cfg.batch.m = 200;
      cfg.batch.s_min = 2;
      cfg.batch.s_max = 4;
      cfg.batch.batch_size = 256;
      cfg.batch.n_batches = 100;
      cfg.batch.signal_model = SignalModel::two_point;
      cfg.fixed_depth = 5;
      cfg.depth = 5;
      break;
    case Scenario::clustered_sparse:
      // complex pilots of length n = 128 for m = 256 users (stacked 256 x 512)
      cfg.batch.n = 128;
      cfg.batch.m = 256;
      cfg.batch.batch_size = 512;
      cfg.batch.n_batches = 100;
      cfg.batch.snr_db = 20.0;
      cfg.batch.matrix_kind = MatrixKind::qpsk_stacked;
      cfg.batch.signal_model = SignalModel::clustered;
      cfg.batch.clusters_min = 1;
      cfg.batch.clusters_max = 20;
      cfg.batch.cluster_spread = 4;
      cfg.batch.s_min = 1;
      cfg.batch.s_max = 80;
      cfg.fixed_depth = 4;
      cfg.depth = 6;
      break;
  }
  cfg.batch.master_seed = cfg.seed;
  cfg.train.data = cfg.batch;
  return cfg;
}

void ExperimentConfig::validate() const {
  std::string problems;
  auto complain = [&problems](const std::string& msg) {
    if (!problems.empty()) problems += "; ";
    problems += msg;
  };
  try {
    batch.validate();
  } catch (const ParamError& e) {
    complain(e.what());
  }
  try {
    train.validate();
  } catch (const ParamError& e) {
    complain(e.what());
  }
  if (depth < 1) complain("net.depth must be >= 1");
  if (fixed_depth < 1) complain("net.fixed_depth must be >= 1");
  if (!(lambda0 > 0.0)) complain("net.lambda0 must be positive");
  if (!(cpss_p_max > 0.0 && cpss_p_max <= 1.0)) complain("net.cpss_p_max must lie in (0,1]");
  if (!(h_last > 0.0 && h_last < 1.0)) complain("halting.h_last must lie in (0,1)");
  if (epsilons.empty()) complain("eval.epsilons must be non-empty");
  for (double e : epsilons)
    if (!(e > 0.0 && e < 1.0)) {
      complain("eval.epsilons entries must lie in (0,1)");
      break;
    }
  if (eval_samples < 1) complain("eval.samples must be >= 1");
  if (threads < 1) complain("threads must be >= 1");
  if (out_dir.empty()) complain("out.dir must be set");
  if (!problems.empty()) throw ParamError("config validation failed: " + problems);
}

ExperimentConfig experiment_config_from_map(const ConfigMap& map) {
  Scenario scenario = scenario_from_string(map.get_string("scenario", "synthetic"));
  ExperimentConfig cfg = scenario_defaults(scenario);

  cfg.seed = map.get_u64("seed", cfg.seed);
  cfg.threads = static_cast<int>(map.get_long("threads", cfg.threads));
  cfg.out_dir = map.get_string("out.dir", cfg.out_dir);

  cfg.batch.n = map.get_long("batch.n", cfg.batch.n);
  cfg.batch.m = map.get_long("batch.m", cfg.batch.m);
  cfg.batch.s_min = static_cast<int>(map.get_long("batch.s_min", cfg.batch.s_min));
  cfg.batch.s_max = static_cast<int>(map.get_long("batch.s_max", cfg.batch.s_max));
  cfg.batch.batch_size = static_cast<int>(map.get_long("batch.batch_size", cfg.batch.batch_size));
  cfg.batch.n_batches = static_cast<int>(map.get_long("batch.n_batches", cfg.batch.n_batches));
  if (map.has("batch.snr_db")) cfg.batch.snr_db = map.get_optional_double("batch.snr_db");
  cfg.batch.matrix_kind =
      matrix_kind_from_string(map.get_string("batch.matrix_kind", to_string(cfg.batch.matrix_kind)));
  cfg.batch.signal_model =
      signal_model_from_string(map.get_string("batch.signal_model", to_string(cfg.batch.signal_model)));
  cfg.batch.clusters_min = static_cast<int>(map.get_long("batch.clusters_min", cfg.batch.clusters_min));
  cfg.batch.clusters_max = static_cast<int>(map.get_long("batch.clusters_max", cfg.batch.clusters_max));
  cfg.batch.cluster_spread =
      static_cast<int>(map.get_long("batch.cluster_spread", cfg.batch.cluster_spread));
  cfg.batch.master_seed = map.get_u64("batch.master_seed", cfg.seed);

  cfg.net_kind = net_kind_from_string(map.get_string("net.kind", to_string(cfg.net_kind)));
  cfg.depth = static_cast<int>(map.get_long("net.depth", cfg.depth));
  cfg.fixed_depth = static_cast<int>(map.get_long("net.fixed_depth", cfg.fixed_depth));
  cfg.shared = map.get_bool("net.shared", cfg.shared);
  cfg.lambda0 = map.get_double("net.lambda0", cfg.lambda0);
  cfg.cpss_p_max = map.get_double("net.cpss_p_max", cfg.cpss_p_max);

  cfg.halting_design =
      halting_design_from_string(map.get_string("halting.design", to_string(cfg.halting_design)));
  cfg.h_last = map.get_double("halting.h_last", cfg.h_last);

  cfg.train.tau = map.get_double("train.tau", cfg.train.tau);
  cfg.train.lr0 = map.get_double("train.lr0", cfg.train.lr0);
  if (map.has("train.stage2_lr0")) cfg.train.stage2_lr0 = map.get_optional_double("train.stage2_lr0");
  cfg.train.plateau_patience =
      static_cast<int>(map.get_long("train.patience", cfg.train.plateau_patience));
  if (map.has("train.ratios")) cfg.train.lr_ratios = map.get_double_list("train.ratios");
  cfg.train.stage1_batches =
      static_cast<int>(map.get_long("train.stage1_batches", cfg.train.stage1_batches));
  cfg.train.stage2_batches =
      static_cast<int>(map.get_long("train.stage2_batches", cfg.train.stage2_batches));
  cfg.train.pretrain_batches =
      static_cast<int>(map.get_long("train.pretrain_batches", cfg.train.pretrain_batches));
  cfg.train.pretrain_lr0 = map.get_double("train.pretrain_lr0", cfg.train.pretrain_lr0);
  cfg.train.seed = map.get_u64("train.seed", cfg.seed);
  cfg.train.data = cfg.batch;

  if (map.has("eval.epsilons")) cfg.epsilons = map.get_double_list("eval.epsilons");
  cfg.eval_samples = static_cast<int>(map.get_long("eval.samples", cfg.eval_samples));
  cfg.success_threshold_db = map.get_double("eval.success_threshold_db", cfg.success_threshold_db);

  cfg.validate();
  return cfg;
}

ConfigMap experiment_config_to_map(const ExperimentConfig& cfg) {
  ConfigMap map;
  map.set("scenario", std::string(to_string(cfg.scenario)));
  map.set("seed", cfg.seed);
  map.set("threads", cfg.threads);
  map.set("out.dir", cfg.out_dir);

  map.set("batch.n", static_cast<long>(cfg.batch.n));
  map.set("batch.m", static_cast<long>(cfg.batch.m));
  map.set("batch.s_min", cfg.batch.s_min);
  map.set("batch.s_max", cfg.batch.s_max);
  map.set("batch.batch_size", cfg.batch.batch_size);
  map.set("batch.n_batches", cfg.batch.n_batches);
  map.set("batch.snr_db", cfg.batch.snr_db ? format_double(*cfg.batch.snr_db) : std::string("none"));
  map.set("batch.matrix_kind", std::string(to_string(cfg.batch.matrix_kind)));
  map.set("batch.signal_model", std::string(to_string(cfg.batch.signal_model)));
  map.set("batch.clusters_min", cfg.batch.clusters_min);
  map.set("batch.clusters_max", cfg.batch.clusters_max);
  map.set("batch.cluster_spread", cfg.batch.cluster_spread);
  map.set("batch.master_seed", cfg.batch.master_seed);

  map.set("net.kind", std::string(to_string(cfg.net_kind)));
  map.set("net.depth", cfg.depth);
  map.set("net.fixed_depth", cfg.fixed_depth);
  map.set("net.shared", cfg.shared);
  map.set("net.lambda0", cfg.lambda0);
  map.set("net.cpss_p_max", cfg.cpss_p_max);

  map.set("halting.design", std::string(to_string(cfg.halting_design)));
  map.set("halting.h_last", cfg.h_last);

  map.set("train.tau", cfg.train.tau);
  map.set("train.lr0", cfg.train.lr0);
  map.set("train.stage2_lr0",
          cfg.train.stage2_lr0 ? format_double(*cfg.train.stage2_lr0) : std::string("none"));
  map.set("train.patience", cfg.train.plateau_patience);
  std::string ratios;
  for (std::size_t i = 0; i < cfg.train.lr_ratios.size(); ++i)
    ratios += (i ? "," : "") + format_double(cfg.train.lr_ratios[i]);
  map.set("train.ratios", ratios);
  map.set("train.stage1_batches", cfg.train.stage1_batches);
  map.set("train.stage2_batches", cfg.train.stage2_batches);
  map.set("train.pretrain_batches", cfg.train.pretrain_batches);
  map.set("train.pretrain_lr0", cfg.train.pretrain_lr0);
  map.set("train.seed", cfg.train.seed);

  std::string eps;
  for (std::size_t i = 0; i < cfg.epsilons.size(); ++i)
    eps += (i ? "," : "") + format_double(cfg.epsilons[i]);
  map.set("eval.epsilons", eps);
  map.set("eval.samples", cfg.eval_samples);
  map.set("eval.success_threshold_db", cfg.success_threshold_db);
  return map;
}

}  // namespace adun
