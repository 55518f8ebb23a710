#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adun/config.hpp"
#include "adun/io.hpp"
#include "adun/rng.hpp"

using namespace adun;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "adun_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("dataset batch round-trips bit-exactly") {
  BatchConfig cfg;
  cfg.n = 6;
  cfg.m = 12;
  cfg.s_min = 1;
  cfg.s_max = 3;
  cfg.batch_size = 5;
  cfg.n_batches = 1;
  cfg.snr_db = 17.5;
  cfg.master_seed = 42;
  BatchStream stream(cfg);
  auto batch = stream.batch(0);
  auto path = temp_path("batch.bin");
  write_dataset_batch(path, batch);

  DatasetBatch loaded = read_dataset_batch(path);
  CHECK(loaded.A == stream.matrix()->entries);
  CHECK(loaded.matrix_kind == MatrixKind::gaussian);
  REQUIRE(loaded.snr_db.has_value());
  CHECK(*loaded.snr_db == 17.5);
  auto [x, y] = batch_matrices(batch);
  CHECK(loaded.x == x);
  CHECK(loaded.y == y);

  auto instances = dataset_batch_instances(loaded);
  REQUIRE(instances.size() == 5);
  for (std::size_t j = 0; j < instances.size(); ++j) {
    CHECK(instances[j].x() == batch[j].x());
    CHECK(instances[j].signal.sparsity == batch[j].signal.sparsity);
  }
}

TEST_CASE("dataset header encodes noiseless as the sentinel") {
  BatchConfig cfg;
  cfg.n = 4;
  cfg.m = 8;
  cfg.s_min = 1;
  cfg.s_max = 2;
  cfg.batch_size = 2;
  cfg.n_batches = 1;
  cfg.master_seed = 7;
  BatchStream stream(cfg);
  auto path = temp_path("noiseless.bin");
  write_dataset_batch(path, stream.batch(0));
  DatasetBatch loaded = read_dataset_batch(path);
  CHECK_FALSE(loaded.snr_db.has_value());

  std::string raw = slurp(path);
  CHECK(raw.substr(0, 4) == "ADUN");
}

TEST_CASE("dataset reader rejects corrupt files") {
  auto path = temp_path("bad.bin");
  std::ofstream(path, std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(read_dataset_batch(path), IoError);
  CHECK_THROWS_AS(read_dataset_batch(temp_path("missing.bin")), IoError);
}

TEST_CASE("checkpoint round-trips every parameter bit-exactly") {
  auto mat = gen_matrix(MatrixKind::gaussian, 8, 16, 21);
  for (NetKind kind : {NetKind::lista, NetKind::lista_cpss}) {
    for (bool shared : {true, false}) {
      UnfoldedNet net = init_network(kind, mat.entries, 4, shared, 3, 0.07, 0.3);
      Rng rng(55);
      for (auto& w : net.weights_W)
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.01 * rng.normal();
      for (auto& b : net.weights_B)
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] += 0.01 * rng.normal();
      HaltingParams hp = init_halting(HaltingDesign::learned_q, 8, 4, 5);
      hp.psi.setConstant(-0.75);

      auto path = temp_path("net.ckpt");
      write_checkpoint(path, net, &hp);
      Checkpoint loaded = read_checkpoint(path);
      CHECK(loaded.net.kind == kind);
      CHECK(loaded.net.depth == 4);
      CHECK(loaded.net.shared == shared);
      REQUIRE(loaded.net.weights_W.size() == net.weights_W.size());
      for (std::size_t i = 0; i < net.weights_W.size(); ++i)
        CHECK(loaded.net.weights_W[i] == net.weights_W[i]);
      for (std::size_t i = 0; i < net.weights_B.size(); ++i)
        CHECK(loaded.net.weights_B[i] == net.weights_B[i]);
      CHECK(loaded.net.thresholds == net.thresholds);
      if (kind == NetKind::lista_cpss) CHECK(loaded.net.support_fractions == net.support_fractions);
      REQUIRE(loaded.hp.has_value());
      CHECK(loaded.hp->Q == hp.Q);
      CHECK(loaded.hp->phi == hp.phi);
      CHECK(loaded.hp->psi == hp.psi);
      CHECK(loaded.hp->h_last == hp.h_last);

      bind_matrix(loaded.net, mat.entries);
      loaded.net.validate();
    }
  }
}

TEST_CASE("checkpoint without halting block loads none") {
  auto mat = gen_matrix(MatrixKind::gaussian, 6, 12, 2);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 2, true, 0);
  auto path = temp_path("bare.ckpt");
  write_checkpoint(path, net, nullptr);
  Checkpoint loaded = read_checkpoint(path);
  CHECK_FALSE(loaded.hp.has_value());
}

TEST_CASE("mlp halting heads round-trip") {
  auto mat = gen_matrix(MatrixKind::gaussian, 5, 10, 3);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 3, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::mlp2, 5, 3, 17);
  auto path = temp_path("mlp.ckpt");
  write_checkpoint(path, net, &hp);
  Checkpoint loaded = read_checkpoint(path);
  REQUIRE(loaded.hp.has_value());
  REQUIRE(loaded.hp->mlp.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(loaded.hp->mlp[t].W1 == hp.mlp[t].W1);
    CHECK(loaded.hp->mlp[t].b1 == hp.mlp[t].b1);
    CHECK(loaded.hp->mlp[t].w2 == hp.mlp[t].w2);
    CHECK(loaded.hp->mlp[t].b2 == hp.mlp[t].b2);
  }
}

TEST_CASE("bind_matrix rejects mismatched shapes") {
  auto mat = gen_matrix(MatrixKind::gaussian, 6, 12, 2);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 2, true, 0);
  auto path = temp_path("bind.ckpt");
  write_checkpoint(path, net, nullptr);
  Checkpoint loaded = read_checkpoint(path);
  CHECK_THROWS_AS(bind_matrix(loaded.net, Matrix::Zero(5, 12)), DimensionError);
}

TEST_CASE("csv writer emits stable headers and round-trip floats") {
  auto path = temp_path("table.csv");
  {
    CsvWriter csv(path, {"a", "b"});
    csv.field(1.0 / 3.0);
    csv.field(std::string("x"));
    csv.end_row();
    csv.field(-0.0000001234567890123);
    csv.field(7L);
    csv.end_row();
  }
  std::string text = slurp(path);
  CHECK(text.substr(0, 4) == "a,b\n");
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  // writing the same content twice is bit-identical
  auto path2 = temp_path("table2.csv");
  {
    CsvWriter csv(path2, {"a", "b"});
    csv.field(1.0 / 3.0);
    csv.field(std::string("x"));
    csv.end_row();
    csv.field(-0.0000001234567890123);
    csv.field(7L);
    csv.end_row();
  }
  CHECK(slurp(path2) == text);
}

TEST_CASE("config map parses, types, and round-trips") {
  const std::string text =
      "# comment line\n"
      "scenario = synthetic\n"
      "train.lr0 = 0.01   # trailing comment\n"
      "train.ratios = 0.1, 0.01, 0.001\n"
      "batch.snr_db = none\n"
      "net.shared = true\n";
  ConfigMap map = ConfigMap::parse_string(text);
  CHECK(map.get_string("scenario") == "synthetic");
  CHECK(map.get_double("train.lr0") == 0.01);
  CHECK(map.get_double_list("train.ratios") == std::vector<double>{0.1, 0.01, 0.001});
  CHECK_FALSE(map.get_optional_double("batch.snr_db").has_value());
  CHECK(map.get_bool("net.shared", false));
  CHECK_THROWS_AS(map.get_string("missing.key"), ParamError);
  CHECK_THROWS_AS(ConfigMap::parse_string("not a key value line\n"), ParamError);

  ConfigMap reparsed = ConfigMap::parse_string(map.to_string());
  CHECK(reparsed.entries() == map.entries());
}

TEST_CASE("experiment config resolves scenario defaults and echoes fully") {
  ConfigMap map = ConfigMap::parse_string("scenario = mtc_access\nseed = 9\n");
  ExperimentConfig cfg = experiment_config_from_map(map);
  CHECK(cfg.batch.matrix_kind == MatrixKind::qpsk_stacked);
  CHECK(cfg.batch.n == 64);
  CHECK(cfg.batch.m == 256);
  CHECK(cfg.batch.s_min == 1);
  CHECK(cfg.batch.s_max == 20);
  CHECK(cfg.train.tau == 100.0);
  CHECK(cfg.fixed_depth == 18);
  CHECK(cfg.depth == 20);
  REQUIRE(cfg.batch.snr_db.has_value());
  CHECK(*cfg.batch.snr_db == 20.0);

  // the resolved echo re-parses to the identical configuration
  ConfigMap echo = experiment_config_to_map(cfg);
  ExperimentConfig again = experiment_config_from_map(echo);
  CHECK(experiment_config_to_map(again).entries() == echo.entries());
}

TEST_CASE("experiment config collects all violations into one error") {
  ConfigMap map = ConfigMap::parse_string(
      "scenario = synthetic\nnet.depth = 0\neval.samples = 0\nbatch.s_min = 0\n");
  try {
    experiment_config_from_map(map);
    FAIL("expected ParamError");
  } catch (const ParamError& e) {
    std::string what = e.what();
    CHECK(what.find("net.depth") != std::string::npos);
    CHECK(what.find("eval.samples") != std::string::npos);
    CHECK(what.find("s_min") != std::string::npos);
  }
}

TEST_CASE("synthetic scenario defaults match the reference dimensions") {
  ExperimentConfig cfg = scenario_defaults(Scenario::synthetic);
  CHECK(cfg.batch.n == 250);
  CHECK(cfg.batch.m == 500);
  CHECK(cfg.batch.s_min == 10);
  CHECK(cfg.batch.s_max == 100);
  CHECK(cfg.batch.batch_size == 1000);
  CHECK(cfg.fixed_depth == 14);
  CHECK(cfg.depth == 16);
  CHECK(cfg.train.tau == 10.0);
}
