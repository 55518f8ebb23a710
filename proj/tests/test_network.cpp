#include <doctest.h>

#include <cmath>

#include "adun/network.hpp"
#include "adun/rng.hpp"
#include "adun/solvers.hpp"

using namespace adun;

namespace {

ProblemInstance seeded_instance(int n, int m, int s, std::uint64_t seed) {
  auto mat = std::make_shared<const MeasurementMatrix>(gen_matrix(MatrixKind::gaussian, n, m, seed));
  auto sig = gen_sparse_signal(m, s, s, derive_seed(seed, 1));
  return gen_measurement(mat, std::move(sig), std::nullopt, seed);
}

}  // namespace

TEST_CASE("init produces shared lista with expected shapes") {
  auto mat = gen_matrix(MatrixKind::gaussian, 16, 32, 4);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 14, true, 4);
  CHECK(net.weights_W.size() == 1);
  CHECK(net.weights_B.size() == 1);
  CHECK(net.thresholds.size() == 14);
  CHECK((net.thresholds.array() == 0.1).all());
  CHECK(net.W(0).rows() == 32);
  CHECK(net.W(0).cols() == 32);
  CHECK(net.B(0).rows() == 32);
  CHECK(net.B(0).cols() == 16);
  net.validate();

  UnfoldedNet per_layer = init_network(NetKind::lista, mat.entries, 3, false, 4);
  CHECK(per_layer.weights_W.size() == 3);
  CHECK(per_layer.weights_B.size() == 3);
}

TEST_CASE("untrained forward pass equals ista iterates") {
  auto inst = seeded_instance(16, 32, 3, 11);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 10, true, 0);
  double beta = 1.0 / spectral_norm_sq(inst.A());
  SolverTrace ista = ista_solve(inst, 0.1, beta, 10, 0.0);
  LayerTrace trace = forward(net, inst.y());
  for (int t = 0; t < 10; ++t)
    CHECK((trace.layer_outputs[static_cast<std::size_t>(t)] -
           ista.iterates[static_cast<std::size_t>(t) + 1])
              .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("depth-1 net computes a single shrinkage of By") {
  auto inst = seeded_instance(8, 16, 2, 3);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 1, true, 0);
  LayerTrace trace = forward(net, inst.y());
  REQUIRE(trace.layer_outputs.size() == 1);
  Vector expect = soft_threshold(net.B(0) * inst.y(), net.thresholds[0]);
  CHECK((trace.layer_outputs[0] - expect).norm() == 0.0);
}

TEST_CASE("zero W decouples the layers") {
  auto inst = seeded_instance(8, 16, 2, 5);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 4, true, 0);
  net.weights_W[0].setZero();
  LayerTrace trace = forward(net, inst.y());
  for (int t = 0; t < 4; ++t) {
    Vector expect = soft_threshold(net.B(0) * inst.y(), net.thresholds[t]);
    CHECK((trace.layer_outputs[static_cast<std::size_t>(t)] - expect).norm() == 0.0);
  }
}

TEST_CASE("zero input stays at the zero fixed point") {
  auto mat = gen_matrix(MatrixKind::gaussian, 8, 16, 6);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 5, true, 0);
  LayerTrace trace = forward(net, Vector::Zero(8));
  for (const auto& x : trace.layer_outputs) CHECK(x.isZero(0.0));
}

TEST_CASE("forward emits exactly depth outputs") {
  auto inst = seeded_instance(8, 16, 2, 7);
  for (int depth : {1, 3, 9}) {
    UnfoldedNet net = init_network(NetKind::lista, inst.A(), depth, true, 0);
    CHECK(forward(net, inst.y()).layer_outputs.size() == static_cast<std::size_t>(depth));
  }
}

TEST_CASE("ista reduction property holds over 50 iterations") {
  auto inst = seeded_instance(24, 48, 4, 13);
  const double beta = 1.0 / spectral_norm_sq(inst.A());
  const double lambda = 0.37;
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 50, true, 0);
  net.thresholds.setConstant(beta * lambda);
  SolverTrace ista = ista_solve(inst, beta * lambda, beta, 50, 0.0);
  LayerTrace trace = forward(net, inst.y());
  for (int t = 0; t < 50; ++t)
    CHECK((trace.layer_outputs[static_cast<std::size_t>(t)] -
           ista.iterates[static_cast<std::size_t>(t) + 1])
              .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("cpss stores no W and couples through the measurement matrix") {
  auto inst = seeded_instance(12, 24, 3, 17);
  UnfoldedNet net = init_network(NetKind::lista_cpss, inst.A(), 6, true, 0, 0.1, 0.25);
  CHECK(net.weights_W.empty());
  CHECK(net.support_fractions.size() == 6);
  CHECK(net.support_fractions[5] == doctest::Approx(0.25));
  CHECK(net.support_fractions[0] > 0.0);
  net.validate();

  // explicit coupled form: x + B(y - Ax) == (I - BA) x + By
  Vector x_prev = Vector::Zero(24);
  LayerTrace trace = forward(net, inst.y());
  Vector z = net.B(0) * inst.y();
  Vector manual = soft_threshold(z, net.thresholds[0]);
  for (auto i : cpss_support(z, net.support_fractions[0])) manual[i] = z[i];
  CHECK((trace.layer_outputs[0] - manual).norm() == 0.0);
}

TEST_CASE("cpss pass-through coordinates are exactly unshrunk") {
  auto inst = seeded_instance(12, 24, 3, 19);
  UnfoldedNet net = init_network(NetKind::lista_cpss, inst.A(), 4, true, 0, 0.1, 0.3);
  Vector x = Vector::Zero(24);
  for (int t = 0; t < 4; ++t) {
    Vector z = x + net.B(t) * (inst.y() - inst.A() * x);
    Vector out = layer_step(net, t, x, inst.y());
    auto support = cpss_support(z, net.support_fractions[t]);
    std::size_t expected_size =
        static_cast<std::size_t>(std::ceil(net.support_fractions[t] * 24.0));
    CHECK(support.size() == expected_size);
    for (auto i : support) CHECK(out[i] == z[i]);
    x = out;
  }
}

TEST_CASE("batched forward matches per-sample forward") {
  auto mat = gen_matrix(MatrixKind::gaussian, 10, 20, 23);
  for (NetKind kind : {NetKind::lista, NetKind::lista_cpss}) {
    UnfoldedNet net = init_network(kind, mat.entries, 5, true, 0, 0.05, 0.2);
    Matrix y(10, 3);
    Rng rng(99);
    for (Eigen::Index j = 0; j < 3; ++j)
      for (Eigen::Index i = 0; i < 10; ++i) y(i, j) = rng.normal();
    auto xs = forward_batch(net, y);
    REQUIRE(xs.size() == 6);
    for (Eigen::Index j = 0; j < 3; ++j) {
      LayerTrace trace = forward(net, y.col(j));
      for (int t = 0; t < 5; ++t)
        CHECK((xs[static_cast<std::size_t>(t) + 1].col(j) -
               trace.layer_outputs[static_cast<std::size_t>(t)])
                  .norm() == 0.0);
    }
  }
}

TEST_CASE("validate rejects broken nets") {
  auto mat = gen_matrix(MatrixKind::gaussian, 8, 16, 1);
  UnfoldedNet net = init_network(NetKind::lista, mat.entries, 3, true, 0);
  net.thresholds[1] = 0.0;
  CHECK_THROWS_AS(net.validate(), ParamError);
  net = init_network(NetKind::lista, mat.entries, 3, true, 0);
  net.weights_W.push_back(net.weights_W[0]);
  CHECK_THROWS_AS(net.validate(), DimensionError);
}
