#include <doctest.h>

#include <cmath>
#include <limits>

#include "adun/halting.hpp"
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

TEST_CASE("sigmoid is stable and stays inside (0,1)") {
  CHECK(stable_sigmoid(0.0) == 0.5);
  CHECK(stable_sigmoid(800.0) < 1.0);
  CHECK(stable_sigmoid(-800.0) > 0.0);
  CHECK(stable_sigmoid(30.0) == doctest::Approx(1.0 / (1.0 + std::exp(-30.0))));
}

TEST_CASE("halting score trivial evaluations") {
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 4, 3, 0);
  Vector zero = Vector::Zero(4);
  // psi = 0, r = 0 -> sigma(0) = 0.5
  CHECK(halting_score(hp, 1, zero) == 0.5);

  // phi = 1, psi = -4, |Qr|^2 = 4 -> sigma(0) = 0.5
  hp.psi[0] = -4.0;
  Vector r(4);
  r << 2, 0, 0, 0;
  CHECK(halting_score(hp, 1, r) == 0.5);

  // last layer returns the fixed constant regardless of the residual
  CHECK(halting_score(hp, 3, r) == hp.h_last);
  CHECK_THROWS_AS(halting_score(hp, 0, r), ParamError);
  CHECK_THROWS_AS(halting_score(hp, 4, r), ParamError);
}

TEST_CASE("identity Q degenerates learned_q into no_q") {
  Rng rng(5);
  HaltingParams with_q = init_halting(HaltingDesign::learned_q, 6, 4, 0);
  HaltingParams without_q = init_halting(HaltingDesign::no_q, 6, 4, 0);
  with_q.phi.setConstant(0.7);
  without_q.phi.setConstant(0.7);
  with_q.psi.setConstant(-1.3);
  without_q.psi.setConstant(-1.3);
  for (int trial = 0; trial < 25; ++trial) {
    Vector r(6);
    for (Eigen::Index i = 0; i < 6; ++i) r[i] = rng.normal();
    for (int layer = 1; layer <= 3; ++layer)
      CHECK(halting_score(with_q, layer, r) == halting_score(without_q, layer, r));
  }
}

TEST_CASE("scores are strictly increasing in residual energy") {
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 5, 3, 0);
  hp.phi.setConstant(2.0);
  Vector r = Vector::Ones(5);
  double prev = halting_score(hp, 1, 0.1 * r);
  for (double scale : {0.3, 0.6, 1.0, 1.8}) {
    double h = halting_score(hp, 1, scale * r);
    CHECK(h > prev);
    prev = h;
  }
}

TEST_CASE("mlp2 head evaluates the two-layer network") {
  HaltingParams hp = init_halting(HaltingDesign::mlp2, 3, 2, 77);
  REQUIRE(hp.mlp.size() == 2);
  CHECK(hp.mlp[0].W1.rows() == 6);
  CHECK(hp.mlp[0].W1.cols() == 3);
  Vector r(3);
  r << 0.4, -1.0, 0.2;
  Vector hidden = (hp.mlp[0].W1 * r + hp.mlp[0].b1).cwiseMax(0.0);
  double expect = stable_sigmoid(hp.mlp[0].w2.dot(hidden) + hp.mlp[0].b2);
  CHECK(halting_score(hp, 1, r) == expect);
}

TEST_CASE("scores stay in (0,1) on random inputs for all designs") {
  Rng rng(31);
  for (auto design : {HaltingDesign::learned_q, HaltingDesign::no_q, HaltingDesign::mlp2}) {
    HaltingParams hp = init_halting(design, 8, 4, 3);
    for (int trial = 0; trial < 200; ++trial) {
      Vector r(8);
      for (Eigen::Index i = 0; i < 8; ++i) r[i] = 10.0 * rng.normal();
      for (int layer = 1; layer <= 4; ++layer) {
        double h = halting_score(hp, layer, r);
        CHECK(h > 0.0);
        CHECK(h < 1.0);
      }
    }
  }
}

TEST_CASE("score_trace runs every layer in training mode") {
  auto inst = seeded_instance(10, 20, 3, 3);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 6, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 10, 6, 0);
  ScoredTrace st = score_trace(net, hp, inst.y());
  CHECK(st.trace.layer_outputs.size() == 6);
  CHECK(st.scores.size() == 6);
  CHECK(st.scores.back() == hp.h_last);
  // scores match direct evaluation of the residuals
  for (int t = 1; t <= 6; ++t) {
    Vector r = inst.y() - inst.A() * st.trace.layer_outputs[static_cast<std::size_t>(t - 1)];
    CHECK(st.scores[static_cast<std::size_t>(t - 1)] == halting_score(hp, t, r));
  }
}

TEST_CASE("single-layer score trace reports only the constant") {
  auto inst = seeded_instance(6, 12, 2, 9);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 1, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 6, 1, 0);
  ScoredTrace st = score_trace(net, hp, inst.y());
  REQUIRE(st.scores.size() == 1);
  CHECK(st.scores[0] == hp.h_last);
}

TEST_CASE("infer_adaptive stops at the first score at or below epsilon") {
  // rig psi so the scores are approximately [0.8, 0.4, 0.09, ...]
  auto inst = seeded_instance(12, 24, 2, 21);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 5, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 12, 5, 0);
  ScoredTrace st = score_trace(net, hp, inst.y());
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  double targets[] = {0.8, 0.4, 0.09, 0.5, 0.5};
  for (int t = 0; t < 4; ++t) {
    Vector r = inst.y() - inst.A() * st.trace.layer_outputs[static_cast<std::size_t>(t)];
    hp.phi[t] = 1.0;
    hp.psi[t] = logit(targets[t]) - r.squaredNorm();
  }
  AdaptiveOutput out = infer_adaptive(net, hp, inst.y(), 0.1);
  CHECK(out.exit_layer == 3);
  CHECK(out.halted_early);
  CHECK(out.scores.size() == 3);
  CHECK(out.layers_computed == 3);
  CHECK((out.estimate - st.trace.layer_outputs[2]).norm() == 0.0);
}

TEST_CASE("epsilon below every score falls back to full depth") {
  auto inst = seeded_instance(12, 24, 4, 23);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 5, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 12, 5, 0, 0.5);  // h_last = 0.5
  hp.psi.setConstant(10.0);  // saturate all scores near 1
  AdaptiveOutput out = infer_adaptive(net, hp, inst.y(), 1e-6);
  CHECK(out.exit_layer == 5);
  CHECK_FALSE(out.halted_early);
  CHECK(out.layers_computed == 5);
}

TEST_CASE("epsilon to zero reproduces the full fixed-depth output exactly") {
  auto inst = seeded_instance(16, 32, 3, 29);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 7, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 16, 7, 0);
  ScoredTrace full = score_trace(net, hp, inst.y());
  AdaptiveOutput out = infer_adaptive(net, hp, inst.y(), 1e-300);
  CHECK(out.exit_layer == 7);
  CHECK((out.estimate - full.trace.layer_outputs.back()).norm() == 0.0);
}

TEST_CASE("layers beyond the exit are never computed") {
  auto inst = seeded_instance(10, 20, 2, 33);
  // per-layer parameters so a later layer can be poisoned
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 5, false, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 10, 5, 0);
  // force an exit at layer 2, poison layer 3: any evaluation would go NaN
  hp.psi.setConstant(10.0);
  ScoredTrace st = score_trace(net, hp, inst.y());
  Vector r2 = inst.y() - inst.A() * st.trace.layer_outputs[1];
  hp.phi[1] = 1.0;
  hp.psi[1] = std::log(0.05 / 0.95) - r2.squaredNorm();
  net.weights_W[2].setConstant(std::numeric_limits<double>::quiet_NaN());
  AdaptiveOutput out = infer_adaptive(net, hp, inst.y(), 0.1);
  CHECK(out.exit_layer == 2);
  CHECK(out.layers_computed == 2);
  CHECK(out.estimate.allFinite());
}

TEST_CASE("epsilon guidance from the optimal score") {
  CHECK(optimal_halting_score(0.0001, 1.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(optimal_halting_score(1.0, 4.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(optimal_halting_score(1.0, 0.0), ParamError);
}

TEST_CASE("infer_adaptive validates epsilon") {
  auto inst = seeded_instance(6, 12, 2, 1);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 2, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 6, 2, 0);
  CHECK_THROWS_AS(infer_adaptive(net, hp, inst.y(), 0.0), ParamError);
  CHECK_THROWS_AS(infer_adaptive(net, hp, inst.y(), 1.0), ParamError);
}
