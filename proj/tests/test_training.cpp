#include <doctest.h>

#include <cmath>

#include "adun/rng.hpp"
#include "adun/solvers.hpp"
#include "adun/training.hpp"

using namespace adun;

namespace {

ProblemInstance seeded_instance(int n, int m, int s, std::uint64_t seed) {
  auto mat = std::make_shared<const MeasurementMatrix>(gen_matrix(MatrixKind::gaussian, n, m, seed));
  auto sig = gen_sparse_signal(m, s, s, derive_seed(seed, 1));
  return gen_measurement(mat, std::move(sig), std::nullopt, seed);
}

// generic small configuration with randomized parameters, redrawn until it
// clears every shrinkage/relu/support kink so finite differences are valid
struct SmallConfig {
  UnfoldedNet net;
  HaltingParams hp;
  ProblemInstance instance;
};

SmallConfig random_config(HaltingDesign design, std::uint64_t seed, NetKind kind = NetKind::lista,
                          bool shared = true) {
  const int n = 8, m = 16, depth = 3;
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::uint64_t trial_seed = derive_seed(seed, attempt);
    ProblemInstance inst = seeded_instance(n, m, 4, trial_seed);
    UnfoldedNet net = init_network(kind, inst.A(), depth, shared, trial_seed, 0.1, 0.3);
    Rng rng(derive_seed(trial_seed, 2));
    for (auto& w : net.weights_W)
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.02 * rng.normal();
    for (auto& b : net.weights_B)
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] += 0.02 * rng.normal();
    for (Eigen::Index t = 0; t < net.thresholds.size(); ++t)
      net.thresholds[t] = 0.05 + 0.1 * rng.uniform01();
    HaltingParams hp = init_halting(design, n, depth, trial_seed);
    for (Eigen::Index t = 0; t < hp.phi.size(); ++t) {
      hp.phi[t] = 0.5 + rng.uniform01();
      hp.psi[t] = rng.normal();
    }
    if (design == HaltingDesign::learned_q)
      for (Eigen::Index i = 0; i < hp.Q.size(); ++i) hp.Q.data()[i] += 0.1 * rng.normal();
    if (!has_threshold_kink(net, hp, inst, 1e-4)) return {std::move(net), std::move(hp), std::move(inst)};
  }
}

}  // namespace

TEST_CASE("cost trivial evaluations") {
  LayerTrace trace;
  trace.input = Vector::Zero(2);
  Vector x_true(3);
  x_true << 1, 0, -1;

  // single layer, exact recovery: cost = tau * h1
  trace.layer_outputs = {x_true};
  CHECK(cost(trace, {0.3}, x_true, 4.0) == doctest::Approx(1.2).epsilon(1e-15));

  // h = 1 everywhere, tau = 0: plain per-layer SSE
  Vector off = x_true;
  off[0] += 1.0;
  trace.layer_outputs = {off, x_true};
  CHECK(cost(trace, {1.0, 1.0}, x_true, 0.0) == doctest::Approx(1.0).epsilon(1e-15));

  // err^2 = 1, tau = 4: minimized at h = 0.5 with value 4 per layer
  trace.layer_outputs = {off};
  CHECK(cost(trace, {0.5}, x_true, 4.0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(cost(trace, {0.4}, x_true, 4.0) > 4.0);
  CHECK(cost(trace, {0.6}, x_true, 4.0) > 4.0);

  CHECK_THROWS_AS(cost(trace, {0.0}, x_true, 4.0), NumericError);
  CHECK_THROWS_AS(cost(trace, {0.5, 0.5}, x_true, 4.0), DimensionError);
}

TEST_CASE("cost derivative vanishes exactly at the optimal halting score") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    double err_sq = std::pow(10.0, -4.0 * rng.uniform01());  // spread over decades
    double tau = 0.5 + 20.0 * rng.uniform01();
    double h_star = optimal_halting_score(err_sq, tau);
    CHECK(std::abs(cost_score_derivative(err_sq, h_star, tau)) < 1e-12 * tau);
  }
}

TEST_CASE("halting gradients vanish at the optimal score") {
  SmallConfig cfg = random_config(HaltingDesign::learned_q, 5);
  ScoredTrace st = score_trace(cfg.net, cfg.hp, cfg.instance.y());
  const double tau = 10.0;
  // rig psi so that h_t equals the optimal score at layers 1..L-1
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  for (int t = 0; t + 1 < cfg.net.depth; ++t) {
    Vector r = cfg.instance.y() - cfg.instance.A() * st.trace.layer_outputs[static_cast<std::size_t>(t)];
    double err_sq = (cfg.instance.x() - st.trace.layer_outputs[static_cast<std::size_t>(t)]).squaredNorm();
    double h_star = optimal_halting_score(err_sq, tau);
    REQUIRE(h_star < 1.0);
    cfg.hp.psi[t] = logit(h_star) - cfg.hp.phi[t] * (cfg.hp.Q * r).squaredNorm();
  }
  Gradients grads = halting_gradients(cfg.net, cfg.hp, cfg.instance, tau);
  CHECK(grads.phi.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(grads.psi.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(grads.Q.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("zero residual kills the Q gradient path") {
  // identity system recovered exactly after layer 1 -> residual 0 there
  auto owned = std::make_shared<MeasurementMatrix>();
  owned->entries = Matrix::Identity(6, 6);
  SparseSignal sig;
  sig.values = Vector::Zero(6);
  sig.values[1] = 1.0;
  sig.sparsity = 1;
  auto inst = gen_measurement(owned, sig, std::nullopt, 0);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 2, true, 0, 1e-9);
  net.weights_W[0].setZero();  // x1 = S(By) = y up to threshold; residual ~ 0
  net.weights_B[0] = Matrix::Identity(6, 6);
  net.thresholds.setConstant(1e-12);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 6, 2, 0);
  Gradients grads = halting_gradients(net, hp, inst, 10.0);
  // the only scored layer (t=1) has residual ~1e-12; dQ ~ outer(r, r) ~ 1e-24
  CHECK(grads.Q.cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("analytic gradients match finite differences on all designs") {
  for (auto design : {HaltingDesign::learned_q, HaltingDesign::no_q, HaltingDesign::mlp2}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      SmallConfig cfg = random_config(design, 100 + seed);
      auto rows = gradient_check(cfg.net, cfg.hp, cfg.instance, 10.0);
      for (const auto& row : rows) {
        INFO(to_string(design), " block ", row.block);
        CHECK(row.max_rel_error < 1e-5);
      }
    }
  }
}

TEST_CASE("analytic gradients match finite differences for per-layer and cpss nets") {
  SmallConfig per_layer = random_config(HaltingDesign::learned_q, 200, NetKind::lista, false);
  for (const auto& row : gradient_check(per_layer.net, per_layer.hp, per_layer.instance, 10.0)) {
    INFO("per-layer block ", row.block);
    CHECK(row.max_rel_error < 1e-5);
  }
  SmallConfig cpss = random_config(HaltingDesign::learned_q, 300, NetKind::lista_cpss, true);
  for (const auto& row : gradient_check(cpss.net, cpss.hp, cpss.instance, 10.0)) {
    INFO("cpss block ", row.block);
    CHECK(row.max_rel_error < 1e-5);
  }
}

TEST_CASE("dead shrinkage zeroes the network gradients") {
  auto inst = seeded_instance(8, 16, 3, 41);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 1, true, 0);
  net.thresholds.setConstant(1e6);  // output is identically zero
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 8, 1, 0);
  Gradients grads = network_gradients(net, hp, inst, 10.0);
  CHECK(grads.weights_W[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.weights_B[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.thresholds.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frozen unit scores reduce to the per-layer SSE gradients") {
  SmallConfig cfg = random_config(HaltingDesign::learned_q, 7);
  const auto depth = cfg.net.depth;
  BackwardOptions options;
  options.select = ParamSelect::net_only;
  options.frozen_scores = Matrix::Ones(depth, 1);
  BatchGradients ours =
      batch_gradients(cfg.net, cfg.hp, cfg.instance.x(), cfg.instance.y(), 0.0, options);

  // independent reduced-loss backprop: sum_t |x - x_t|^2 through the lista map
  const Matrix& a = cfg.net.A;
  const Vector& y = cfg.instance.y();
  const Vector& x_true = cfg.instance.x();
  std::vector<Vector> xs{Vector::Zero(cfg.net.m())};
  std::vector<Vector> zs;
  for (int t = 0; t < depth; ++t) {
    Vector z = cfg.net.W(t) * xs.back() + cfg.net.B(t) * y;
    zs.push_back(z);
    xs.push_back(soft_threshold(z, cfg.net.thresholds[t]));
  }
  Matrix gw = Matrix::Zero(cfg.net.m(), cfg.net.m());
  Matrix gb = Matrix::Zero(cfg.net.m(), a.rows());
  Vector glam = Vector::Zero(depth);
  Vector dx = Vector::Zero(cfg.net.m());
  for (int t = depth - 1; t >= 0; --t) {
    dx += 2.0 * (xs[static_cast<std::size_t>(t) + 1] - x_true);
    Vector mask = (zs[static_cast<std::size_t>(t)].array().abs() > cfg.net.thresholds[t])
                      .cast<double>()
                      .matrix();
    Vector du = dx.cwiseProduct(mask);
    gw += du * xs[static_cast<std::size_t>(t)].transpose();
    gb += du * y.transpose();
    glam[t] = -(xs[static_cast<std::size_t>(t) + 1].array().sign() * du.array()).sum();
    dx = cfg.net.W(t).transpose() * du;
  }
  CHECK((ours.grads.weights_W[0] - gw).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ours.grads.weights_B[0] - gb).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ours.grads.thresholds - glam).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("last-layer path dominates when h_last is tiny") {
  SmallConfig cfg = random_config(HaltingDesign::learned_q, 9);
  cfg.hp.h_last = 1e-4;
  // keep intermediate scores comfortably above 0.1
  cfg.hp.psi.setConstant(1.0);
  ScoredTrace st = score_trace(cfg.net, cfg.hp, cfg.instance.y());
  for (int t = 0; t + 1 < cfg.net.depth; ++t) REQUIRE(st.scores[static_cast<std::size_t>(t)] >= 0.1);
  auto full = loss_input_deltas(cfg.net, cfg.hp, cfg.instance, 10.0, false);
  auto last_only = loss_input_deltas(cfg.net, cfg.hp, cfg.instance, 10.0, true);
  for (int t = 0; t + 1 < cfg.net.depth; ++t) {
    double ratio = last_only[static_cast<std::size_t>(t)].norm() / full[static_cast<std::size_t>(t)].norm();
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);
  }
}

TEST_CASE("adam first step has the bias-corrected unit magnitude") {
  Vector param = Vector::Zero(1);
  Vector grad = Vector::Ones(1);
  ParamView params{{{param.data(), 1}}, {"p"}};
  ParamView grads{{{grad.data(), 1}}, {"p"}};
  AdamState adam;
  adam.step(params, grads, 1e-3);
  CHECK(param[0] == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam with zero gradients is a fixed point") {
  Vector param(3);
  param << 1.0, -2.0, 0.5;
  Vector before = param;
  Vector grad = Vector::Zero(3);
  ParamView params{{{param.data(), 3}}, {"p"}};
  ParamView grads{{{grad.data(), 3}}, {"p"}};
  AdamState adam;
  for (int i = 0; i < 50; ++i) adam.step(params, grads, 0.1);
  CHECK(param == before);
}

TEST_CASE("adam is deterministic and shape-checked") {
  auto run = [] {
    Vector param(2);
    param << 0.3, -0.7;
    AdamState adam;
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      Vector grad(2);
      grad << rng.normal(), rng.normal();
      ParamView params{{{param.data(), 2}}, {"p"}};
      ParamView grads{{{grad.data(), 2}}, {"p"}};
      adam.step(params, grads, 0.01);
    }
    return param;
  };
  Vector a = run(), b = run();
  CHECK(a == b);

  Vector param(2), grad3(3);
  param.setZero();
  grad3.setZero();
  AdamState adam;
  ParamView params{{{param.data(), 2}}, {"p"}};
  ParamView bad{{{grad3.data(), 3}}, {"p"}};
  CHECK_THROWS_AS(adam.step(params, bad, 0.1), DimensionError);
}

TEST_CASE("lr schedule stays at lr0 while losses improve") {
  LrSchedule sched({1e-3, 3, {0.1, 0.01}});
  double loss = 100.0;
  for (int i = 0; i < 50; ++i) {
    CHECK(sched.update(loss));
    loss *= 0.99;
    CHECK(sched.lr() == 1e-3);
  }
}

TEST_CASE("lr schedule hand simulation: changes at 4 and 8, done after 12") {
  LrSchedule sched({1.0, 3, {0.1, 0.01}});
  std::vector<double> lrs;
  std::vector<bool> alive;
  for (int batch = 1; batch <= 12; ++batch) {
    alive.push_back(sched.update(5.0));
    lrs.push_back(sched.lr());
  }
  CHECK(lrs[2] == 1.0);    // batch 3
  CHECK(lrs[3] == 0.1);    // changes at batch 4
  CHECK(lrs[6] == 0.1);    // batch 7
  CHECK(lrs[7] == 0.01);   // changes at batch 8
  CHECK(alive[10]);        // batch 11 still training
  CHECK_FALSE(alive[11]);  // completion at batch 12
  CHECK(sched.finished());
}

TEST_CASE("an improvement resets the patience counter") {
  LrSchedule sched({1.0, 3, {0.1}});
  sched.update(5.0);
  sched.update(5.0);
  sched.update(5.0);  // 2 stale batches
  sched.update(4.0);  // improvement
  sched.update(4.0);
  sched.update(4.0);
  CHECK(sched.lr() == 1.0);  // still within patience after the reset
  sched.update(4.0);
  CHECK(sched.lr() == 0.1);
}

TEST_CASE("stage 1 leaves the base network bit-identical") {
  BatchConfig data;
  data.n = 8;
  data.m = 16;
  data.s_min = 1;
  data.s_max = 3;
  data.batch_size = 16;
  data.n_batches = 8;
  data.master_seed = 3;
  TrainConfig config;
  config.tau = 10.0;
  config.lr0 = 1e-2;
  config.stage2_lr0 = 1e-3;
  config.plateau_patience = 50;
  config.stage1_batches = 8;
  config.stage2_batches = 0;  // stage 1 only
  config.pretrain_batches = 0;
  config.data = data;
  BatchStream stream(data);
  UnfoldedNet net = init_network(NetKind::lista, stream.matrix()->entries, 4, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 8, 4, 0);
  Matrix w_before = net.W(0);
  Matrix b_before = net.B(0);
  Vector lam_before = net.thresholds;
  Matrix q_before = hp.Q;
  TrainResult result = train_two_stage(config, std::move(net), std::move(hp), stream);
  CHECK(result.net.W(0) == w_before);
  CHECK(result.net.B(0) == b_before);
  CHECK(result.net.thresholds == lam_before);
  CHECK(result.hp.Q != q_before);  // halting side actually moved
  CHECK(result.history.size() == 8);
  for (const auto& row : result.history) {
    CHECK(row.stage == static_cast<int>(TrainStage::halting_only));
    CHECK(std::isfinite(row.loss));
  }
}

TEST_CASE("desk-scale smoke training lowers the loss and keeps it finite") {
  BatchConfig data;
  data.n = 16;
  data.m = 32;
  data.s_min = 1;
  data.s_max = 4;
  data.batch_size = 32;
  data.n_batches = 60;
  data.master_seed = 11;
  TrainConfig config;
  config.tau = 10.0;
  config.lr0 = 1e-2;
  config.stage2_lr0 = 1e-3;
  config.plateau_patience = 100;
  config.pretrain_batches = 30;
  config.pretrain_lr0 = 1e-3;
  config.stage1_batches = 30;
  config.stage2_batches = 30;
  config.data = data;
  BatchStream stream(data);
  UnfoldedNet net = init_network(NetKind::lista, stream.matrix()->entries, 5, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 16, 5, 0);
  TrainResult pre = train_fixed_depth(config, std::move(net), hp, stream);
  CHECK(pre.history.back().loss < pre.history.front().loss);
  TrainResult result = train_two_stage(config, std::move(pre.net), std::move(hp), stream);
  REQUIRE(result.history.size() == 60);
  for (const auto& row : result.history) CHECK(std::isfinite(row.loss));
  CHECK(result.history.back().loss < result.history.front().loss);
  // stage boundaries recorded
  CHECK(result.history[0].stage == static_cast<int>(TrainStage::halting_only));
  CHECK(result.history.back().stage == static_cast<int>(TrainStage::fine_tune_all));
}

TEST_CASE("train config validation") {
  TrainConfig config;
  config.data.n = 4;
  config.data.m = 8;
  config.lr_ratios = {0.5, 0.7};  // not decreasing
  CHECK_THROWS_AS(config.validate(), ParamError);
  config.lr_ratios = {0.5, 0.1};
  config.plateau_patience = 0;
  CHECK_THROWS_AS(config.validate(), ParamError);
}
