#include "adun/halting.hpp"

#include <cmath>
#include <limits>

#include "adun/rng.hpp"

namespace adun {

const char* to_string(HaltingDesign design) {
  switch (design) {
    case HaltingDesign::learned_q: return "learned_q";
    case HaltingDesign::no_q: return "no_q";
    case HaltingDesign::mlp2: return "mlp2";
  }
  return "?";
}

HaltingDesign halting_design_from_string(const std::string& s) {
  if (s == "learned_q") return HaltingDesign::learned_q;
  if (s == "no_q") return HaltingDesign::no_q;
  if (s == "mlp2") return HaltingDesign::mlp2;
  throw ParamError("unknown halting design: " + s);
}

void HaltingParams::validate(Eigen::Index n) const {
  if (depth() < 1) throw ParamError("HaltingParams: depth must be >= 1");
  if (psi.size() != phi.size()) throw DimensionError("HaltingParams: phi/psi size mismatch");
  if ((phi.array() <= 0.0).any()) throw ParamError("HaltingParams: phi must be positive");
  if (!(h_last > 0.0 && h_last < 1.0)) throw ParamError("HaltingParams: h_last must lie in (0,1)");
  if (design == HaltingDesign::learned_q) {
    if (Q.rows() != n || Q.cols() != n) throw DimensionError("HaltingParams: Q must be n x n");
  }
  if (design == HaltingDesign::mlp2) {
    if (mlp.size() != static_cast<std::size_t>(depth()))
      throw DimensionError("HaltingParams: one mlp head per layer required");
    for (const auto& head : mlp) {
      if (head.W1.rows() != 2 * n || head.W1.cols() != n || head.b1.size() != 2 * n ||
          head.w2.size() != 2 * n)
        throw DimensionError("HaltingParams: mlp head shapes must be {2n x n, 2n, 2n, 1}");
    }
  }
}

double stable_sigmoid(double v) {
  double s;
  if (v >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-v));
  } else {
    double e = std::exp(v);
    s = e / (1.0 + e);
  }
  // keep the open interval so 1/h and h(1-h) stay meaningful
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return std::min(std::max(s, lo), hi);
}

HaltingParams init_halting(HaltingDesign design, Eigen::Index n, int depth, std::uint64_t seed,
                           double h_last) {
  if (depth < 1) throw ParamError("init_halting: depth must be >= 1");
  HaltingParams hp;
  hp.design = design;
  hp.phi = Vector::Ones(depth);
  hp.psi = Vector::Zero(depth);
  hp.h_last = h_last;
  if (design == HaltingDesign::learned_q) hp.Q = Matrix::Identity(n, n);
  if (design == HaltingDesign::mlp2) {
    Rng rng(derive_seed(seed, 0x41717));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    hp.mlp.resize(static_cast<std::size_t>(depth));
    for (auto& head : hp.mlp) {
      head.W1.resize(2 * n, n);
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < 2 * n; ++i) head.W1(i, j) = scale * rng.normal();
      head.b1 = Vector::Zero(2 * n);
      head.w2.resize(2 * n);
      for (Eigen::Index i = 0; i < 2 * n; ++i) head.w2[i] = scale * rng.normal();
      head.b2 = 0.0;
    }
  }
  hp.validate(n);
  return hp;
}

double halting_score(const HaltingParams& hp, int layer, const Vector& residual) {
  if (layer < 1 || layer > hp.depth()) throw ParamError("halting_score: layer out of range");
  if (layer == hp.depth()) return hp.h_last;
  const auto t = static_cast<Eigen::Index>(layer - 1);
  switch (hp.design) {
    case HaltingDesign::learned_q:
      return stable_sigmoid(hp.phi[t] * (hp.Q * residual).squaredNorm() + hp.psi[t]);
    case HaltingDesign::no_q:
      return stable_sigmoid(hp.phi[t] * residual.squaredNorm() + hp.psi[t]);
    case HaltingDesign::mlp2: {
      const MlpHead& head = hp.mlp[static_cast<std::size_t>(t)];
      Vector hidden = (head.W1 * residual + head.b1).cwiseMax(0.0);
      return stable_sigmoid(head.w2.dot(hidden) + head.b2);
    }
  }
  throw ParamError("halting_score: unknown design");
}

ScoredTrace score_trace(const UnfoldedNet& net, const HaltingParams& hp, const Vector& y) {
  ScoredTrace out;
  out.trace = forward(net, y);
  out.scores.reserve(static_cast<std::size_t>(net.depth));
  for (int t = 1; t <= net.depth; ++t) {
    Vector residual = y - net.A * out.trace.layer_outputs[static_cast<std::size_t>(t - 1)];
    out.scores.push_back(halting_score(hp, t, residual));
  }
  return out;
}

AdaptiveOutput infer_adaptive(const UnfoldedNet& net, const HaltingParams& hp, const Vector& y,
                              double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParamError("infer_adaptive: epsilon must lie in (0,1)");
  AdaptiveOutput out;
  Vector x = Vector::Zero(net.m());
  for (int t = 1; t <= net.depth; ++t) {
    x = layer_step(net, t - 1, x, y);
    ++out.layers_computed;
    Vector residual = y - net.A * x;
    double h = halting_score(hp, t, residual);
    out.scores.push_back(h);
    if (h <= epsilon || t == net.depth) {
      out.estimate = x;
      out.exit_layer = t;
      out.halted_early = h <= epsilon;
      return out;
    }
  }
  return out;  // unreachable; depth >= 1 guarantees a return above
}

double optimal_halting_score(double err_sq, double tau) {
  if (!(tau > 0.0)) throw ParamError("optimal_halting_score: tau must be positive");
  if (err_sq < 0.0) throw ParamError("optimal_halting_score: err_sq must be >= 0");
  return std::sqrt(err_sq / tau);
}

}  // namespace adun
