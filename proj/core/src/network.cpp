#include "adun/network.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "adun/solvers.hpp"

namespace adun {

const char* to_string(NetKind kind) {
  return kind == NetKind::lista ? "lista" : "lista_cpss";
}

NetKind net_kind_from_string(const std::string& s) {
  if (s == "lista") return NetKind::lista;
  if (s == "lista_cpss") return NetKind::lista_cpss;
  throw ParamError("unknown network kind: " + s);
}

void UnfoldedNet::validate() const {
  if (depth < 1) throw ParamError("UnfoldedNet: depth must be >= 1");
  if (thresholds.size() != depth) throw DimensionError("UnfoldedNet: thresholds size != depth");
  if ((thresholds.array() <= 0.0).any()) throw ParamError("UnfoldedNet: thresholds must be positive");
  const std::size_t expect = shared ? 1u : static_cast<std::size_t>(depth);
  if (weights_B.size() != expect) throw DimensionError("UnfoldedNet: B sharing inconsistent");
  if (kind == NetKind::lista) {
    if (weights_W.size() != expect) throw DimensionError("UnfoldedNet: W sharing inconsistent");
  } else {
    if (!weights_W.empty()) throw DimensionError("UnfoldedNet: cpss stores no W (coupled)");
    if (support_fractions.size() != depth)
      throw DimensionError("UnfoldedNet: support fractions size != depth");
    if ((support_fractions.array() <= 0.0).any() || (support_fractions.array() > 1.0).any())
      throw ParamError("UnfoldedNet: support fractions must lie in (0,1]");
  }
  for (const auto& b : weights_B)
    if (b.rows() != A.cols() || b.cols() != A.rows()) throw DimensionError("UnfoldedNet: B must be m x n");
  for (const auto& w : weights_W)
    if (w.rows() != A.cols() || w.cols() != A.cols()) throw DimensionError("UnfoldedNet: W must be m x m");
}

double spectral_norm_sq(const Matrix& A) {
  Eigen::BDCSVD<Matrix> svd(A);
  double s = svd.singularValues()(0);
  return s * s;
}

UnfoldedNet init_network(NetKind kind, const Matrix& A, int depth, bool shared, std::uint64_t seed,
                         double lambda0, double cpss_p_max) {
  if (depth < 1) throw ParamError("init_network: depth must be >= 1");
  if (!(lambda0 > 0.0)) throw ParamError("init_network: lambda0 must be positive");
  UnfoldedNet net;
  net.kind = kind;
  net.depth = depth;
  net.shared = shared;
  net.A = A;
  (void)seed;  // initialization is deterministic; kept for randomized variants

  const double beta = 1.0 / spectral_norm_sq(A);
  Matrix b = beta * A.transpose();
  const std::size_t copies = shared ? 1u : static_cast<std::size_t>(depth);
  net.weights_B.assign(copies, b);
  if (kind == NetKind::lista) {
    Matrix w = Matrix::Identity(A.cols(), A.cols()) - b * A;
    net.weights_W.assign(copies, w);
  } else {
    if (!(cpss_p_max > 0.0) || cpss_p_max > 1.0)
      throw ParamError("init_network: cpss_p_max must lie in (0,1]");
    net.support_fractions.resize(depth);
    for (int t = 0; t < depth; ++t)
      net.support_fractions[t] = cpss_p_max * static_cast<double>(t + 1) / static_cast<double>(depth);
  }
  net.thresholds = Vector::Constant(depth, lambda0);
  return net;
}

std::vector<Eigen::Index> cpss_support(const Vector& z, double p) {
  const auto m = z.size();
  auto k = static_cast<Eigen::Index>(std::ceil(p * static_cast<double>(m)));
  k = std::clamp<Eigen::Index>(k, 1, m);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), [&z](Eigen::Index a, Eigen::Index b) {
    double fa = std::abs(z[a]), fb = std::abs(z[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

Vector layer_step(const UnfoldedNet& net, int layer, const Vector& x_prev, const Vector& y) {
  if (y.size() != net.n()) throw DimensionError("layer_step: y length does not match");
  const double lambda = net.thresholds[layer];
  if (net.kind == NetKind::lista) {
    return soft_threshold(net.W(layer) * x_prev + net.B(layer) * y, lambda);
  }
  Vector z = x_prev + net.B(layer) * (y - net.A * x_prev);
  Vector out = soft_threshold(z, lambda);
  for (auto i : cpss_support(z, net.support_fractions[layer])) out[i] = z[i];  // pass un-shrunk
  return out;
}

LayerTrace forward(const UnfoldedNet& net, const Vector& y) {
  LayerTrace trace;
  trace.input = y;
  trace.layer_outputs.reserve(static_cast<std::size_t>(net.depth));
  Vector x = Vector::Zero(net.m());
  for (int t = 0; t < net.depth; ++t) {
    x = layer_step(net, t, x, y);
    trace.layer_outputs.push_back(x);
  }
  return trace;
}

std::vector<Matrix> forward_batch(const UnfoldedNet& net, const Matrix& Y) {
  if (Y.rows() != net.n()) throw DimensionError("forward_batch: Y rows do not match");
  std::vector<Matrix> xs;
  xs.reserve(static_cast<std::size_t>(net.depth) + 1);
  xs.push_back(Matrix::Zero(net.m(), Y.cols()));
  for (int t = 0; t < net.depth; ++t) {
    const Matrix& x = xs.back();
    const double lambda = net.thresholds[t];
    Matrix z;
    if (net.kind == NetKind::lista)
      z = net.W(t) * x + net.B(t) * Y;
    else
      z = x + net.B(t) * (Y - net.A * x);
    Matrix out = z.array().sign() * (z.array().abs() - lambda).max(0.0);
    if (net.kind == NetKind::lista_cpss) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        Vector col = z.col(j);
        for (auto i : cpss_support(col, net.support_fractions[t])) out(i, j) = z(i, j);
      }
    }
    xs.push_back(std::move(out));
  }
  return xs;
}

}  // namespace adun
