#include "adun/training.hpp"

#include <cmath>
#include <limits>

namespace adun {

double cost(const LayerTrace& trace, const std::vector<double>& scores, const Vector& x_true,
            double tau) {
  if (trace.layer_outputs.size() != scores.size())
    throw DimensionError("cost: trace and scores lengths differ");
  if (tau < 0.0) throw ParamError("cost: tau must be >= 0");
  double total = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    double h = scores[t];
    if (!(h > 0.0)) throw NumericError("cost: halting score must be positive");
    total += (x_true - trace.layer_outputs[t]).squaredNorm() / h + tau * h;
  }
  return total;
}

double cost_score_derivative(double err_sq, double h, double tau) {
  if (!(h > 0.0)) throw NumericError("cost_score_derivative: h must be positive");
  return tau - err_sq / (h * h);
}

Gradients Gradients::zeros_like(const UnfoldedNet& net, const HaltingParams& hp) {
  Gradients g;
  g.weights_W.reserve(net.weights_W.size());
  for (const auto& w : net.weights_W) g.weights_W.push_back(Matrix::Zero(w.rows(), w.cols()));
  g.weights_B.reserve(net.weights_B.size());
  for (const auto& b : net.weights_B) g.weights_B.push_back(Matrix::Zero(b.rows(), b.cols()));
  g.thresholds = Vector::Zero(net.thresholds.size());
  if (hp.design == HaltingDesign::learned_q) g.Q = Matrix::Zero(hp.Q.rows(), hp.Q.cols());
  g.phi = Vector::Zero(hp.phi.size());
  g.psi = Vector::Zero(hp.psi.size());
  if (hp.design == HaltingDesign::mlp2) {
    g.mlp.resize(hp.mlp.size());
    for (std::size_t t = 0; t < hp.mlp.size(); ++t) {
      g.mlp[t].W1 = Matrix::Zero(hp.mlp[t].W1.rows(), hp.mlp[t].W1.cols());
      g.mlp[t].b1 = Vector::Zero(hp.mlp[t].b1.size());
      g.mlp[t].w2 = Vector::Zero(hp.mlp[t].w2.size());
      g.mlp[t].b2 = 0.0;
    }
  }
  return g;
}

namespace {

struct ForwardCache {
  std::vector<Matrix> xs;         // L+1 entries, m x B
  std::vector<Matrix> preacts;    // L entries, m x B
  std::vector<Matrix> residuals;  // L entries, n x B
  std::vector<Matrix> qres;       // learned_q: Q * residual per layer
  std::vector<Matrix> hidden_pre; // mlp2: W1 r + b1 per layer
  Matrix score_args;              // qr2 (learned_q/no_q) per layer/sample
  Matrix scores;                  // L x B
  Matrix errs;                    // L x B, squared errors
  std::vector<std::vector<std::vector<Eigen::Index>>> supports;  // cpss pass-through sets
};

ForwardCache run_forward(const UnfoldedNet& net, const HaltingParams& hp, const Matrix& x_true,
                         const Matrix& y, const BackwardOptions& options) {
  const auto depth = net.depth;
  const auto batch = y.cols();
  const bool frozen = options.frozen_scores.has_value();
  const bool cpss = net.kind == NetKind::lista_cpss;

  ForwardCache cache;
  cache.xs.reserve(static_cast<std::size_t>(depth) + 1);
  cache.xs.push_back(Matrix::Zero(net.m(), batch));
  cache.preacts.reserve(static_cast<std::size_t>(depth));
  cache.scores.resize(depth, batch);
  cache.errs.resize(depth, batch);
  if (!frozen) {
    cache.residuals.reserve(static_cast<std::size_t>(depth));
    if (hp.design != HaltingDesign::mlp2) cache.score_args.resize(depth, batch);
    if (hp.design == HaltingDesign::learned_q) cache.qres.reserve(static_cast<std::size_t>(depth));
    if (hp.design == HaltingDesign::mlp2) cache.hidden_pre.reserve(static_cast<std::size_t>(depth));
  }
  if (cpss) cache.supports.resize(static_cast<std::size_t>(depth));

  for (int t = 0; t < depth; ++t) {
    const Matrix& x = cache.xs.back();
    Matrix z = cpss ? Matrix(x + net.B(t) * (y - net.A * x)) : Matrix(net.W(t) * x + net.B(t) * y);
    const double lambda = net.thresholds[t];
    Matrix out = z.array().sign() * (z.array().abs() - lambda).max(0.0);
    if (cpss) {
      auto& layer_supports = cache.supports[static_cast<std::size_t>(t)];
      layer_supports.resize(static_cast<std::size_t>(batch));
      for (Eigen::Index j = 0; j < batch; ++j) {
        Vector col = z.col(j);
        auto support = cpss_support(col, net.support_fractions[t]);
        for (auto i : support) out(i, j) = z(i, j);
        layer_supports[static_cast<std::size_t>(j)] = std::move(support);
      }
    }
    cache.preacts.push_back(std::move(z));
    cache.xs.push_back(std::move(out));

    const Matrix& xt = cache.xs.back();
    cache.errs.row(t) = (x_true - xt).colwise().squaredNorm();

    if (frozen) {
      cache.scores.row(t) = options.frozen_scores->row(t);
      continue;
    }
    Matrix residual = y - net.A * xt;
    if (t == depth - 1) {
      cache.scores.row(t).setConstant(hp.h_last);
    } else {
      switch (hp.design) {
        case HaltingDesign::learned_q: {
          Matrix qr = hp.Q * residual;
          cache.score_args.row(t) = qr.colwise().squaredNorm();
          for (Eigen::Index j = 0; j < batch; ++j)
            cache.scores(t, j) = stable_sigmoid(hp.phi[t] * cache.score_args(t, j) + hp.psi[t]);
          cache.qres.push_back(std::move(qr));
          break;
        }
        case HaltingDesign::no_q: {
          cache.score_args.row(t) = residual.colwise().squaredNorm();
          for (Eigen::Index j = 0; j < batch; ++j)
            cache.scores(t, j) = stable_sigmoid(hp.phi[t] * cache.score_args(t, j) + hp.psi[t]);
          break;
        }
        case HaltingDesign::mlp2: {
          const MlpHead& head = hp.mlp[static_cast<std::size_t>(t)];
          Matrix pre = (head.W1 * residual).colwise() + head.b1;
          for (Eigen::Index j = 0; j < batch; ++j) {
            double s = head.w2.dot(pre.col(j).cwiseMax(0.0)) + head.b2;
            cache.scores(t, j) = stable_sigmoid(s);
          }
          cache.hidden_pre.push_back(std::move(pre));
          break;
        }
      }
    }
    // keep per-layer slots aligned across designs
    if (hp.design == HaltingDesign::learned_q && t == depth - 1) cache.qres.push_back(Matrix());
    if (hp.design == HaltingDesign::mlp2 && t == depth - 1) cache.hidden_pre.push_back(Matrix());
    cache.residuals.push_back(std::move(residual));
  }
  return cache;
}

}  // namespace

BatchGradients batch_gradients(const UnfoldedNet& net, const HaltingParams& hp, const Matrix& x_true,
                               const Matrix& y, double tau, const BackwardOptions& options) {
  if (y.rows() != net.n() || x_true.rows() != net.m() || y.cols() != x_true.cols())
    throw DimensionError("batch_gradients: shape mismatch");
  if (tau < 0.0) throw ParamError("batch_gradients: tau must be >= 0");
  if (options.frozen_scores &&
      (options.frozen_scores->rows() != net.depth || options.frozen_scores->cols() != y.cols()))
    throw DimensionError("batch_gradients: frozen scores must be depth x batch");

  const auto depth = net.depth;
  const auto batch = y.cols();
  const bool frozen = options.frozen_scores.has_value();
  const bool cpss = net.kind == NetKind::lista_cpss;
  const bool want_net = options.select != ParamSelect::halting_only;
  const bool want_halt = options.select != ParamSelect::net_only && !frozen;

  ForwardCache cache = run_forward(net, hp, x_true, y, options);

  BatchGradients result;
  result.grads = Gradients::zeros_like(net, hp);
  Gradients& g = result.grads;

  if ((cache.scores.array() <= 0.0).any())
    throw NumericError("batch_gradients: nonpositive halting score");
  result.loss =
      ((cache.errs.array() / cache.scores.array()) + tau * cache.scores.array()).colwise().sum().mean();

  Matrix dx;  // dL/dx_t, accumulated from the back
  if (want_net) dx = Matrix::Zero(net.m(), batch);

  for (int t = depth - 1; t >= 0; --t) {
    const Matrix& xt = cache.xs[static_cast<std::size_t>(t) + 1];
    const auto h = cache.scores.row(t).array();
    const auto e = cache.errs.row(t).array();

    if (want_net) {
      // direct term of l(x_t)
      dx.noalias() += (xt - x_true) * (2.0 / h).matrix().asDiagonal();
    }

    if (t < depth - 1 && !frozen) {
      // dL/dh * sigma'(score argument), per sample
      Eigen::RowVectorXd gs =
          ((tau - e / (h * h)) * h * (1.0 - h)).matrix();
      switch (hp.design) {
        case HaltingDesign::learned_q: {
          const Matrix& qr = cache.qres[static_cast<std::size_t>(t)];
          if (want_halt) {
            g.phi[t] += (gs.array() * cache.score_args.row(t).array()).sum();
            g.psi[t] += gs.sum();
            g.Q.noalias() += 2.0 * hp.phi[t] * (qr * gs.asDiagonal()) *
                             cache.residuals[static_cast<std::size_t>(t)].transpose();
          }
          if (want_net)
            dx.noalias() -=
                2.0 * hp.phi[t] * (net.A.transpose() * (hp.Q.transpose() * (qr * gs.asDiagonal())));
          break;
        }
        case HaltingDesign::no_q: {
          const Matrix& r = cache.residuals[static_cast<std::size_t>(t)];
          if (want_halt) {
            g.phi[t] += (gs.array() * cache.score_args.row(t).array()).sum();
            g.psi[t] += gs.sum();
          }
          if (want_net)
            dx.noalias() -= 2.0 * hp.phi[t] * (net.A.transpose() * (r * gs.asDiagonal()));
          break;
        }
        case HaltingDesign::mlp2: {
          const MlpHead& head = hp.mlp[static_cast<std::size_t>(t)];
          const Matrix& pre = cache.hidden_pre[static_cast<std::size_t>(t)];
          Matrix act = pre.cwiseMax(0.0);
          // dL/d(pre) = (w2 g^T) masked to active relu units
          Matrix dz = (head.w2 * gs).array() * (pre.array() > 0.0).cast<double>();
          if (want_halt) {
            MlpHead& gh = g.mlp[static_cast<std::size_t>(t)];
            gh.w2.noalias() += act * gs.transpose();
            gh.b2 += gs.sum();
            gh.W1.noalias() += dz * cache.residuals[static_cast<std::size_t>(t)].transpose();
            gh.b1.noalias() += dz.rowwise().sum();
          }
          if (want_net) dx.noalias() -= net.A.transpose() * (head.W1.transpose() * dz);
          break;
        }
      }
    }

    if (!want_net) continue;

    // through the shrinkage: derivative 1 where |preact| > lambda (and on the
    // cpss pass-through support), else 0
    const Matrix& z = cache.preacts[static_cast<std::size_t>(t)];
    const double lambda = net.thresholds[t];
    Matrix du = dx.array() * (z.array().abs() > lambda).cast<double>();
    double lambda_grad = 0.0;
    if (cpss) {
      // pass-through coordinates have derivative 1 and no lambda dependence
      Matrix du_soft = du;
      for (Eigen::Index j = 0; j < batch; ++j)
        for (auto i : cache.supports[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)]) {
          du(i, j) = dx(i, j);
          du_soft(i, j) = 0.0;
        }
      lambda_grad = -(xt.array().sign() * du_soft.array()).sum();
      g.weights_B[net.shared ? 0 : static_cast<std::size_t>(t)].noalias() +=
          du * (y - net.A * cache.xs[static_cast<std::size_t>(t)]).transpose();
      dx = du - net.A.transpose() * (net.B(t).transpose() * du);
    } else {
      lambda_grad = -(xt.array().sign() * du.array()).sum();
      g.weights_W[net.shared ? 0 : static_cast<std::size_t>(t)].noalias() +=
          du * cache.xs[static_cast<std::size_t>(t)].transpose();
      g.weights_B[net.shared ? 0 : static_cast<std::size_t>(t)].noalias() += du * y.transpose();
      dx = net.W(t).transpose() * du;
    }
    g.thresholds[t] += lambda_grad;
  }

  // mean over the batch
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (auto& w : g.weights_W) w *= inv_b;
  for (auto& b : g.weights_B) b *= inv_b;
  g.thresholds *= inv_b;
  if (g.Q.size() > 0) g.Q *= inv_b;
  g.phi *= inv_b;
  g.psi *= inv_b;
  for (auto& head : g.mlp) {
    head.W1 *= inv_b;
    head.b1 *= inv_b;
    head.w2 *= inv_b;
    head.b2 *= inv_b;
  }
  if (!std::isfinite(result.loss)) throw NumericError("batch_gradients: non-finite loss");
  return result;
}

Gradients halting_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                            const ProblemInstance& instance, double tau) {
  BackwardOptions options;
  options.select = ParamSelect::halting_only;
  return batch_gradients(net, hp, instance.x(), instance.y(), tau, options).grads;
}

Gradients network_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                            const ProblemInstance& instance, double tau) {
  BackwardOptions options;
  options.select = ParamSelect::net_only;
  return batch_gradients(net, hp, instance.x(), instance.y(), tau, options).grads;
}

BatchGradients all_gradients(const UnfoldedNet& net, const HaltingParams& hp,
                             const ProblemInstance& instance, double tau) {
  return batch_gradients(net, hp, instance.x(), instance.y(), tau, {});
}

std::vector<Vector> loss_input_deltas(const UnfoldedNet& net, const HaltingParams& hp,
                                      const ProblemInstance& instance, double tau,
                                      bool last_layer_path_only) {
  BackwardOptions options;
  ForwardCache cache = run_forward(net, hp, instance.x(), instance.y(), options);
  const int depth = net.depth;
  std::vector<Vector> deltas(static_cast<std::size_t>(depth));
  Matrix dx = Matrix::Zero(net.m(), 1);
  for (int t = depth - 1; t >= 0; --t) {
    const Matrix& xt = cache.xs[static_cast<std::size_t>(t) + 1];
    const double h = cache.scores(t, 0);
    const double e = cache.errs(t, 0);
    const bool include_direct = !last_layer_path_only || t == depth - 1;
    if (include_direct) dx.noalias() += (xt - instance.x()) * (2.0 / h);
    if (t < depth - 1 && !last_layer_path_only) {
      double gscale = cost_score_derivative(e, h, tau) * h * (1.0 - h);
      switch (hp.design) {
        case HaltingDesign::learned_q:
          dx.noalias() -= 2.0 * hp.phi[t] * gscale *
                          (net.A.transpose() *
                           (hp.Q.transpose() * cache.qres[static_cast<std::size_t>(t)]));
          break;
        case HaltingDesign::no_q:
          dx.noalias() -=
              2.0 * hp.phi[t] * gscale *
              (net.A.transpose() * cache.residuals[static_cast<std::size_t>(t)]);
          break;
        case HaltingDesign::mlp2: {
          const MlpHead& head = hp.mlp[static_cast<std::size_t>(t)];
          const Matrix& pre = cache.hidden_pre[static_cast<std::size_t>(t)];
          Matrix dz = (head.w2 * gscale).array() * (pre.array() > 0.0).cast<double>();
          dx.noalias() -= net.A.transpose() * (head.W1.transpose() * dz);
          break;
        }
      }
    }
    deltas[static_cast<std::size_t>(t)] = dx.col(0);
    const Matrix& z = cache.preacts[static_cast<std::size_t>(t)];
    Matrix du = dx.array() * (z.array().abs() > net.thresholds[t]).cast<double>();
    if (net.kind == NetKind::lista_cpss) {
      for (auto i : cache.supports[static_cast<std::size_t>(t)][0]) du(i, 0) = dx(i, 0);
      dx = du - net.A.transpose() * (net.B(t).transpose() * du);
    } else {
      dx = net.W(t).transpose() * du;
    }
  }
  return deltas;
}

Eigen::Index ParamView::total_size() const {
  Eigen::Index total = 0;
  for (const auto& [ptr, len] : blocks) total += len;
  return total;
}

namespace {

void append_net_blocks(ParamView& view, std::vector<Matrix>& ws, std::vector<Matrix>& bs,
                       Vector& thresholds) {
  for (std::size_t i = 0; i < ws.size(); ++i)
    view.blocks.emplace_back(ws[i].data(), ws[i].size()),
        view.names.push_back("W[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < bs.size(); ++i)
    view.blocks.emplace_back(bs[i].data(), bs[i].size()),
        view.names.push_back("B[" + std::to_string(i) + "]");
  view.blocks.emplace_back(thresholds.data(), thresholds.size());
  view.names.push_back("thresholds");
}

void append_halting_blocks(ParamView& view, HaltingDesign design, Matrix& q, Vector& phi, Vector& psi,
                           std::vector<MlpHead>& mlp) {
  if (design == HaltingDesign::learned_q) {
    view.blocks.emplace_back(q.data(), q.size());
    view.names.push_back("Q");
  }
  view.blocks.emplace_back(phi.data(), phi.size());
  view.names.push_back("phi");
  view.blocks.emplace_back(psi.data(), psi.size());
  view.names.push_back("psi");
  if (design == HaltingDesign::mlp2) {
    for (std::size_t t = 0; t < mlp.size(); ++t) {
      const std::string prefix = "mlp[" + std::to_string(t) + "].";
      view.blocks.emplace_back(mlp[t].W1.data(), mlp[t].W1.size());
      view.names.push_back(prefix + "W1");
      view.blocks.emplace_back(mlp[t].b1.data(), mlp[t].b1.size());
      view.names.push_back(prefix + "b1");
      view.blocks.emplace_back(mlp[t].w2.data(), mlp[t].w2.size());
      view.names.push_back(prefix + "w2");
      view.blocks.emplace_back(&mlp[t].b2, 1);
      view.names.push_back(prefix + "b2");
    }
  }
}

}  // namespace

ParamView trainable_params(UnfoldedNet& net, HaltingParams& hp, ParamSelect select) {
  ParamView view;
  if (select != ParamSelect::halting_only)
    append_net_blocks(view, net.weights_W, net.weights_B, net.thresholds);
  if (select != ParamSelect::net_only)
    append_halting_blocks(view, hp.design, hp.Q, hp.phi, hp.psi, hp.mlp);
  return view;
}

ParamView gradient_blocks(Gradients& grads, const UnfoldedNet& net, const HaltingParams& hp,
                          ParamSelect select) {
  (void)net;
  ParamView view;
  if (select != ParamSelect::halting_only)
    append_net_blocks(view, grads.weights_W, grads.weights_B, grads.thresholds);
  if (select != ParamSelect::net_only)
    append_halting_blocks(view, hp.design, grads.Q, grads.phi, grads.psi, grads.mlp);
  return view;
}

void AdamState::step(const ParamView& params, const ParamView& grads, double lr) {
  if (params.blocks.size() != grads.blocks.size())
    throw DimensionError("AdamState::step: block count mismatch");
  if (m_.empty()) {
    m_.reserve(params.blocks.size());
    v_.reserve(params.blocks.size());
    for (const auto& [ptr, len] : params.blocks) {
      m_.push_back(Vector::Zero(len));
      v_.push_back(Vector::Zero(len));
    }
  }
  if (m_.size() != params.blocks.size())
    throw DimensionError("AdamState::step: state does not match parameter blocks");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto [p_ptr, p_len] = params.blocks[i];
    auto [g_ptr, g_len] = grads.blocks[i];
    if (p_len != g_len || m_[i].size() != p_len)
      throw DimensionError("AdamState::step: gradient shape mismatch on block " + params.names[i]);
    Eigen::Map<Eigen::ArrayXd> p(p_ptr, p_len);
    Eigen::Map<const Eigen::ArrayXd> grad(g_ptr, g_len);
    auto m = m_[i].array();
    auto v = v_[i].array();
    m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * grad.square();
    p -= lr * (m / bc1) / ((v / bc2).sqrt() + config_.epsilon);
  }
}

LrSchedule::LrSchedule(LrScheduleConfig config) : config_(std::move(config)) {
  if (config_.patience < 1) throw ParamError("LrSchedule: patience must be >= 1");
  if (!(config_.lr0 > 0.0)) throw ParamError("LrSchedule: lr0 must be positive");
  double prev = 1.0;
  for (double r : config_.ratios) {
    if (!(r > 0.0 && r < prev)) throw ParamError("LrSchedule: ratios must be strictly decreasing in (0,1)");
    prev = r;
  }
  best_loss_ = std::numeric_limits<double>::infinity();
}

double LrSchedule::lr() const {
  if (ratio_index_ < 0) return config_.lr0;
  return config_.lr0 * config_.ratios[static_cast<std::size_t>(ratio_index_)];
}

bool LrSchedule::update(double batch_loss) {
  if (finished_) return false;
  if (batch_loss < best_loss_) {
    best_loss_ = batch_loss;
    since_improvement_ = 0;
    return true;
  }
  if (++since_improvement_ >= config_.patience) {
    if (ratio_index_ + 1 < static_cast<int>(config_.ratios.size())) {
      ++ratio_index_;
      since_improvement_ = 0;
      best_loss_ = std::numeric_limits<double>::infinity();  // fresh tracking at the new lr
    } else {
      finished_ = true;
      return false;
    }
  }
  return true;
}

void TrainConfig::validate() const {
  if (tau < 0.0) throw ParamError("TrainConfig: tau must be >= 0");
  if (!(lr0 > 0.0) || !(pretrain_lr0 > 0.0)) throw ParamError("TrainConfig: learning rates must be positive");
  if (stage2_lr0 && !(*stage2_lr0 > 0.0)) throw ParamError("TrainConfig: stage2_lr0 must be positive");
  if (plateau_patience < 1) throw ParamError("TrainConfig: patience must be >= 1");
  if (stage1_batches < 0 || stage2_batches < 0 || pretrain_batches < 0)
    throw ParamError("TrainConfig: batch counts must be >= 0");
  double prev = 1.0;
  for (double r : lr_ratios) {
    if (!(r > 0.0 && r < prev)) throw ParamError("TrainConfig: lr ratios must be strictly decreasing in (0,1)");
    prev = r;
  }
  data.validate();
}

namespace {

void clamp_floor(Vector& v, double floor) {
  v = v.cwiseMax(floor);
}

struct StageRunner {
  const TrainConfig& config;
  UnfoldedNet& net;
  HaltingParams& hp;
  const BatchStream& data;
  std::vector<TrainHistoryRow>& history;
  int& global_batch;

  void run(TrainStage stage, ParamSelect select, double lr0, int n_batches,
           const std::optional<Matrix>& frozen_template) {
    if (n_batches == 0) return;
    ParamView params = trainable_params(net, hp, select);
    AdamState adam;
    LrSchedule schedule({lr0, config.plateau_patience, config.lr_ratios});
    BackwardOptions options;
    options.select = select;
    for (int b = 0; b < n_batches; ++b) {
      auto batch = data.batch(global_batch);
      auto [x_true, y] = batch_matrices(batch);
      if (frozen_template) {
        options.frozen_scores = Matrix(net.depth, y.cols());
        for (int t = 0; t < net.depth; ++t)
          options.frozen_scores->row(t).setConstant((*frozen_template)(t, 0));
      }
      BatchGradients bg = batch_gradients(net, hp, x_true, y, config.tau, options);
      Gradients& grads = bg.grads;
      ParamView gview = gradient_blocks(grads, net, hp, select);
      adam.step(params, gview, schedule.lr());
      if (select != ParamSelect::net_only) clamp_floor(hp.phi, 1e-6);
      if (select != ParamSelect::halting_only) clamp_floor(net.thresholds, 1e-6);
      history.push_back({global_batch, bg.loss, schedule.lr(), static_cast<int>(stage)});
      ++global_batch;
      if (!schedule.update(bg.loss)) break;
    }
  }
};

}  // namespace

std::vector<GradCheckRow> gradient_check(UnfoldedNet net, HaltingParams hp,
                                         const ProblemInstance& instance, double tau,
                                         double fd_step) {
  BatchGradients analytic = batch_gradients(net, hp, instance.x(), instance.y(), tau, {});
  ParamView params = trainable_params(net, hp, ParamSelect::all);
  ParamView grads = gradient_blocks(analytic.grads, net, hp, ParamSelect::all);

  auto eval_cost = [&net, &hp, &instance, tau]() {
    ScoredTrace st = score_trace(net, hp, instance.y());
    return cost(st.trace, st.scores, instance.x(), tau);
  };

  std::vector<GradCheckRow> rows;
  rows.reserve(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto [p_ptr, len] = params.blocks[i];
    auto [g_ptr, g_len] = grads.blocks[i];
    double max_abs_diff = 0.0, max_mag = 0.0;
    for (Eigen::Index k = 0; k < len; ++k) {
      const double original = p_ptr[k];
      p_ptr[k] = original + fd_step;
      double up = eval_cost();
      p_ptr[k] = original - fd_step;
      double down = eval_cost();
      p_ptr[k] = original;
      double fd = (up - down) / (2.0 * fd_step);
      max_abs_diff = std::max(max_abs_diff, std::abs(fd - g_ptr[k]));
      max_mag = std::max({max_mag, std::abs(fd), std::abs(g_ptr[k])});
    }
    (void)g_len;
    rows.push_back({params.names[i], max_abs_diff / std::max(max_mag, 1e-6)});
  }
  return rows;
}

bool has_threshold_kink(const UnfoldedNet& net, const HaltingParams& hp,
                        const ProblemInstance& instance, double tol) {
  const Vector& y = instance.y();
  Vector x = Vector::Zero(net.m());
  for (int t = 0; t < net.depth; ++t) {
    Vector z = net.kind == NetKind::lista ? Vector(net.W(t) * x + net.B(t) * y)
                                          : Vector(x + net.B(t) * (y - net.A * x));
    if (((z.array().abs() - net.thresholds[t]).abs() < tol).any()) return true;
    if (net.kind == NetKind::lista_cpss) {
      // selection boundary: the k-th and (k+1)-th magnitudes must be separated
      auto support = cpss_support(z, net.support_fractions[t]);
      if (support.size() < static_cast<std::size_t>(z.size())) {
        double kth = std::numeric_limits<double>::infinity();
        for (auto i : support) kth = std::min(kth, std::abs(z[i]));
        double next = 0.0;
        std::vector<bool> in_support(static_cast<std::size_t>(z.size()), false);
        for (auto i : support) in_support[static_cast<std::size_t>(i)] = true;
        for (Eigen::Index i = 0; i < z.size(); ++i)
          if (!in_support[static_cast<std::size_t>(i)]) next = std::max(next, std::abs(z[i]));
        if (kth - next < tol) return true;
      }
    }
    x = layer_step(net, t, x, y);
    if (hp.design == HaltingDesign::mlp2 && t < net.depth - 1) {
      Vector r = y - net.A * x;
      const MlpHead& head = hp.mlp[static_cast<std::size_t>(t)];
      if (((head.W1 * r + head.b1).array().abs() < tol).any()) return true;
    }
  }
  return false;
}

TrainResult train_fixed_depth(const TrainConfig& config, UnfoldedNet net, const HaltingParams& hp,
                              const BatchStream& data) {
  config.validate();
  net.validate();
  TrainResult result{std::move(net), hp, {}};
  int global_batch = 0;
  StageRunner runner{config, result.net, result.hp, data, result.history, global_batch};
  Matrix frozen(result.net.depth, 1);
  frozen.setOnes();
  frozen(result.net.depth - 1, 0) = hp.h_last;  // standard unfolded loss, last layer dominant
  runner.run(TrainStage::pretrain_fixed, ParamSelect::net_only, config.pretrain_lr0,
             config.pretrain_batches, frozen);
  return result;
}

TrainResult train_two_stage(const TrainConfig& config, UnfoldedNet net, HaltingParams hp,
                            const BatchStream& data) {
  config.validate();
  net.validate();
  hp.validate(net.n());
  TrainResult result{std::move(net), std::move(hp), {}};
  int global_batch = 0;
  StageRunner runner{config, result.net, result.hp, data, result.history, global_batch};
  runner.run(TrainStage::halting_only, ParamSelect::halting_only, config.lr0, config.stage1_batches,
             std::nullopt);
  runner.run(TrainStage::fine_tune_all, ParamSelect::all, config.stage2_lr0.value_or(config.lr0 * 0.1),
             config.stage2_batches, std::nullopt);
  return result;
}

}  // namespace adun
