#include <algorithm>
#include <cmath>
#include <limits>

#include "featdec/decomp.hpp"

namespace featdec {

namespace {

// Column-wise log-softmax of a C × B logit matrix.
MatrixXd log_softmax_cols(const MatrixXd& logits) {
  MatrixXd out = logits.rowwise() - logits.colwise().maxCoeff();
  const Eigen::RowVectorXd lse = out.array().exp().colwise().sum().log().matrix();
  out.rowwise() -= lse;
  return out;
}

MatrixXd one_hot(const std::vector<std::int32_t>& labels, Eigen::Index classes) {
  MatrixXd y = MatrixXd::Zero(classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y(labels[i], static_cast<Eigen::Index>(i)) = 1;
  return y;
}

double true_class_mean(const MatrixXd& log_probs, const std::vector<std::int32_t>& labels) {
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += log_probs(labels[i], static_cast<Eigen::Index>(i));
  return total / static_cast<double>(labels.size());
}

double column_accuracy(const MatrixXd& logits, const std::vector<std::int32_t>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index arg = 0;
    logits.col(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (arg == labels[i]) ++hits;
  }
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

void check_labels(const std::vector<std::int32_t>& labels, std::int32_t classes) {
  for (auto l : labels) {
    if (l < 0 || l >= classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Activations h_0 .. h_L, columns are samples.
std::vector<MatrixXd> forward_trace(const IResNet& net, const MatrixXd& x) {
  std::vector<MatrixXd> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(x);
  for (const auto& layer : net.layers) {
    MatrixXd next = acts.back() + layer.scale * (layer.weight * acts.back());
    next.colwise() += layer.bias;
    acts.push_back(std::move(next));
  }
  return acts;
}

MatrixXd forward_only(const IResNet& net, MatrixXd h) {
  for (const auto& layer : net.layers) {
    MatrixXd r = layer.scale * (layer.weight * h);
    r.colwise() += layer.bias;
    h += r;
  }
  return h;
}

struct ProbeStep {
  double loss_phi = 0;
  double accuracy = 0;
  MatrixXd grad_weight;
  VectorXd grad_bias;
  MatrixXd dterm2_dq;  // d term2 / d probe logits
};

ProbeStep probe_objective(const IceModel& model, const MatrixXd& zn, const std::vector<std::int32_t>& labels) {
  const auto b = static_cast<double>(labels.size());
  MatrixXd q = model.probe_weight * zn;
  q.colwise() += model.probe_bias;
  const MatrixXd ls = log_softmax_cols(q);
  ProbeStep out;
  out.loss_phi = -true_class_mean(ls, labels);
  out.accuracy = column_accuracy(q, labels);
  out.dterm2_dq = (one_hot(labels, model.classes) - ls.array().exp().matrix()) / b;
  out.grad_weight = -out.dterm2_dq * zn.transpose();
  out.grad_bias = -out.dterm2_dq.rowwise().sum();
  return out;
}

std::vector<std::int32_t> gather(const FeatureSet& fs, const std::vector<Eigen::Index>& rows, MatrixXd& cols) {
  cols.resize(fs.d(), static_cast<Eigen::Index>(rows.size()));
  std::vector<std::int32_t> labels(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    cols.col(static_cast<Eigen::Index>(j)) = fs.features.row(rows[j]).transpose();
    labels[j] = fs.labels[static_cast<std::size_t>(rows[j])];
  }
  return labels;
}

std::vector<Eigen::Index> draw(Rng& rng, Eigen::Index n, Eigen::Index count) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(count));
  for (auto& r : rows) r = static_cast<Eigen::Index>(rng.uniform_int(0, n - 1));
  return rows;
}

IceModel init_model(Eigen::Index dim, std::int32_t classes, const TrainConfig& cfg, Rng& rng) {
  if (classes < 1 || dim <= classes) {
    throw Error(ErrorCode::InvalidArgument, "iCE needs feature dim " + std::to_string(dim) + " > classes " +
                                                std::to_string(classes));
  }
  IceModel model;
  model.classes = classes;
  const double scale = cfg.init_scale > 0 ? cfg.init_scale : 1.0 / static_cast<double>(dim);
  model.net = IResNet::random(dim, cfg.layers, cfg.kappa, scale, rng);
  const Eigen::Index rest = dim - classes;
  const double probe_scale = 1.0 / std::sqrt(static_cast<double>(rest));
  model.probe_weight.resize(classes, rest);
  for (Eigen::Index j = 0; j < rest; ++j)
    for (Eigen::Index i = 0; i < classes; ++i) model.probe_weight(i, j) = rng.uniform(-probe_scale, probe_scale);
  model.probe_bias = VectorXd::Zero(classes);
  return model;
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_theta <= 0 || lr_phi <= 0 || batch <= 0 || probe_batch <= 0 || probe_steps == 0 || layers == 0 ||
      kappa <= 0 || log_every == 0 || init_scale < 0) {
    throw Error(ErrorCode::InvalidArgument, "iCE training config values must be positive");
  }
}

IceModel ice_init(Eigen::Index dim, std::int32_t classes, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  return init_model(dim, classes, cfg, rng);
}

IceLoss ice_loss_and_grads(const IceModel& model, const FeatureSet& batch) {
  if (batch.d() != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "ice: batch dim " + std::to_string(batch.d()) + " != model dim " +
                                                  std::to_string(model.dim()));
  }
  if (batch.n() == 0) throw Error(ErrorCode::EmptyInput, "ice: empty batch");
  check_labels(batch.labels, model.classes);

  const Eigen::Index c = model.classes;
  const Eigen::Index rest = model.dim() - c;
  const auto b = static_cast<double>(batch.n());
  const auto acts = forward_trace(model.net, batch.features.transpose());
  const MatrixXd& out = acts.back();
  const MatrixXd logits = out.topRows(c);
  const MatrixXd zn = out.bottomRows(rest);

  IceLoss loss;
  const MatrixXd ls = log_softmax_cols(logits);
  loss.term1 = -true_class_mean(ls, batch.labels);
  loss.head_accuracy = column_accuracy(logits, batch.labels);

  ProbeStep probe = probe_objective(model, zn, batch.labels);
  loss.term2 = -probe.loss_phi;
  loss.loss_phi = probe.loss_phi;
  loss.loss_theta = loss.term1 + loss.term2;
  loss.probe_accuracy = probe.accuracy;
  loss.grads_phi.probe_weight = std::move(probe.grad_weight);
  loss.grads_phi.probe_bias = std::move(probe.grad_bias);

  // d loss_theta / d h_L
  MatrixXd g(model.dim(), batch.n());
  g.topRows(c) = (ls.array().exp().matrix() - one_hot(batch.labels, c)) / b;
  g.bottomRows(rest) = model.probe_weight.transpose() * probe.dterm2_dq;

  const auto layers = model.net.layers.size();
  loss.grads_theta.weight.resize(layers);
  loss.grads_theta.bias.resize(layers);
  for (std::size_t t = layers; t-- > 0;) {
    const auto& layer = model.net.layers[t];
    loss.grads_theta.weight[t] = layer.scale * (g * acts[t].transpose());
    loss.grads_theta.bias[t] = g.rowwise().sum();
    g += layer.scale * (layer.weight.transpose() * g);
  }
  return loss;
}

IceFit ice_fit(const FeatureSet& train, const TrainConfig& cfg, const IceObserver& observer) {
  cfg.validate();
  train.validate();
  if (!train.labeled()) throw Error(ErrorCode::InvalidArgument, "ice_fit needs a labeled training set");
  if (train.n() == 0) throw Error(ErrorCode::EmptyInput, "ice_fit: empty training set");
  check_labels(train.labels, train.classes);

  Rng init_rng(cfg.seed);
  IceFit fit;
  fit.model = init_model(train.d(), train.classes, cfg, init_rng);
  IceModel& model = fit.model;
  const Eigen::Index c = model.classes;
  const Eigen::Index rest = model.dim() - c;

  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  MatrixXd cols;
  FeatureSet batch;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    for (std::size_t s = 0; s < cfg.probe_steps; ++s) {
      const auto labels = gather(train, draw(rng, train.n(), cfg.probe_batch), cols);
      const MatrixXd zn = forward_only(model.net, cols).bottomRows(rest);
      const ProbeStep step = probe_objective(model, zn, labels);
      if (!std::isfinite(step.loss_phi)) throw Error(ErrorCode::Divergence, "probe loss is not finite at iteration " + std::to_string(it));
      model.probe_weight -= cfg.lr_phi * step.grad_weight;
      model.probe_bias -= cfg.lr_phi * step.grad_bias;
    }

    const auto labels = gather(train, draw(rng, train.n(), cfg.batch), cols);
    batch.features = cols.transpose();
    batch.labels = labels;
    batch.classes = train.classes;
    const IceLoss loss = ice_loss_and_grads(model, batch);
    if (!std::isfinite(loss.loss_theta) || !std::isfinite(loss.loss_phi)) {
      throw Error(ErrorCode::Divergence, "iCE loss is not finite at iteration " + std::to_string(it));
    }
    for (std::size_t t = 0; t < model.net.layers.size(); ++t) {
      model.net.layers[t].weight -= cfg.lr_theta * loss.grads_theta.weight[t];
      model.net.layers[t].bias -= cfg.lr_theta * loss.grads_theta.bias[t];
    }
    model.net.refresh_spectral();

    if (it % cfg.log_every == 0 || it == cfg.iterations) {
      TrainLogEntry entry;
      entry.iteration = it;
      entry.term1 = loss.term1;
      entry.term2 = loss.term2;
      entry.loss_theta = loss.loss_theta;
      entry.loss_phi = loss.loss_phi;
      entry.head_accuracy = loss.head_accuracy;
      entry.probe_accuracy = loss.probe_accuracy;
      for (const auto& layer : model.net.layers)
        entry.max_sigma = std::max(entry.max_sigma, layer.scale * layer.power.sigma);
      fit.log.push_back(entry);
      if (observer) observer(it, model);
    }
  }
  return fit;
}

SplitPair ice_apply(const IceModel& model, const FeatureSet& fs) {
  FeatureSet mapped(iresnet_forward(model.net, fs.features), fs.labels, fs.classes);
  return split_dims(mapped, model.split());
}

// ---------------------------------------------------------------------------

double argmax_accuracy(const MatrixXd& logits, const std::vector<std::int32_t>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw Error(ErrorCode::LengthMismatch, "argmax_accuracy: label count != row count");
  }
  return column_accuracy(logits.transpose(), labels);
}

LinearProbe fit_linear_probe(const FeatureSet& train, const ProbeConfig& cfg) {
  if (!train.labeled()) throw Error(ErrorCode::InvalidArgument, "fit_linear_probe needs labels");
  check_labels(train.labels, train.classes);
  const Eigen::Index d = train.d();
  const Eigen::Index c = train.classes;
  const auto n = static_cast<double>(train.n());

  LinearProbe probe;
  probe.mean = train.features.colwise().mean().transpose();
  const MatrixXd centered = train.features.rowwise() - probe.mean.transpose();
  const VectorXd stddev = (centered.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  probe.inv_std = stddev.unaryExpr([](double s) { return s > 1e-12 ? 1.0 / s : 0.0; });
  const MatrixXd x = (centered * probe.inv_std.asDiagonal()).transpose();  // d × n
  const MatrixXd y = one_hot(train.labels, c);

  // Step size from the curvature bound ½ λmax([x; 1][x; 1]ᵀ / n) + l2.
  MatrixXd gram(d + 1, d + 1);
  gram.topLeftCorner(d, d) = x * x.transpose() / n;
  gram.topRightCorner(d, 1) = x.rowwise().mean();
  gram.bottomLeftCorner(1, d) = gram.topRightCorner(d, 1).transpose();
  gram(d, d) = 1;
  const double lipschitz = 0.5 * spectral_norm(gram) + cfg.l2;
  const double lr = std::min(cfg.lr, 1.0 / lipschitz);

  MatrixXd w = MatrixXd::Zero(c, d), w_prev = w;
  VectorXd bias = VectorXd::Zero(c), bias_prev = bias;
  for (std::size_t k = 1; k <= cfg.iterations; ++k) {
    const double mom = static_cast<double>(k - 1) / static_cast<double>(k + 2);
    const MatrixXd w_look = w + mom * (w - w_prev);
    const VectorXd b_look = bias + mom * (bias - bias_prev);
    MatrixXd logits = w_look * x;
    logits.colwise() += b_look;
    const MatrixXd resid = (log_softmax_cols(logits).array().exp().matrix() - y) / n;
    w_prev = w;
    bias_prev = bias;
    w = w_look - lr * (resid * x.transpose() + cfg.l2 * w_look);
    bias = b_look - lr * resid.rowwise().sum();
  }
  probe.weight = std::move(w);
  probe.bias = std::move(bias);
  return probe;
}

std::vector<std::int32_t> probe_predict(const LinearProbe& probe, const MatrixXd& features) {
  if (features.cols() != probe.mean.size()) throw Error(ErrorCode::DimensionMismatch, "probe: feature dim mismatch");
  MatrixXd logits = probe.weight * ((features.rowwise() - probe.mean.transpose()) * probe.inv_std.asDiagonal()).transpose();
  logits.colwise() += probe.bias;
  std::vector<std::int32_t> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index arg = 0;
    logits.col(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(arg);
  }
  return out;
}

double probe_accuracy(const LinearProbe& probe, const FeatureSet& fs) {
  const auto pred = probe_predict(probe, fs.features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == fs.labels[i];
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace featdec
