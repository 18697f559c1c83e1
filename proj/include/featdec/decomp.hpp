#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "featdec/featstore.hpp"

namespace featdec {

// ---------------------------------------------------------------------------
// PCA

struct PcaTransform {
  VectorXd mean;
  MatrixXd components;  // columns, descending variance
  VectorXd variances;   // eigenvalues matching `components`
  Eigen::Index split = 0;

  Eigen::Index dim() const { return mean.size(); }
};

PcaTransform pca_fit(const FeatureSet& train, Eigen::Index d);

/// Coordinates of every centered sample in the component basis (n × D).
MatrixXd pca_project(const PcaTransform& t, const MatrixXd& features);
/// Inverse of pca_project.
MatrixXd pca_reconstruct(const PcaTransform& t, const MatrixXd& coords);

/// Projection split at t.split into (z_d, z_n); labels preserved.
SplitPair pca_apply(const PcaTransform& t, const FeatureSet& fs);

// ---------------------------------------------------------------------------
// Invertible residual network with linear residual blocks
//   h ← h + Ŵ h + b,   Ŵ = W · min(1, κ / σ(W)).

struct ResidualLayer {
  MatrixXd weight;
  VectorXd bias;
  PowerState<double> power;  // cached power-iteration vectors
  double scale = 1;          // min(1, κ / σ̂), refreshed by refresh_spectral

  MatrixXd effective() const { return scale * weight; }
};

struct IResNet {
  std::vector<ResidualLayer> layers;
  double kappa = 0.9;
  Eigen::Index dim = 0;

  /// Net whose layers are all zero, i.e. the identity map.
  static IResNet identity(Eigen::Index dim, std::size_t layers, double kappa = 0.9);

  /// W ~ uniform(±init_scale), b = 0, then spectrally clamped.
  static IResNet random(Eigen::Index dim, std::size_t layers, double kappa, double init_scale, Rng& rng);

  /// Warm-started power iteration on every layer followed by a scale update.
  void refresh_spectral(int max_iters = 200, double tol = 1e-13);
};

VectorXd iresnet_forward(const IResNet& net, const VectorXd& z);
/// Row-wise forward over an n × D matrix.
MatrixXd iresnet_forward(const IResNet& net, const MatrixXd& z);

/// Layer-by-layer fixed-point inversion. Throws NoConvergence when a layer
/// does not settle below `tol` (max-norm step) within `max_iters`.
VectorXd iresnet_inverse(const IResNet& net, const VectorXd& y, int max_iters = 500, double tol = 1e-10);
MatrixXd iresnet_inverse(const IResNet& net, const MatrixXd& y, int max_iters = 500, double tol = 1e-10);

// ---------------------------------------------------------------------------
// iCE decomposition

/// Invertible net plus the adversarial linear probe reading the last D - C
/// coordinates. The first C coordinates of the net output are class logits.
struct IceModel {
  IResNet net;
  MatrixXd probe_weight;  // C × (D - C)
  VectorXd probe_bias;    // C
  std::int32_t classes = 0;

  Eigen::Index dim() const { return net.dim; }
  Eigen::Index split() const { return classes; }
};

struct TrainConfig {
  std::size_t iterations = 3000;
  double lr_theta = 0.01;
  double lr_phi = 0.5;
  Eigen::Index batch = 128;
  Eigen::Index probe_batch = 512;
  std::size_t probe_steps = 5;
  std::uint64_t seed = 0;
  std::size_t layers = 4;
  double kappa = 0.9;
  double init_scale = 0;  // 0 selects 1/D
  std::size_t log_every = 100;

  void validate() const;
};

struct IceGradients {
  std::vector<MatrixXd> weight;  // d loss / d W_t (raw weights, σ held fixed)
  std::vector<VectorXd> bias;
  MatrixXd probe_weight;
  VectorXd probe_bias;
};

struct IceLoss {
  double term1 = 0;  // mean cross-entropy of the discriminative logits
  double term2 = 0;  // mean true-class log-likelihood under the probe (<= 0)
  double loss_theta = 0;  // term1 + term2
  double loss_phi = 0;    // -term2
  IceGradients grads_theta;  // net gradients of loss_theta (probe fields empty)
  IceGradients grads_phi;    // probe gradients of loss_phi (net fields empty)
  double head_accuracy = 0;
  double probe_accuracy = 0;
};

IceModel ice_init(Eigen::Index dim, std::int32_t classes, const TrainConfig& cfg);

IceLoss ice_loss_and_grads(const IceModel& model, const FeatureSet& batch);

struct TrainLogEntry {
  std::size_t iteration = 0;
  double term1 = 0;
  double term2 = 0;
  double loss_theta = 0;
  double loss_phi = 0;
  double head_accuracy = 0;
  double probe_accuracy = 0;
  double max_sigma = 0;  // largest estimated effective layer norm
};

struct IceFit {
  IceModel model;
  std::vector<TrainLogEntry> log;
};

/// Called after each logged iteration with the current model.
using IceObserver = std::function<void(std::size_t iteration, const IceModel&)>;

/// Alternating SGD: `probe_steps` probe updates, then one net update, per
/// iteration. Throws Divergence on a non-finite loss.
IceFit ice_fit(const FeatureSet& train, const TrainConfig& cfg, const IceObserver& observer = {});

SplitPair ice_apply(const IceModel& model, const FeatureSet& fs);

// ---------------------------------------------------------------------------
// Linear probes used to audit a decomposition.

struct LinearProbe {
  VectorXd mean;
  VectorXd inv_std;
  MatrixXd weight;  // C × d
  VectorXd bias;
};

struct ProbeConfig {
  std::size_t iterations = 500;
  double lr = 0.5;
  double l2 = 1e-4;
};

/// Multinomial logistic regression on standardized features, trained by
/// full-batch Nesterov gradient descent.
LinearProbe fit_linear_probe(const FeatureSet& train, const ProbeConfig& cfg = {});
std::vector<std::int32_t> probe_predict(const LinearProbe& probe, const MatrixXd& features);
double probe_accuracy(const LinearProbe& probe, const FeatureSet& fs);

/// Accuracy of argmax over the given logits against the labels.
double argmax_accuracy(const MatrixXd& logits, const std::vector<std::int32_t>& labels);

}  // namespace featdec
