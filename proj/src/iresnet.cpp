#include <algorithm>
#include <cmath>

#include "featdec/decomp.hpp"

namespace featdec {

IResNet IResNet::identity(Eigen::Index dim, std::size_t layers, double kappa) {
  IResNet net;
  net.dim = dim;
  net.kappa = kappa;
  for (std::size_t t = 0; t < layers; ++t) {
    ResidualLayer layer;
    layer.weight = MatrixXd::Zero(dim, dim);
    layer.bias = VectorXd::Zero(dim);
    net.layers.push_back(std::move(layer));
  }
  net.refresh_spectral();
  return net;
}

IResNet IResNet::random(Eigen::Index dim, std::size_t layers, double kappa, double init_scale, Rng& rng) {
  IResNet net = identity(dim, layers, kappa);
  for (auto& layer : net.layers)
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) layer.weight(i, j) = rng.uniform(-init_scale, init_scale);
  net.refresh_spectral(1000, 1e-14);
  // Clamp the stored weights so the initial net already satisfies the bound.
  for (auto& layer : net.layers) {
    layer.weight *= layer.scale;
    layer.power.sigma *= layer.scale;
    layer.scale = 1;
  }
  return net;
}

void IResNet::refresh_spectral(int max_iters, double tol) {
  for (auto& layer : layers) {
    const double sigma = power_iterate(layer.weight, layer.power, max_iters, tol);
    layer.scale = sigma > kappa ? kappa / sigma : 1.0;
  }
}

namespace {

void check_dim(const IResNet& net, Eigen::Index d) {
  if (d != net.dim) {
    throw Error(ErrorCode::DimensionMismatch, "iresnet: input dim " + std::to_string(d) + " != net dim " +
                                                  std::to_string(net.dim));
  }
}

// Columns are samples.
MatrixXd forward_cols(const IResNet& net, MatrixXd h) {
  for (const auto& layer : net.layers) {
    MatrixXd residual = layer.scale * (layer.weight * h);
    residual.colwise() += layer.bias;
    h += residual;
  }
  return h;
}

MatrixXd inverse_cols(const IResNet& net, MatrixXd y, int max_iters, double tol) {
  for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) {
    const MatrixXd w = it->effective();
    MatrixXd target = y.colwise() - it->bias;
    MatrixXd x = target;
    bool converged = false;
    for (int k = 0; k < max_iters; ++k) {
      MatrixXd next = target - w * x;
      const double step = (next - x).cwiseAbs().maxCoeff();
      x = std::move(next);
      if (!std::isfinite(step)) break;
      if (step < tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw Error(ErrorCode::NoConvergence, "iresnet_inverse: fixed-point iteration did not converge in " +
                                                std::to_string(max_iters) + " steps");
    }
    y = std::move(x);
  }
  return y;
}

}  // namespace

VectorXd iresnet_forward(const IResNet& net, const VectorXd& z) {
  check_dim(net, z.size());
  return forward_cols(net, z);
}

MatrixXd iresnet_forward(const IResNet& net, const MatrixXd& z) {
  check_dim(net, z.cols());
  return forward_cols(net, z.transpose()).transpose();
}

VectorXd iresnet_inverse(const IResNet& net, const VectorXd& y, int max_iters, double tol) {
  check_dim(net, y.size());
  return inverse_cols(net, y, max_iters, tol);
}

MatrixXd iresnet_inverse(const IResNet& net, const MatrixXd& y, int max_iters, double tol) {
  check_dim(net, y.cols());
  return inverse_cols(net, y.transpose(), max_iters, tol).transpose();
}

}  // namespace featdec
