#include "featdec/decomp.hpp"

namespace featdec {

PcaTransform pca_fit(const FeatureSet& train, Eigen::Index d) {
  if (d <= 0 || d >= train.d()) {
    throw Error(ErrorCode::BadSplit, "pca split " + std::to_string(d) + " outside (0, " + std::to_string(train.d()) + ")");
  }
  if (train.n() < 2) throw Error(ErrorCode::InvalidArgument, "pca_fit needs at least two samples");
  PcaTransform t;
  t.mean = train.features.colwise().mean().transpose();
  const MatrixXd centered = train.features.rowwise() - t.mean.transpose();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(train.n());
  cov = 0.5 * (cov + cov.transpose());
  SymEigen<double> eig;
  try {
    eig = sym_eigen(cov);
  } catch (const Error& e) {
    throw Error(ErrorCode::EigenFailure, std::string("pca_fit: ") + e.what());
  }
  t.components = std::move(eig.vectors);
  t.variances = std::move(eig.values);
  t.split = d;
  return t;
}

MatrixXd pca_project(const PcaTransform& t, const MatrixXd& features) {
  if (features.cols() != t.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "pca: feature dim " + std::to_string(features.cols()) +
                                                  " != transform dim " + std::to_string(t.dim()));
  }
  return (features.rowwise() - t.mean.transpose()) * t.components;
}

MatrixXd pca_reconstruct(const PcaTransform& t, const MatrixXd& coords) {
  if (coords.cols() != t.dim()) throw Error(ErrorCode::DimensionMismatch, "pca: coordinate dim mismatch");
  return (coords * t.components.transpose()).rowwise() + t.mean.transpose();
}

SplitPair pca_apply(const PcaTransform& t, const FeatureSet& fs) {
  return split_dims(FeatureSet(pca_project(t, fs.features), fs.labels, fs.classes), t.split);
}

}  // namespace featdec
