#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "featdec/featstore.hpp"
#include "featdec/numkit.hpp"

namespace featdec::testing {

inline MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline VectorXd random_vector(Rng& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

/// BᵀB + I for a random square B.
inline MatrixXd random_spd(Rng& rng, Eigen::Index n) {
  const MatrixXd b = random_matrix(rng, n, n);
  return b.transpose() * b + MatrixXd::Identity(n, n);
}

/// Labeled Gaussian blobs with class c centred at `sep`·e_(c mod d).
inline FeatureSet blobs(Rng& rng, Eigen::Index per_class, std::int32_t classes, Eigen::Index d, double sep = 3.0) {
  MatrixXd f = random_matrix(rng, per_class * classes, d);
  std::vector<std::int32_t> labels;
  for (std::int32_t c = 0; c < classes; ++c) {
    for (Eigen::Index i = 0; i < per_class; ++i) {
      f(c * per_class + i, c % d) += sep;
      labels.push_back(c);
    }
  }
  return FeatureSet(std::move(f), std::move(labels), classes);
}

inline double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace featdec::testing
