#pragma once

// Dense linear algebra and seeded sampling shared by every other module.
// Everything here is templated on the scalar type; the rest of the library
// uses the double instantiation.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "featdec/error.hpp"

namespace featdec {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// Cholesky factor L of a symmetric positive-definite matrix, A = L Lᵀ.
template <typename Scalar>
struct SpdFactor {
  Mat<Scalar> lower;
  Scalar log_det{0};

  Eigen::Index dim() const { return lower.rows(); }

  Mat<Scalar> reconstruct() const { return lower * lower.transpose(); }
};

/// Seeded 64-bit generator. Not thread-safe; give each worker its own.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in [lo, hi], both ends inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, static_cast<double>(m.cwiseAbs().maxCoeff()));
  return static_cast<double>((m - m.transpose()).cwiseAbs().maxCoeff()) <= tol * scale;
}

template <typename Derived>
SpdFactor<typename Derived::Scalar> cholesky_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "cholesky_spd: matrix is not square");
  }
  if (!is_symmetric(m)) {
    throw Error(ErrorCode::NotPositiveDefinite, "cholesky_spd: matrix is not symmetric");
  }
  Eigen::LLT<Mat<Scalar>> llt(m.derived());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "cholesky_spd: non-positive pivot");
  }
  SpdFactor<Scalar> f;
  f.lower = llt.matrixL();
  const auto diag = f.lower.diagonal();
  if ((diag.array() <= Scalar(0)).any() || !diag.allFinite()) {
    throw Error(ErrorCode::NotPositiveDefinite, "cholesky_spd: non-positive pivot");
  }
  f.log_det = Scalar(2) * diag.array().log().sum();
  return f;
}

/// Solves (L Lᵀ) x = v.
template <typename Scalar, typename Derived>
Vec<Scalar> solve_spd(const SpdFactor<Scalar>& f, const Eigen::MatrixBase<Derived>& v) {
  if (v.size() != f.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "solve_spd: vector length " + std::to_string(v.size()) +
                                                  " != factor dim " + std::to_string(f.dim()));
  }
  Vec<Scalar> x = f.lower.template triangularView<Eigen::Lower>().solve(v);
  f.lower.transpose().template triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

/// Squared Mahalanobis norm zᵀ(L Lᵀ)⁻¹z for every column of `centered`.
template <typename Scalar, typename Derived>
Vec<Scalar> quadratic_forms(const SpdFactor<Scalar>& f, const Eigen::MatrixBase<Derived>& centered) {
  if (centered.rows() != f.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "quadratic_forms: row count != factor dim");
  }
  Mat<Scalar> w = f.lower.template triangularView<Eigen::Lower>().solve(centered);
  return w.colwise().squaredNorm().transpose();
}

template <typename Scalar>
struct SymEigen {
  Vec<Scalar> values;   // descending
  Mat<Scalar> vectors;  // columns, matching `values`
};

template <typename Derived>
SymEigen<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "sym_eigen: matrix is not square");
  }
  if (!is_symmetric(m)) {
    throw Error(ErrorCode::InvalidArgument, "sym_eigen: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(m.derived());
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "sym_eigen: QL iteration did not converge");
  }
  // The solver returns ascending order.
  SymEigen<Scalar> out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Power-iteration state for the largest singular value of a matrix.
template <typename Scalar>
struct PowerState {
  Vec<Scalar> u;  // left vector (rows)
  Vec<Scalar> v;  // right vector (cols)
  Scalar sigma{0};
};

/// Runs at most `iters` power iterations on WᵀW starting from `state.u`,
/// stopping once the estimate changes by less than `tol` relative.
/// An empty or mismatched `state.u` is reseeded deterministically.
template <typename Scalar, typename Derived>
Scalar power_iterate(const Eigen::MatrixBase<Derived>& w, PowerState<Scalar>& state, int iters,
                     Scalar tol) {
  if (state.u.size() != w.rows()) {
    state.u = Vec<Scalar>::Ones(w.rows()) / std::sqrt(Scalar(w.rows()));
    // Break the symmetry of an all-ones start in case it is orthogonal to
    // the leading singular vector.
    for (Eigen::Index i = 0; i < state.u.size(); ++i) state.u(i) += Scalar(1e-3) * Scalar(i % 7);
    state.u.normalize();
  }
  Scalar previous = -1;
  for (int it = 0; it < iters; ++it) {
    Vec<Scalar> v = w.transpose() * state.u;
    const Scalar vnorm = v.norm();
    if (vnorm == Scalar(0)) {
      state.v = Vec<Scalar>::Zero(w.cols());
      state.sigma = 0;
      return 0;
    }
    v /= vnorm;
    Vec<Scalar> u = w * v;
    const Scalar sigma = u.norm();
    if (sigma == Scalar(0)) {
      state.sigma = 0;
      return 0;
    }
    state.u = u / sigma;
    state.v = std::move(v);
    state.sigma = sigma;
    if (previous >= Scalar(0) && std::abs(sigma - previous) <= tol * sigma) break;
    previous = sigma;
  }
  return state.sigma;
}

/// Largest singular value by power iteration. A zero matrix gives 0.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& w, int iters = 1000,
                                       typename Derived::Scalar tol = 1e-12) {
  using Scalar = typename Derived::Scalar;
  if (w.size() == 0) {
    throw Error(ErrorCode::InvalidArgument, "spectral_norm: empty matrix");
  }
  if (iters < 1) {
    throw Error(ErrorCode::InvalidArgument, "spectral_norm: iters must be >= 1");
  }
  PowerState<Scalar> state;
  return power_iterate(w, state, iters, tol);
}

/// n rows drawn from N(mean, L Lᵀ) via x = mean + L ε.
template <typename Scalar, typename Derived>
Mat<Scalar> gaussian_sample(Rng& rng, const Eigen::MatrixBase<Derived>& mean, const SpdFactor<Scalar>& cov,
                            Eigen::Index n) {
  if (mean.size() != cov.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "gaussian_sample: mean length != covariance dim");
  }
  const Eigen::Index d = cov.dim();
  Mat<Scalar> eps(d, n);
  // Column-major fill: one sample per column, generated sample by sample.
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) eps(i, j) = static_cast<Scalar>(rng.normal());
  Mat<Scalar> x = cov.lower.template triangularView<Eigen::Lower>() * eps;
  x.colwise() += mean.derived().template cast<Scalar>();
  return x.transpose();
}

/// Factor of s·I, used by the synthetic generators.
template <typename Scalar>
SpdFactor<Scalar> scaled_identity_factor(Eigen::Index dim, Scalar variance) {
  SpdFactor<Scalar> f;
  f.lower = Mat<Scalar>::Identity(dim, dim) * std::sqrt(variance);
  f.log_det = Scalar(dim) * std::log(variance);
  return f;
}

}  // namespace featdec
