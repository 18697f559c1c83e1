#pragma once

#include <optional>
#include <string>

#include "featdec/numkit.hpp"

namespace featdec {

/// Mean and standard deviation of the training scores a vector was
/// normalized against.
struct NormStats {
  double mean = 0;
  double stddev = 1;
};

/// Per-sample OoD scores. Every scorer in this library orients its output
/// so that higher means more in-distribution.
struct ScoreVector {
  VectorXd values;
  bool higher_is_inlier = true;
  std::optional<NormStats> stats;
  /// Producer tag, e.g. "shared_maha", "marginal", "relative", "combined".
  std::string source;

  ScoreVector() = default;
  explicit ScoreVector(VectorXd v, std::string src = {}, bool higher = true)
      : values(std::move(v)), higher_is_inlier(higher), source(std::move(src)) {}

  Eigen::Index size() const { return values.size(); }
};

}  // namespace featdec
