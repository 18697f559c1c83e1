#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "featdec/featstore.hpp"
#include "featdec/scores.hpp"

namespace featdec {

/// P(s_in > s_out) + ½ P(s_in = s_out) via midranks.
double auroc(const ScoreVector& in_scores, const ScoreVector& out_scores);
double auroc(const VectorXd& in_scores, const VectorXd& out_scores);

NormStats score_stats(const ScoreVector& s);

/// (s - mean_train) / std_train with population statistics of `train`.
ScoreVector normalize_scores(const ScoreVector& s, const ScoreVector& train);

/// Elementwise ½ s_dis + ½ s_nondis.
ScoreVector combined_score(const ScoreVector& s_dis, const ScoreVector& s_nondis);
/// Same, after normalizing each input by its own training scores.
ScoreVector combined_score(const ScoreVector& s_dis, const ScoreVector& s_nondis, const ScoreVector& train_dis,
                           const ScoreVector& train_nondis);

struct KnnKlOptions {
  Eigen::Index k = 1;
  /// Replace zero neighbor distances by a 1e-12 relative jitter instead of
  /// raising ZeroDistance.
  bool jitter_duplicates = true;
  bool clamp_at_zero = false;
};

struct KnnKlInfo {
  std::size_t zero_distances = 0;
};

/// k-NN estimate of KL(p || q) from samples (rows of `p` and `q`):
///   (dim / n) Σ log(ν_k(i) / ρ_k(i)) + log(m / (n - 1)).
double knn_kl(const MatrixXd& p, const MatrixXd& q, const KnnKlOptions& opts = {}, KnnKlInfo* info = nullptr);
double knn_kl(const VectorXd& p, const VectorXd& q, const KnnKlOptions& opts = {}, KnnKlInfo* info = nullptr);
double knn_kl(const ScoreVector& p, const ScoreVector& q, const KnnKlOptions& opts = {}, KnnKlInfo* info = nullptr);

struct DistanceReport {
  double d_dis = 0;
  double d_nondis = 0;
  Eigen::Index k = 1;
  Eigen::Index n = 0;  // in-distribution sample count
  Eigen::Index m = 0;  // OoD sample count
  std::size_t zero_distances = 0;
};

/// KL distance between in- and out-distribution score samples on each
/// feature type, after normalizing both by that feature's training scores.
DistanceReport dataset_distance(const ScoreVector& train_dis, const ScoreVector& in_dis, const ScoreVector& out_dis,
                                const ScoreVector& train_nondis, const ScoreVector& in_nondis,
                                const ScoreVector& out_nondis, const KnnKlOptions& opts = {});

struct FeatureScores {
  ScoreVector train;
  ScoreVector in;
  ScoreVector out;
};

struct ClasswiseRow {
  std::int32_t label = 0;
  Eigen::Index count = 0;
  double dis_auroc = 0;
  double nondis_auroc = 0;
  double d_dis = 0;
  double d_nondis = 0;
  double mean_dis = 0;     // mean normalized dis score of the class
  double mean_nondis = 0;  // mean normalized non-dis score of the class
};

/// One row per distinct OoD label; `out_labels` aligns with `dis.out` and
/// `nondis.out`. Unlabeled (-1) OoD samples are skipped.
std::vector<ClasswiseRow> classwise_report(const FeatureScores& dis, const FeatureScores& nondis,
                                           const std::vector<std::int32_t>& out_labels,
                                           const KnnKlOptions& opts = {});

struct Histogram {
  VectorXd edges;  // bins + 1 uniform edges
  std::vector<Eigen::Index> counts;
};

/// Uniform bins over `range` (default: min..max of the values). Values on the
/// upper edge, or outside an explicit range, are counted in the nearest end
/// bin so the counts always sum to the sample count.
Histogram histogram(const ScoreVector& s, Eigen::Index bins, std::optional<std::pair<double, double>> range = {});

}  // namespace featdec
