#include "featdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "featdec/parallel.hpp"

namespace featdec {

double auroc(const VectorXd& in_scores, const VectorXd& out_scores) {
  if (in_scores.size() == 0 || out_scores.size() == 0) throw Error(ErrorCode::EmptyInput, "auroc: empty score set");
  const Eigen::Index n = in_scores.size();
  const Eigen::Index m = out_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(static_cast<std::size_t>(n + m));
  for (Eigen::Index i = 0; i < n; ++i) all.emplace_back(in_scores(i), true);
  for (Eigen::Index j = 0; j < m; ++j) all.emplace_back(out_scores(j), false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Midranks are half-integers, so the rank sum is exact in double.
  double rank_sum = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t in_count = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      in_count += all[j].second;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(in_count);
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
  return u / (static_cast<double>(n) * static_cast<double>(m));
}

double auroc(const ScoreVector& in_scores, const ScoreVector& out_scores) {
  if (in_scores.higher_is_inlier != out_scores.higher_is_inlier) {
    throw Error(ErrorCode::OrientationMismatch, "auroc: score orientations differ");
  }
  if (in_scores.higher_is_inlier) return auroc(in_scores.values, out_scores.values);
  return auroc(VectorXd(-in_scores.values), VectorXd(-out_scores.values));
}

NormStats score_stats(const ScoreVector& s) {
  if (s.size() == 0) throw Error(ErrorCode::EmptyInput, "score_stats: empty score set");
  NormStats st;
  st.mean = s.values.mean();
  st.stddev = std::sqrt((s.values.array() - st.mean).square().mean());
  return st;
}

ScoreVector normalize_scores(const ScoreVector& s, const ScoreVector& train) {
  if (s.higher_is_inlier != train.higher_is_inlier) {
    throw Error(ErrorCode::OrientationMismatch, "normalize_scores: orientations differ");
  }
  const NormStats st = score_stats(train);
  if (!(st.stddev > 0) || !std::isfinite(st.stddev)) {
    throw Error(ErrorCode::ZeroVariance, "normalize_scores: training scores have zero variance");
  }
  ScoreVector out((s.values.array() - st.mean) / st.stddev, s.source, s.higher_is_inlier);
  out.stats = st;
  return out;
}

ScoreVector combined_score(const ScoreVector& s_dis, const ScoreVector& s_nondis) {
  if (s_dis.size() != s_nondis.size()) {
    throw Error(ErrorCode::LengthMismatch, "combined_score: " + std::to_string(s_dis.size()) + " vs " +
                                               std::to_string(s_nondis.size()) + " samples");
  }
  if (s_dis.higher_is_inlier != s_nondis.higher_is_inlier) {
    throw Error(ErrorCode::OrientationMismatch, "combined_score: orientations differ");
  }
  return ScoreVector(0.5 * s_dis.values + 0.5 * s_nondis.values, "combined", s_dis.higher_is_inlier);
}

ScoreVector combined_score(const ScoreVector& s_dis, const ScoreVector& s_nondis, const ScoreVector& train_dis,
                           const ScoreVector& train_nondis) {
  return combined_score(normalize_scores(s_dis, train_dis), normalize_scores(s_nondis, train_nondis));
}

namespace {

double guard_distance(double dist, double magnitude, const KnnKlOptions& opts, std::size_t& zeros) {
  if (dist > 0) return dist;
  if (!opts.jitter_duplicates) throw Error(ErrorCode::ZeroDistance, "knn_kl: duplicate sample points");
  ++zeros;
  return 1e-12 * std::max(1.0, magnitude);
}

void check_sizes(Eigen::Index n, Eigen::Index m, Eigen::Index k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "knn_kl: k must be >= 1");
  if (n <= k || m <= k) {
    throw Error(ErrorCode::TooFewSamples, "knn_kl: need more than k = " + std::to_string(k) + " samples, got " +
                                              std::to_string(n) + " and " + std::to_string(m));
  }
}

double finish(double log_ratio_sum, Eigen::Index dim, Eigen::Index n, Eigen::Index m, const KnnKlOptions& opts) {
  const double value = static_cast<double>(dim) / static_cast<double>(n) * log_ratio_sum +
                       std::log(static_cast<double>(m) / static_cast<double>(n - 1));
  return opts.clamp_at_zero ? std::max(0.0, value) : value;
}

// k-th nearest distance from x to the sorted sample `s`, optionally treating
// one copy at index `self` as excluded.
double kth_sorted(const std::vector<double>& s, double x, Eigen::Index k, std::ptrdiff_t self) {
  const auto size = static_cast<std::ptrdiff_t>(s.size());
  std::ptrdiff_t right = std::lower_bound(s.begin(), s.end(), x) - s.begin();
  std::ptrdiff_t left = right - 1;
  double dist = 0;
  for (Eigen::Index found = 0; found < k;) {
    if (left == self) --left;
    if (right == self) ++right;
    const bool has_left = left >= 0;
    const bool has_right = right < size;
    if (!has_left && !has_right) break;
    const double dl = has_left ? x - s[static_cast<std::size_t>(left)] : INFINITY;
    const double dr = has_right ? s[static_cast<std::size_t>(right)] - x : INFINITY;
    if (dl <= dr) {
      dist = dl;
      --left;
    } else {
      dist = dr;
      ++right;
    }
    ++found;
  }
  return dist;
}

}  // namespace

double knn_kl(const VectorXd& p, const VectorXd& q, const KnnKlOptions& opts, KnnKlInfo* info) {
  const Eigen::Index n = p.size();
  const Eigen::Index m = q.size();
  check_sizes(n, m, opts.k);
  std::vector<double> sp(p.data(), p.data() + n);
  std::vector<double> sq(q.data(), q.data() + m);
  std::sort(sp.begin(), sp.end());
  std::sort(sq.begin(), sq.end());

  double total = 0;
  std::size_t zeros = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = sp[static_cast<std::size_t>(i)];
    const double rho = guard_distance(kth_sorted(sp, x, opts.k, i), std::abs(x), opts, zeros);
    const double nu = guard_distance(kth_sorted(sq, x, opts.k, -1), std::abs(x), opts, zeros);
    total += std::log(nu / rho);
  }
  if (info) info->zero_distances = zeros;
  return finish(total, 1, n, m, opts);
}

double knn_kl(const MatrixXd& p, const MatrixXd& q, const KnnKlOptions& opts, KnnKlInfo* info) {
  if (p.cols() != q.cols()) throw Error(ErrorCode::DimensionMismatch, "knn_kl: sample dims differ");
  if (p.cols() == 1) return knn_kl(VectorXd(p.col(0)), VectorXd(q.col(0)), opts, info);
  const Eigen::Index n = p.rows();
  const Eigen::Index m = q.rows();
  check_sizes(n, m, opts.k);
  const auto k = static_cast<std::size_t>(opts.k);

  std::vector<double> terms(static_cast<std::size_t>(n));
  std::vector<std::size_t> zeros(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    std::vector<double> dp(static_cast<std::size_t>(n - 1));
    std::vector<double> dq(static_cast<std::size_t>(m));
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = p.row(static_cast<Eigen::Index>(i));
      std::size_t w = 0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != static_cast<Eigen::Index>(i)) dp[w++] = (p.row(j) - row).norm();
      for (Eigen::Index j = 0; j < m; ++j) dq[static_cast<std::size_t>(j)] = (q.row(j) - row).norm();
      std::nth_element(dp.begin(), dp.begin() + static_cast<std::ptrdiff_t>(k - 1), dp.end());
      std::nth_element(dq.begin(), dq.begin() + static_cast<std::ptrdiff_t>(k - 1), dq.end());
      const double mag = row.cwiseAbs().maxCoeff();
      const double rho = guard_distance(dp[k - 1], mag, opts, zeros[i]);
      const double nu = guard_distance(dq[k - 1], mag, opts, zeros[i]);
      terms[i] = std::log(nu / rho);
    }
  }, 64);
  if (info) info->zero_distances = std::accumulate(zeros.begin(), zeros.end(), std::size_t{0});
  return finish(std::accumulate(terms.begin(), terms.end(), 0.0), p.cols(), n, m, opts);
}

double knn_kl(const ScoreVector& p, const ScoreVector& q, const KnnKlOptions& opts, KnnKlInfo* info) {
  return knn_kl(p.values, q.values, opts, info);
}

DistanceReport dataset_distance(const ScoreVector& train_dis, const ScoreVector& in_dis, const ScoreVector& out_dis,
                                const ScoreVector& train_nondis, const ScoreVector& in_nondis,
                                const ScoreVector& out_nondis, const KnnKlOptions& opts) {
  DistanceReport r;
  r.k = opts.k;
  r.n = in_dis.size();
  r.m = out_dis.size();
  if (in_nondis.size() != r.n || out_nondis.size() != r.m) {
    throw Error(ErrorCode::LengthMismatch, "dataset_distance: dis and non-dis score sets differ in size");
  }
  KnnKlInfo a, b;
  r.d_dis = knn_kl(normalize_scores(in_dis, train_dis), normalize_scores(out_dis, train_dis), opts, &a);
  r.d_nondis = knn_kl(normalize_scores(in_nondis, train_nondis), normalize_scores(out_nondis, train_nondis), opts, &b);
  r.zero_distances = a.zero_distances + b.zero_distances;
  return r;
}

std::vector<ClasswiseRow> classwise_report(const FeatureScores& dis, const FeatureScores& nondis,
                                           const std::vector<std::int32_t>& out_labels, const KnnKlOptions& opts) {
  if (static_cast<Eigen::Index>(out_labels.size()) != dis.out.size() ||
      static_cast<Eigen::Index>(out_labels.size()) != nondis.out.size()) {
    throw Error(ErrorCode::LengthMismatch, "classwise_report: OoD labels do not align with OoD scores");
  }
  std::map<std::int32_t, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < out_labels.size(); ++i)
    if (out_labels[i] >= 0) groups[out_labels[i]].push_back(static_cast<Eigen::Index>(i));
  if (groups.empty()) throw Error(ErrorCode::EmptyClass, "classwise_report: no labeled OoD samples");

  const NormStats st_dis = score_stats(dis.train);
  const NormStats st_nondis = score_stats(nondis.train);
  auto gather = [](const ScoreVector& s, const std::vector<Eigen::Index>& rows) {
    ScoreVector out(VectorXd(static_cast<Eigen::Index>(rows.size())), s.source, s.higher_is_inlier);
    for (std::size_t r = 0; r < rows.size(); ++r) out.values(static_cast<Eigen::Index>(r)) = s.values(rows[r]);
    return out;
  };

  std::vector<ClasswiseRow> rows;
  for (const auto& [label, idx] : groups) {
    const ScoreVector od = gather(dis.out, idx);
    const ScoreVector on = gather(nondis.out, idx);
    ClasswiseRow row;
    row.label = label;
    row.count = static_cast<Eigen::Index>(idx.size());
    row.dis_auroc = auroc(dis.in, od);
    row.nondis_auroc = auroc(nondis.in, on);
    const DistanceReport d = dataset_distance(dis.train, dis.in, od, nondis.train, nondis.in, on, opts);
    row.d_dis = d.d_dis;
    row.d_nondis = d.d_nondis;
    if (!(st_dis.stddev > 0) || !(st_nondis.stddev > 0)) {
      throw Error(ErrorCode::ZeroVariance, "classwise_report: training scores have zero variance");
    }
    row.mean_dis = (od.values.mean() - st_dis.mean) / st_dis.stddev;
    row.mean_nondis = (on.values.mean() - st_nondis.mean) / st_nondis.stddev;
    rows.push_back(row);
  }
  return rows;
}

Histogram histogram(const ScoreVector& s, Eigen::Index bins, std::optional<std::pair<double, double>> range) {
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "histogram: bins must be >= 1");
  double lo = 0, hi = 1;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(hi > lo)) throw Error(ErrorCode::InvalidArgument, "histogram: range must satisfy lo < hi");
  } else if (s.size() > 0) {
    lo = s.values.minCoeff();
    hi = s.values.maxCoeff();
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  Histogram h;
  h.edges = VectorXd::LinSpaced(bins + 1, lo, hi);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double pos = std::floor((s.values(i) - lo) / width);
    const auto b = static_cast<Eigen::Index>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace featdec
