#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "featdec/featstore.hpp"
#include "featdec/scores.hpp"

namespace featdec {

enum class Variant { SharedMaha, ClasswiseGda, Marginal };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// Fitted Gaussian model of a feature distribution.
///
/// SharedMaha: per-class means, one pooled within-class covariance.
/// ClasswiseGda: per-class means and covariances (with log-determinants).
/// Marginal: a single global mean and total covariance, labels ignored.
struct DensityModel {
  Variant variant = Variant::SharedMaha;
  std::vector<VectorXd> means;
  std::vector<SpdFactor<double>> factors;
  Eigen::Index dim = 0;
  std::int32_t classes = 0;
  double epsilon = 0;
};

/// `epsilon` is the absolute jitter added to every covariance diagonal before
/// factoring; nullopt selects 1e-6 × the mean covariance diagonal.
DensityModel fit(const FeatureSet& train, Variant variant, std::optional<double> epsilon = std::nullopt);

/// Score values plus the class attaining the maximum (-1 for marginal).
struct DetailedScores {
  ScoreVector scores;
  std::vector<std::int32_t> argmax;
};

DetailedScores score_detailed(const DensityModel& model, const MatrixXd& features);
ScoreVector score(const DensityModel& model, const FeatureSet& fs);
ScoreVector score(const DensityModel& model, const MatrixXd& features);

/// Which class-conditional score the relative score subtracts the marginal
/// score from.
enum class RelativeBase { SharedMaha, ClasswiseGda };

/// full - marginal, elementwise.
ScoreVector relative_score(const ScoreVector& full, const ScoreVector& marg,
                           RelativeBase base = RelativeBase::SharedMaha);

/// User-facing scorer selection: the three density variants plus the
/// relative combination, which carries its own marginal model.
enum class ScorerKind { Maha, Gda, Marginal, Relative };

std::string_view scorer_name(ScorerKind k);
ScorerKind parse_scorer(std::string_view name);

struct Scorer {
  ScorerKind kind = ScorerKind::Maha;
  DensityModel model;
  std::optional<DensityModel> marginal;
  RelativeBase relative_base = RelativeBase::SharedMaha;
};

Scorer fit_scorer(const FeatureSet& train, ScorerKind kind, std::optional<double> epsilon = std::nullopt,
                  RelativeBase base = RelativeBase::SharedMaha);
ScoreVector score(const Scorer& scorer, const FeatureSet& fs);

}  // namespace featdec
