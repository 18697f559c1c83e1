#include "featdec/density.hpp"

#include <limits>
#include <numbers>

#include "featdec/parallel.hpp"

namespace featdec {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::SharedMaha: return "shared_maha";
    case Variant::ClasswiseGda: return "classwise_gda";
    case Variant::Marginal: return "marginal";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "shared_maha") return Variant::SharedMaha;
  if (name == "classwise_gda") return Variant::ClasswiseGda;
  if (name == "marginal") return Variant::Marginal;
  throw Error(ErrorCode::InvalidArgument, "unknown density variant '" + std::string(name) + "'");
}

namespace {

SpdFactor<double> factor_covariance(MatrixXd cov, double epsilon) {
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += epsilon;
  try {
    return cholesky_spd(cov);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularCovariance,
                "covariance not positive definite with epsilon = " + std::to_string(epsilon));
  }
}

double default_epsilon(const MatrixXd& cov) { return 1e-6 * cov.diagonal().mean(); }

}  // namespace

DensityModel fit(const FeatureSet& train, Variant variant, std::optional<double> epsilon) {
  train.validate();
  if (epsilon && *epsilon < 0) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  if (train.n() == 0) throw Error(ErrorCode::EmptyClass, "empty training set");
  const Eigen::Index m = train.d();
  const auto n = static_cast<double>(train.n());

  DensityModel model;
  model.variant = variant;
  model.dim = m;

  if (variant == Variant::Marginal) {
    model.classes = train.classes;
    const VectorXd mu = train.features.colwise().mean().transpose();
    const MatrixXd centered = train.features.rowwise() - mu.transpose();
    const MatrixXd cov = (centered.transpose() * centered) / n;
    model.epsilon = epsilon.value_or(default_epsilon(cov));
    model.means = {mu};
    model.factors = {factor_covariance(cov, model.epsilon)};
    return model;
  }

  if (!train.labeled()) throw Error(ErrorCode::EmptyClass, "class-conditional fit needs labels");
  const auto counts = train.class_counts();
  const std::int32_t classes = train.classes;
  const Eigen::Index min_count = variant == Variant::ClasswiseGda ? 2 : 1;
  for (std::int32_t c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < min_count) {
      throw Error(ErrorCode::EmptyClass, "class " + std::to_string(c) + " has " +
                                             std::to_string(counts[static_cast<std::size_t>(c)]) + " samples");
    }
  }
  model.classes = classes;

  std::vector<VectorXd> sums(static_cast<std::size_t>(classes), VectorXd::Zero(m));
  for (Eigen::Index i = 0; i < train.n(); ++i) {
    const auto y = train.labels[static_cast<std::size_t>(i)];
    if (y >= 0) sums[static_cast<std::size_t>(y)] += train.features.row(i).transpose();
  }
  for (std::int32_t c = 0; c < classes; ++c)
    model.means.push_back(sums[static_cast<std::size_t>(c)] / static_cast<double>(counts[static_cast<std::size_t>(c)]));

  std::vector<MatrixXd> scatter(static_cast<std::size_t>(classes), MatrixXd::Zero(m, m));
  for (std::int32_t c = 0; c < classes; ++c) {
    const FeatureSet block = select_class(train, c);
    const MatrixXd centered = block.features.rowwise() - model.means[static_cast<std::size_t>(c)].transpose();
    scatter[static_cast<std::size_t>(c)] = centered.transpose() * centered;
  }

  if (variant == Variant::SharedMaha) {
    MatrixXd pooled = MatrixXd::Zero(m, m);
    double labeled = 0;
    for (std::int32_t c = 0; c < classes; ++c) {
      pooled += scatter[static_cast<std::size_t>(c)];
      labeled += static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    pooled /= labeled;
    model.epsilon = epsilon.value_or(default_epsilon(pooled));
    model.factors = {factor_covariance(pooled, model.epsilon)};
    return model;
  }

  std::vector<MatrixXd> covs;
  double diag_mean = 0;
  for (std::int32_t c = 0; c < classes; ++c) {
    covs.push_back(scatter[static_cast<std::size_t>(c)] / static_cast<double>(counts[static_cast<std::size_t>(c)]));
    diag_mean += covs.back().diagonal().mean() / classes;
  }
  model.epsilon = epsilon.value_or(1e-6 * diag_mean);
  for (auto& cov : covs) model.factors.push_back(factor_covariance(std::move(cov), model.epsilon));
  return model;
}

DetailedScores score_detailed(const DensityModel& model, const MatrixXd& features) {
  if (features.cols() != model.dim) {
    throw Error(ErrorCode::DimensionMismatch, "score: feature dim " + std::to_string(features.cols()) +
                                                  " != model dim " + std::to_string(model.dim));
  }
  const Eigen::Index n = features.rows();
  DetailedScores out;
  out.scores.values.resize(n);
  out.scores.source = std::string(variant_name(model.variant));
  out.argmax.assign(static_cast<std::size_t>(n), -1);

  const double log_2pi_m = static_cast<double>(model.dim) * std::log(2.0 * std::numbers::pi);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    const MatrixXd block = features.middleRows(b, len).transpose();  // m × len
    VectorXd best = VectorXd::Constant(len, -std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> arg(static_cast<std::size_t>(len), -1);
    for (std::size_t c = 0; c < model.means.size(); ++c) {
      const auto& factor = model.variant == Variant::ClasswiseGda ? model.factors[c] : model.factors.front();
      VectorXd s = -quadratic_forms(factor, block.colwise() - model.means[c]);
      if (model.variant == Variant::ClasswiseGda) s.array() -= log_2pi_m + factor.log_det;
      for (Eigen::Index j = 0; j < len; ++j) {
        // Strict comparison keeps the lowest class index on ties.
        if (s(j) > best(j)) {
          best(j) = s(j);
          arg[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(c);
        }
      }
    }
    out.scores.values.segment(b, len) = best;
    if (model.variant != Variant::Marginal)
      std::copy(arg.begin(), arg.end(), out.argmax.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return out;
}

ScoreVector score(const DensityModel& model, const MatrixXd& features) {
  return score_detailed(model, features).scores;
}

ScoreVector score(const DensityModel& model, const FeatureSet& fs) { return score(model, fs.features); }

ScoreVector relative_score(const ScoreVector& full, const ScoreVector& marg, RelativeBase base) {
  if (full.size() != marg.size()) {
    throw Error(ErrorCode::LengthMismatch, "relative_score: " + std::to_string(full.size()) + " vs " +
                                               std::to_string(marg.size()) + " samples");
  }
  const std::string_view want =
      variant_name(base == RelativeBase::SharedMaha ? Variant::SharedMaha : Variant::ClasswiseGda);
  if (full.source != want) {
    throw Error(ErrorCode::VariantMismatch, "relative_score: full scores come from '" + full.source + "', expected '" +
                                                std::string(want) + "'");
  }
  if (marg.source != variant_name(Variant::Marginal)) {
    throw Error(ErrorCode::VariantMismatch, "relative_score: marginal scores come from '" + marg.source + "'");
  }
  if (full.higher_is_inlier != marg.higher_is_inlier) {
    throw Error(ErrorCode::OrientationMismatch, "relative_score: orientations differ");
  }
  ScoreVector out(full.values - marg.values, "relative", full.higher_is_inlier);
  return out;
}

std::string_view scorer_name(ScorerKind k) {
  switch (k) {
    case ScorerKind::Maha: return "maha";
    case ScorerKind::Gda: return "gda";
    case ScorerKind::Marginal: return "marginal";
    case ScorerKind::Relative: return "relative";
  }
  return "unknown";
}

ScorerKind parse_scorer(std::string_view name) {
  if (name == "maha") return ScorerKind::Maha;
  if (name == "gda") return ScorerKind::Gda;
  if (name == "marginal") return ScorerKind::Marginal;
  if (name == "relative") return ScorerKind::Relative;
  throw Error(ErrorCode::InvalidArgument, "unknown scorer '" + std::string(name) + "'");
}

Scorer fit_scorer(const FeatureSet& train, ScorerKind kind, std::optional<double> epsilon, RelativeBase base) {
  Scorer s;
  s.kind = kind;
  s.relative_base = base;
  switch (kind) {
    case ScorerKind::Maha: s.model = fit(train, Variant::SharedMaha, epsilon); break;
    case ScorerKind::Gda: s.model = fit(train, Variant::ClasswiseGda, epsilon); break;
    case ScorerKind::Marginal: s.model = fit(train, Variant::Marginal, epsilon); break;
    case ScorerKind::Relative:
      s.model = fit(train, base == RelativeBase::SharedMaha ? Variant::SharedMaha : Variant::ClasswiseGda, epsilon);
      s.marginal = fit(train, Variant::Marginal, epsilon);
      break;
  }
  return s;
}

ScoreVector score(const Scorer& scorer, const FeatureSet& fs) {
  ScoreVector primary = score(scorer.model, fs);
  if (scorer.kind != ScorerKind::Relative) return primary;
  return relative_score(primary, score(*scorer.marginal, fs), scorer.relative_base);
}

}  // namespace featdec
