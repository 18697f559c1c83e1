#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numbers>
#include <numeric>

#include "featdec/density.hpp"
#include "support.hpp"

using namespace featdec;
using featdec::testing::blobs;
using featdec::testing::max_abs;
using featdec::testing::random_matrix;

namespace {

// Class 0 = {-2, 0}, class 1 = {2, 4}.
FeatureSet one_dim() {
  MatrixXd f(4, 1);
  f << -2, 0, 2, 4;
  return FeatureSet(f, {0, 0, 1, 1}, 2);
}

MatrixXd column(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::vector<double> ranks(const VectorXd& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b)); });
  std::vector<double> r(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

}  // namespace

TEST_SUITE("density") {
  TEST_CASE("shared fit on the 1-D example") {
    const DensityModel m = fit(one_dim(), Variant::SharedMaha, 0.0);
    REQUIRE(m.means.size() == 2);
    CHECK(m.means[0](0) == doctest::Approx(-1.0));
    CHECK(m.means[1](0) == doctest::Approx(3.0));
    CHECK(m.factors.size() == 1);
    CHECK(m.factors[0].reconstruct()(0, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("marginal fit on the 1-D example") {
    const DensityModel m = fit(one_dim(), Variant::Marginal, 0.0);
    REQUIRE(m.means.size() == 1);
    REQUIRE(m.factors.size() == 1);
    CHECK(m.means[0](0) == doctest::Approx(1.0));
    CHECK(m.factors[0].reconstruct()(0, 0) == doctest::Approx(5.0));
  }

  TEST_CASE("1-D scores by hand") {
    const FeatureSet train = one_dim();
    const DensityModel shared = fit(train, Variant::SharedMaha, 0.0);
    const DensityModel marg = fit(train, Variant::Marginal, 0.0);
    const ScoreVector s = score(shared, column({0.0}));
    const ScoreVector m = score(marg, column({0.0}));
    CHECK(s.values(0) == doctest::Approx(-1.0));
    CHECK(m.values(0) == doctest::Approx(-0.2));
    const ScoreVector rel = relative_score(s, m);
    CHECK(rel.values(0) == doctest::Approx(-0.8));
    CHECK(rel.source == "relative");
  }

  TEST_CASE("classwise GDA by hand") {
    // Class variances are 1 for both classes, so the log-det term is log 2π.
    const DensityModel g = fit(one_dim(), Variant::ClasswiseGda, 0.0);
    REQUIRE(g.factors.size() == 2);
    const ScoreVector s = score(g, column({0.0}));
    CHECK(s.values(0) == doctest::Approx(-1.0 - std::log(2 * std::numbers::pi)));
  }

  TEST_CASE("shared score at a class mean is zero and argmax picks that class") {
    Rng rng(2);
    const FeatureSet train = blobs(rng, 50, 3, 4);
    const DensityModel m = fit(train, Variant::SharedMaha);
    MatrixXd at(3, 4);
    for (int c = 0; c < 3; ++c) at.row(c) = m.means[static_cast<std::size_t>(c)].transpose();
    const DetailedScores d = score_detailed(m, at);
    for (int c = 0; c < 3; ++c) {
      CHECK(d.scores.values(c) == 0.0);
      CHECK(d.argmax[static_cast<std::size_t>(c)] == c);
    }
  }

  TEST_CASE("ties in the class maximum go to the lowest class") {
    MatrixXd f(4, 1);
    f << -2, 0, 2, 4;  // means -1 and 3; z = 1 is equidistant
    const DensityModel m = fit(FeatureSet(f, {0, 0, 1, 1}, 2), Variant::SharedMaha, 0.0);
    const DetailedScores d = score_detailed(m, column({1.0}));
    CHECK(d.argmax[0] == 0);
    const DensityModel marg = fit(FeatureSet(f, {0, 0, 1, 1}, 2), Variant::Marginal, 0.0);
    CHECK(score_detailed(marg, column({1.0})).argmax[0] == -1);
  }

  TEST_CASE("shared scores match an explicit-inverse oracle") {
    Rng rng(3);
    const FeatureSet train = blobs(rng, 40, 3, 5);
    const DensityModel m = fit(train, Variant::SharedMaha, 0.0);
    // Oracle: pooled scatter / N, explicit inverse, max over classes.
    MatrixXd scatter = MatrixXd::Zero(5, 5);
    std::vector<VectorXd> means;
    for (std::int32_t c = 0; c < 3; ++c) {
      const FeatureSet cls = select_class(train, c);
      const VectorXd mu = cls.features.colwise().mean().transpose();
      means.push_back(mu);
      const MatrixXd centered = cls.features.rowwise() - mu.transpose();
      scatter += centered.transpose() * centered;
    }
    const MatrixXd inv = (scatter / static_cast<double>(train.n())).inverse();
    const MatrixXd probe = random_matrix(rng, 20, 5);
    const ScoreVector s = score(m, probe);
    for (Eigen::Index i = 0; i < probe.rows(); ++i) {
      double best = -1e300;
      for (const auto& mu : means) {
        const VectorXd d = probe.row(i).transpose() - mu;
        best = std::max(best, -d.dot(inv * d));
      }
      CHECK(s.values(i) == doctest::Approx(best).epsilon(1e-9));
    }
  }

  TEST_CASE("GDA scores match an explicit oracle") {
    Rng rng(4);
    const FeatureSet train = blobs(rng, 60, 2, 3);
    const DensityModel g = fit(train, Variant::ClasswiseGda, 0.0);
    const MatrixXd probe = random_matrix(rng, 10, 3);
    const ScoreVector s = score(g, probe);
    for (Eigen::Index i = 0; i < probe.rows(); ++i) {
      double best = -1e300;
      for (std::int32_t c = 0; c < 2; ++c) {
        const FeatureSet cls = select_class(train, c);
        const VectorXd mu = cls.features.colwise().mean().transpose();
        const MatrixXd centered = cls.features.rowwise() - mu.transpose();
        const MatrixXd cov = centered.transpose() * centered / static_cast<double>(cls.n());
        const VectorXd d = probe.row(i).transpose() - mu;
        const double v = -d.dot(cov.inverse() * d) - std::log(std::pow(2 * std::numbers::pi, 3) * cov.determinant());
        best = std::max(best, v);
      }
      CHECK(s.values(i) == doctest::Approx(best).epsilon(1e-9));
    }
  }

  TEST_CASE("default epsilon is relative to the covariance scale") {
    Rng rng(5);
    FeatureSet train = blobs(rng, 30, 2, 3);
    const DensityModel m = fit(train, Variant::Marginal);
    const MatrixXd centered = train.features.rowwise() - train.features.colwise().mean();
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(train.n());
    CHECK(m.epsilon == doctest::Approx(1e-6 * cov.diagonal().mean()).epsilon(1e-12));
    CHECK(max_abs(m.factors[0].reconstruct() - cov - m.epsilon * MatrixXd::Identity(3, 3)) < 1e-10);
  }

  TEST_CASE("a constant column without jitter is singular") {
    MatrixXd f(6, 2);
    f << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
    const FeatureSet train(f, {0, 0, 0, 1, 1, 1}, 2);
    for (Variant v : {Variant::SharedMaha, Variant::ClasswiseGda, Variant::Marginal})
      CHECK(code_of([&] { fit(train, v, 0.0); }) == ErrorCode::SingularCovariance);
    CHECK_NOTHROW(fit(train, Variant::SharedMaha));
  }

  TEST_CASE("fit error paths") {
    const FeatureSet missing(MatrixXd::Ones(3, 1), {0, 0, 2}, 3);
    CHECK(code_of([&] { fit(missing, Variant::SharedMaha); }) == ErrorCode::EmptyClass);
    const FeatureSet single(column({1, 2, 3}), {0, 0, 1}, 2);
    CHECK(code_of([&] { fit(single, Variant::ClasswiseGda); }) == ErrorCode::EmptyClass);
    CHECK(code_of([&] { fit(FeatureSet::unlabeled(MatrixXd::Ones(3, 1)), Variant::SharedMaha); }) ==
          ErrorCode::EmptyClass);
    CHECK(code_of([&] { fit(one_dim(), Variant::SharedMaha, -1.0); }) == ErrorCode::InvalidArgument);
    const DensityModel m = fit(one_dim(), Variant::SharedMaha);
    CHECK(code_of([&] { score(m, MatrixXd::Zero(2, 3)); }) == ErrorCode::DimensionMismatch);
  }

  TEST_CASE("marginal ignores labels") {
    Rng rng(6);
    const FeatureSet train = blobs(rng, 30, 3, 4);
    const DensityModel a = fit(train, Variant::Marginal);
    const DensityModel b = fit(FeatureSet::unlabeled(train.features), Variant::Marginal);
    const MatrixXd probe = random_matrix(rng, 5, 4);
    CHECK(max_abs(score(a, probe).values - score(b, probe).values) == 0.0);
  }

  TEST_CASE("shared and marginal scores are affine invariant") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      const FeatureSet train = blobs(rng, 40, 3, 4);
      const MatrixXd probe = random_matrix(rng, 25, 4);
      MatrixXd a = random_matrix(rng, 4, 4) + 2 * MatrixXd::Identity(4, 4);
      const VectorXd b = featdec::testing::random_vector(rng, 4);
      auto map = [&](const MatrixXd& z) { return MatrixXd((z * a.transpose()).rowwise() + b.transpose()); };
      const FeatureSet mapped(map(train.features), train.labels, train.classes);
      for (Variant v : {Variant::SharedMaha, Variant::Marginal}) {
        const VectorXd s0 = score(fit(train, v, 0.0), probe).values;
        const VectorXd s1 = score(fit(mapped, v, 0.0), map(probe)).values;
        CHECK(max_abs(s0 - s1) < 1e-6 * std::max(1.0, max_abs(s0)));
      }
    }
  }

  TEST_CASE("shared scores are non-positive") {
    Rng rng(8);
    const FeatureSet train = blobs(rng, 30, 4, 3);
    const VectorXd s = score(fit(train, Variant::SharedMaha), random_matrix(rng, 200, 3)).values;
    CHECK(s.maxCoeff() <= 0.0);
  }

  TEST_CASE("GDA with equal class covariances ranks like shared Maha") {
    Rng rng(9);
    const FeatureSet train = blobs(rng, 50, 3, 3);
    const DensityModel shared = fit(train, Variant::SharedMaha);
    DensityModel gda = fit(train, Variant::ClasswiseGda);
    for (auto& f : gda.factors) f = shared.factors[0];
    const MatrixXd probe = random_matrix(rng, 100, 3) * 3;
    CHECK(ranks(score(shared, probe).values) == ranks(score(gda, probe).values));
  }

  TEST_CASE("scores are permutation equivariant") {
    Rng rng(10);
    const FeatureSet train = blobs(rng, 30, 2, 3);
    const DensityModel m = fit(train, Variant::ClasswiseGda);
    const MatrixXd probe = random_matrix(rng, 50, 3);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(50);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 50, rng.engine());
    const VectorXd a = score(m, MatrixXd(perm * probe)).values;
    const VectorXd b = perm * score(m, probe).values;
    CHECK(max_abs(a - b) == 0.0);
  }

  TEST_CASE("relative score identity and error paths") {
    Rng rng(11);
    const FeatureSet train = blobs(rng, 30, 3, 4);
    const MatrixXd probe = random_matrix(rng, 40, 4);
    const ScoreVector full = score(fit(train, Variant::SharedMaha), probe);
    const ScoreVector marg = score(fit(train, Variant::Marginal), probe);
    const ScoreVector rel = relative_score(full, marg);
    CHECK(((rel.values + marg.values).array() == full.values.array()).all());
    const VectorXd diff = full.values - marg.values;
    CHECK((rel.values.array() == diff.array()).all());
    CHECK(rel.source == "relative");
  }

  TEST_CASE("relative score rejects mismatched inputs") {
    Rng rng(12);
    const FeatureSet train = blobs(rng, 30, 2, 2);
    const MatrixXd probe = random_matrix(rng, 10, 2);
    const ScoreVector full = score(fit(train, Variant::SharedMaha), probe);
    const ScoreVector marg = score(fit(train, Variant::Marginal), probe);
    const ScoreVector gda = score(fit(train, Variant::ClasswiseGda), probe);
    const ScoreVector short_marg = score(fit(train, Variant::Marginal), MatrixXd(probe.topRows(5)));
    CHECK(code_of([&] { relative_score(full, short_marg); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([&] { relative_score(marg, full); }) == ErrorCode::VariantMismatch);
    CHECK(code_of([&] { relative_score(gda, marg); }) == ErrorCode::VariantMismatch);
    CHECK_NOTHROW(relative_score(gda, marg, RelativeBase::ClasswiseGda));
    ScoreVector flipped = marg;
    flipped.higher_is_inlier = false;
    CHECK(code_of([&] { relative_score(full, flipped); }) == ErrorCode::OrientationMismatch);
  }

  TEST_CASE("equal full and marginal values give zero relative scores") {
    ScoreVector a(VectorXd::LinSpaced(5, -3, 0), "shared_maha");
    ScoreVector b(a.values, "marginal");
    CHECK((relative_score(a, b).values.array() == 0.0).all());
  }

  TEST_CASE("scorer wrapper") {
    Rng rng(13);
    const FeatureSet train = blobs(rng, 30, 3, 4);
    const FeatureSet probe = FeatureSet::unlabeled(random_matrix(rng, 15, 4));
    const Scorer rel = fit_scorer(train, ScorerKind::Relative);
    REQUIRE(rel.marginal.has_value());
    const VectorXd expect = score(fit(train, Variant::SharedMaha), probe).values -
                            score(fit(train, Variant::Marginal), probe).values;
    CHECK(max_abs(score(rel, probe).values - expect) == 0.0);
    CHECK(parse_scorer("gda") == ScorerKind::Gda);
    CHECK(scorer_name(ScorerKind::Maha) == "maha");
    CHECK(fit_scorer(train, ScorerKind::Maha).model.variant == Variant::SharedMaha);
    CHECK(code_of([] { parse_scorer("knn"); }) == ErrorCode::InvalidArgument);
  }
}
