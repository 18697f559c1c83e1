// End-to-end acceptance checks. Prints one PASS/FAIL line per check and
// exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "featdec/decomp.hpp"
#include "featdec/density.hpp"
#include "featdec/featstore.hpp"
#include "featdec/metrics.hpp"
#include "featdec/pipeline.hpp"

using namespace featdec;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

void add_pct(Outcome& o, const PipelineResult& r, const char* feature, const char* ood, double target, double tol) {
  const double v = 100 * r.auroc_of(feature, ood);
  o.require(within(v, target, tol),
            std::string(feature) + "/" + ood + " " + fmt("%.2f", v) + fmt(" vs %.2f", target) + fmt("±%.2f", tol));
}

// ---------------------------------------------------------------------------

Outcome toy2d() {
  Outcome o;
  const auto t0 = Clock::now();
  const PipelineResult r = run_repro_toy2d({});
  const double t = seconds_since(t0);
  add_pct(o, r, "full", "ood_dis", 94, 2);
  add_pct(o, r, "full", "ood_nondis", 94, 2);
  add_pct(o, r, "dis", "ood_dis", 98, 2);
  add_pct(o, r, "dis", "ood_nondis", 36, 3);
  add_pct(o, r, "nondis", "ood_nondis", 98, 2);
  add_pct(o, r, "nondis", "ood_dis", 34, 3);
  o.require(t < 10, fmt("%.2fs", t));
  return o;
}

Outcome toy128() {
  Outcome o;
  const auto t0 = Clock::now();
  const PipelineResult r = run_repro_toy128({});
  const double t = seconds_since(t0);
  add_pct(o, r, "dis", "ood_dis", 99.13, 0.5);
  add_pct(o, r, "nondis", "ood_nondis", 84.41, 1.5);
  // Full-feature AUROC per OoD set and over the pooled OoD sets.
  bool any = false;
  std::string seen;
  for (const char* ood : {"ood_dis", "ood_nondis", "union"}) {
    const double v = 100 * r.auroc_of("full", ood);
    any = any || within(v, 83.95, 1.5);
    seen += std::string(seen.empty() ? "" : " ") + ood + "=" + fmt("%.2f", v);
  }
  o.require(any, "full " + seen + " vs 83.95±1.50");
  o.require(t < 60, fmt("%.2fs", t));
  return o;
}

struct IceRun {
  PipelineResult result;
  double seconds = 0;
  double worst_sigma = 0;
  std::size_t checks = 0;
};

IceRun run_ice() {
  IceRun run;
  ReproOptions opts;
  opts.use_ice = true;
  opts.observer = [&run](std::size_t, const IceModel& m) {
    for (const auto& l : m.net.layers) {
      const double s = Eigen::JacobiSVD<MatrixXd>(l.effective()).singularValues()(0);
      run.worst_sigma = std::max(run.worst_sigma, s);
    }
    ++run.checks;
  };
  const auto t0 = Clock::now();
  run.result = run_repro_toy128(opts);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome ice_toy128(const IceRun& run) {
  Outcome o;
  const auto& a = *run.result.audit;
  o.require(a.head_accuracy >= 0.95, "head accuracy " + fmt("%.4f", a.head_accuracy));
  o.require(a.probe_accuracy >= 0.05 && a.probe_accuracy <= 0.20, "z_n probe " + fmt("%.4f", a.probe_accuracy));
  const double dis = run.result.auroc_of("dis", "ood_dis");
  o.require(dis >= 0.98, "dis/ood_dis " + fmt("%.4f", dis));
  o.require(run.seconds < 300, fmt("%.1fs", run.seconds));
  return o;
}

Outcome gradients() {
  Outcome o;
  Rng rng(2024);
  const double h = 1e-5;
  double worst = 0;
  std::size_t coords = 0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); };
  for (int instance = 0; instance < 20; ++instance) {
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(instance);
    cfg.init_scale = rng.uniform(0.05, 0.4);
    IceModel m = ice_init(8, 3, cfg);
    for (auto& l : m.net.layers) l.bias = 0.2 * random_matrix(rng, 8, 1);
    m.probe_bias = 0.2 * random_matrix(rng, 3, 1);
    MatrixXd f = 2 * random_matrix(rng, 12, 8);
    std::vector<std::int32_t> y(12);
    for (auto& v : y) v = static_cast<std::int32_t>(rng.uniform_int(0, 2));
    const FeatureSet batch(f, y, 3);
    const IceLoss base = ice_loss_and_grads(m, batch);
    auto diff = [&](const std::function<double&(IceModel&)>& slot, bool theta) {
      IceModel p = m, q = m;
      slot(p) += h;
      slot(q) -= h;
      const IceLoss lp = ice_loss_and_grads(p, batch), lq = ice_loss_and_grads(q, batch);
      return theta ? (lp.loss_theta - lq.loss_theta) / (2 * h) : (lp.loss_phi - lq.loss_phi) / (2 * h);
    };
    for (std::size_t t = 0; t < m.net.layers.size(); ++t) {
      for (Eigen::Index k = 0; k < 64; ++k) {
        const double fd = diff([&](IceModel& x) -> double& { return x.net.layers[t].weight(k); }, true);
        worst = std::max(worst, rel(fd, base.grads_theta.weight[t](k)));
        ++coords;
      }
      for (Eigen::Index k = 0; k < 8; ++k) {
        const double fd = diff([&](IceModel& x) -> double& { return x.net.layers[t].bias(k); }, true);
        worst = std::max(worst, rel(fd, base.grads_theta.bias[t](k)));
        ++coords;
      }
    }
    for (Eigen::Index k = 0; k < m.probe_weight.size(); ++k) {
      const double fd = diff([&](IceModel& x) -> double& { return x.probe_weight(k); }, false);
      worst = std::max(worst, rel(fd, base.grads_phi.probe_weight(k)));
      ++coords;
    }
    for (Eigen::Index k = 0; k < 3; ++k) {
      const double fd = diff([&](IceModel& x) -> double& { return x.probe_bias(k); }, false);
      worst = std::max(worst, rel(fd, base.grads_phi.probe_bias(k)));
      ++coords;
    }
  }
  o.require(worst < 1e-4, std::to_string(coords) + " coordinates, worst relative error " + fmt("%.2e", worst));
  return o;
}

Outcome invertibility(const IceRun& run) {
  Outcome o;
  const IResNet& net = run.result.decomposition.ice->net;
  Rng rng(77);
  const MatrixXd z = 5 * random_matrix(rng, 1000, net.dim);
  const MatrixXd back = iresnet_inverse(net, iresnet_forward(net, z));
  const double err = (back - z).cwiseAbs().maxCoeff();
  o.require(err < 1e-5, "max reconstruction error " + fmt("%.2e", err));
  o.require(run.checks >= 30 && run.worst_sigma <= 0.9 + 1e-6,
            std::to_string(run.checks) + " sampled steps, max layer norm " + fmt("%.6f", run.worst_sigma));
  return o;
}

Outcome oracles() {
  Outcome o;
  Rng rng(6);
  std::size_t mismatched = 0;
  for (int i = 0; i < 50; ++i) {
    auto n = static_cast<Eigen::Index>(rng.uniform_int(1, 500));
    auto m = static_cast<Eigen::Index>(rng.uniform_int(1, 500));
    if (i == 49) n = m = 500;
    VectorXd a(n), b(m);
    const bool ties = i % 2 == 0;
    for (auto& v : a) v = ties ? std::round(3 * rng.normal()) : rng.normal();
    for (auto& v : b) v = ties ? std::round(3 * rng.normal() - 1) : rng.normal() - 0.5;
    if (i == 49) a.setZero(), b.setZero();
    double pairs = 0;
    for (double x : a)
      for (double y : b) pairs += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    if (auroc(a, b) != pairs / (static_cast<double>(n) * static_cast<double>(m))) ++mismatched;
  }
  o.require(mismatched == 0, "auroc vs pair counting: " + std::to_string(mismatched) + "/50 differ");

  double worst_solve = 0;
  for (int i = 0; i < 50; ++i) {
    const auto d = static_cast<Eigen::Index>(rng.uniform_int(1, 40));
    const MatrixXd b = random_matrix(rng, d, d);
    const MatrixXd spd = b.transpose() * b + MatrixXd::Identity(d, d);
    const VectorXd v = random_matrix(rng, d, 1);
    const VectorXd x = solve_spd(cholesky_spd(spd), v);
    const VectorXd oracle = Eigen::FullPivLU<MatrixXd>(spd).inverse() * v;
    worst_solve = std::max(worst_solve, (x - oracle).cwiseAbs().maxCoeff() / std::max(1.0, oracle.cwiseAbs().maxCoeff()));
  }
  o.require(worst_solve <= 1e-8, "solve vs explicit inverse " + fmt("%.2e", worst_solve));

  double worst_affine = 0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Index d = 1 + i % 6;
    const std::int32_t c = 2 + i % 3;
    MatrixXd f = random_matrix(rng, 40 * c, d);
    std::vector<std::int32_t> y(static_cast<std::size_t>(40 * c));
    for (std::size_t k = 0; k < y.size(); ++k) {
      y[k] = static_cast<std::int32_t>(k % static_cast<std::size_t>(c));
      f(static_cast<Eigen::Index>(k), y[k] % d) += 3;
    }
    const FeatureSet train(f, y, c);
    const MatrixXd probe = 3 * random_matrix(rng, 100, d);
    const MatrixXd a = random_matrix(rng, d, d) + 3 * MatrixXd::Identity(d, d);
    const VectorXd shift = 5 * random_matrix(rng, d, 1);
    auto map = [&](const MatrixXd& z) { return MatrixXd((z * a.transpose()).rowwise() + shift.transpose()); };
    const VectorXd s0 = score(fit(train, Variant::SharedMaha, 0.0), probe).values;
    const VectorXd s1 = score(fit(FeatureSet(map(f), y, c), Variant::SharedMaha, 0.0), map(probe)).values;
    worst_affine = std::max(worst_affine, (s0 - s1).cwiseAbs().maxCoeff() / std::max(1.0, s0.cwiseAbs().maxCoeff()));
  }
  o.require(worst_affine <= 1e-6, "affine invariance " + fmt("%.2e", worst_affine));
  return o;
}

Outcome knn() {
  Outcome o;
  Rng rng(7);
  struct Case {
    double mu, sigma, expected;
  };
  // KL(N(0,1) || N(mu, sigma^2)) = log sigma + (1 + mu^2) / (2 sigma^2) - 1/2.
  for (const Case c : {Case{0, 1, 0.0}, Case{1, 1, 0.5}, Case{0, 2, std::log(2.0) + 0.125 - 0.5}}) {
    VectorXd p(10000), q(10000);
    for (auto& v : p) v = rng.normal();
    for (auto& v : q) v = c.mu + c.sigma * rng.normal();
    const double kl = knn_kl(p, q);
    o.require(within(kl, c.expected, 0.1), fmt("%.3f", kl) + fmt(" vs %.3f", c.expected));
  }
  return o;
}

struct IdentityTally {
  std::size_t samples = 0;
  std::size_t bad = 0;
  double worst_ulps = 0;     // |(rel + marg) - full| in ulps of max(|full|, |marg|)
  std::size_t rounded = 0;   // samples where full - marg itself is inexact
};

void relative_mismatches(const FeatureSet& train, const std::vector<const FeatureSet*>& sets, IdentityTally& t) {
  const DensityModel shared = fit(train, Variant::SharedMaha);
  const DensityModel marginal = fit(train, Variant::Marginal);
  for (const FeatureSet* s : sets) {
    const ScoreVector m = score(shared, *s);
    const ScoreVector mm = score(marginal, *s);
    const ScoreVector rel = relative_score(m, mm);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double a = m.values(i), b = mm.values(i), r = rel.values(i);
      // Two-sum error term of a - b; zero iff the subtraction was exact.
      const double bv = r - a;
      const double err = (a - (r - bv)) + (-b - bv);
      t.rounded += err != 0.0;
      ++t.samples;
      if (r + b != a) {
        ++t.bad;
        const double big = std::max(std::abs(a), std::abs(b));
        const double ulp = std::nextafter(big, INFINITY) - big;
        t.worst_ulps = std::max(t.worst_ulps, std::abs((r + b) - a) / ulp);
      }
    }
  }
}

Outcome relative_identity() {
  Outcome o;
  IdentityTally t;
  for (ToyCase c : {ToyCase::Toy2d, ToyCase::Toy128}) {
    ToySpec spec;
    spec.kind = c;
    const ToyData d = gen_toy(spec);
    const FeatureSet train = quantize_f32(d.train), in = quantize_f32(d.test_in), od = quantize_f32(d.ood_dis),
                     on = quantize_f32(d.ood_nondis);
    relative_mismatches(train, {&train, &in, &od, &on}, t);
  }
  o.require(t.bad == 0, std::to_string(t.bad) + "/" + std::to_string(t.samples) + " samples differ, worst " +
                            fmt("%.2f", t.worst_ulps) + " ulp of the larger operand; " + std::to_string(t.rounded) +
                            " subtractions inexact in double");
  return o;
}

Outcome round_trip() {
  Outcome o;
  Rng rng(9);
  const fs::path dir = fs::temp_directory_path() / "featdec_acceptance";
  fs::create_directories(dir);
  std::size_t bad = 0, unlabeled = 0, single = 0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index n = i % 10 == 0 ? 1 : rng.uniform_int(1, 300);
    const Eigen::Index d = i % 7 == 0 ? 1 : rng.uniform_int(1, 64);
    MatrixXd f = random_matrix(rng, n, d) * std::pow(10.0, rng.uniform(-3, 3));
    FeatureSet s;
    if (i % 3 == 0) {
      s = FeatureSet::unlabeled(f);
      ++unlabeled;
    } else {
      const auto c = static_cast<std::int32_t>(rng.uniform_int(1, 12));
      std::vector<std::int32_t> y(static_cast<std::size_t>(n));
      for (auto& v : y) v = static_cast<std::int32_t>(rng.uniform_int(0, c - 1));
      s = FeatureSet(f, y, c);
    }
    single += n == 1;
    const fs::path path = dir / ("set_" + std::to_string(i) + ".odf");
    save_featureset(s, path);
    const FeatureSet back = load_featureset(path);
    const FeatureSet expect = quantize_f32(s);
    const bool same = back.n() == n && back.d() == d && back.classes == s.classes && back.labels == s.labels &&
                      (back.features.array() == expect.features.array()).all() &&
                      fs::file_size(path) == 24 + static_cast<std::uintmax_t>(n) * (4 + 4 * static_cast<std::uintmax_t>(d));
    bad += !same;
  }
  fs::remove_all(dir);
  o.require(bad == 0, std::to_string(bad) + "/100 differ (" + std::to_string(unlabeled) + " unlabeled, " +
                          std::to_string(single) + " single-sample)");
  return o;
}

}  // namespace

int main() {
  report(1, "toy 2-D reproduction", toy2d);
  report(2, "toy 128-D ground-truth split", toy128);
  IceRun ice;
  bool ice_ok = true;
  std::string ice_error;
  try {
    ice = run_ice();
  } catch (const std::exception& e) {
    ice_ok = false;
    ice_error = e.what();
  }
  auto needs_ice = [&](const std::function<Outcome()>& f) {
    return [&, f] {
      if (!ice_ok) {
        Outcome o;
        o.pass = false;
        o.detail = "iCE training failed: " + ice_error;
        return o;
      }
      return f();
    };
  };
  report(3, "iCE decomposition on toy 128-D", needs_ice([&] { return ice_toy128(ice); }));
  report(4, "iCE gradients vs central differences", gradients);
  report(5, "iResNet invertibility and spectral clamp", needs_ice([&] { return invertibility(ice); }));
  report(6, "oracle equivalence", oracles);
  report(7, "kNN KL on 1-D Gaussians", knn);
  report(8, "relative score identity", relative_identity);
  report(9, "ODF1 round trip", round_trip);
  std::printf("%d of 9 checks failed\n", failures);
  return failures == 0 ? 0 : 1;
}
