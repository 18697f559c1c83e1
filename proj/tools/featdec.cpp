// featdec command-line tool: data generation, density fitting, feature
// decomposition, scoring and evaluation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "featdec/density.hpp"
#include "featdec/featstore.hpp"
#include "featdec/metrics.hpp"
#include "featdec/pipeline.hpp"
#include "featdec/serialize.hpp"

namespace fs = std::filesystem;
using namespace featdec;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Option bundles shared between subcommands

struct IceFlags {
  TrainConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--iterations", cfg.iterations, "iCE training iterations")->capture_default_str();
    app->add_option("--lr", cfg.lr_theta, "network learning rate")->capture_default_str();
    app->add_option("--lr-probe", cfg.lr_phi, "adversarial probe learning rate")->capture_default_str();
    app->add_option("--batch", cfg.batch, "network minibatch size")->capture_default_str();
    app->add_option("--probe-batch", cfg.probe_batch, "probe minibatch size")->capture_default_str();
    app->add_option("--probe-steps", cfg.probe_steps, "probe updates per network update")->capture_default_str();
    app->add_option("--layers", cfg.layers, "residual layers")->capture_default_str();
    app->add_option("--kappa", cfg.kappa, "spectral norm bound per layer")->capture_default_str();
    app->add_option("--init-scale", cfg.init_scale, "uniform weight init half-width (0: 1/D)")->capture_default_str();
    app->add_option("--log-every", cfg.log_every, "training log interval")->capture_default_str();
  }
};

struct ScoreFlags {
  std::string variant = "maha";
  std::string relative_base = "maha";
  std::optional<double> epsilon;

  void add(CLI::App* app) {
    app->add_option("--variant", variant, "maha | gda | marginal | relative")
        ->check(CLI::IsMember({"maha", "gda", "marginal", "relative"}))
        ->capture_default_str();
    app->add_option("--relative-base", relative_base, "class-conditional score used by relative: maha | gda")
        ->check(CLI::IsMember({"maha", "gda"}))
        ->capture_default_str();
    app->add_option("--epsilon", epsilon, "covariance diagonal jitter (default: 1e-6 x mean variance)");
  }

  ScorerKind kind() const { return parse_scorer(variant); }
  RelativeBase base() const { return relative_base == "gda" ? RelativeBase::ClasswiseGda : RelativeBase::SharedMaha; }
};

struct KnnFlags {
  KnnKlOptions opts;

  void add(CLI::App* app) {
    app->add_option("--k", opts.k, "nearest-neighbour order of the KL estimator")->capture_default_str();
    app->add_flag("--clamp-kl", opts.clamp_at_zero, "clamp negative KL estimates at zero");
  }
};

Json knn_json(const KnnKlOptions& o) {
  return Json{{"k", o.k}, {"clamp_kl", o.clamp_at_zero}, {"jitter_duplicates", o.jitter_duplicates}};
}

Json epsilon_json(const std::optional<double>& e) { return e ? Json(*e) : Json("auto"); }

// ---------------------------------------------------------------------------
// Output helpers

void write_manifest(const fs::path& path, const std::string& command, Json params, Json inputs, Json outputs) {
  Json m;
  m["tool"] = "featdec";
  m["version"] = kVersion;
  m["command"] = command;
  m["parameters"] = std::move(params);
  m["inputs"] = std::move(inputs);
  m["outputs"] = std::move(outputs);
  write_json(m, path);
}

fs::path manifest_beside(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void warn_zero_distances(std::size_t count) {
  if (count > 0) {
    std::cerr << "warning: " << count << " zero nearest-neighbor distances replaced by a 1e-12 relative jitter\n";
  }
}

void warn_zero_distances(const PipelineResult& r) {
  std::size_t count = 0;
  for (const auto& d : r.distances) count += d.report.zero_distances;
  warn_zero_distances(count);
}

void print_aurocs(const PipelineResult& r) {
  std::cout << "feature   ood          AUROC %\n";
  for (const auto& row : r.aurocs) {
    char line[96];
    std::snprintf(line, sizeof line, "%-9s %-12s %s\n", row.feature.c_str(), row.ood.c_str(),
                  format_percent(row.auroc).c_str());
    std::cout << line;
  }
  for (const auto& d : r.distances) {
    char line[128];
    std::snprintf(line, sizeof line, "distance  %-12s d_dis %.4f  d_nondis %.4f\n", d.ood.c_str(), d.report.d_dis,
                  d.report.d_nondis);
    std::cout << line;
  }
  if (r.audit) {
    std::cout << "head accuracy " << format_percent(r.audit->head_accuracy) << " %, z_n probe accuracy "
              << format_percent(r.audit->probe_accuracy) << " %\n";
  }
}

ScoreVector with_orientation(ScoreTable t) { return std::move(t.scores); }

// ---------------------------------------------------------------------------
// Repeated toy reproductions

template <typename Run>
void run_repeats(const std::string& command, const fs::path& out, std::uint64_t seed, std::size_t repeats,
                 const PipelineConfig& cfg, Json params, Run&& run) {
  if (repeats == 0) throw Error(ErrorCode::InvalidArgument, "--repeats must be positive");
  params["seed"] = seed;
  params["repeats"] = repeats;
  params["pipeline"] = to_json(cfg);
  fs::create_directories(out);
  Json outputs = Json::array();
  if (repeats == 1) {
    const PipelineResult r = run(seed);
    write_reports(r, cfg, out);
    print_aurocs(r);
    warn_zero_distances(r);
    outputs = {"auroc.csv", "distance.csv", "classwise.csv", "summary.json", "scores/", "hist/"};
  } else {
    std::map<std::pair<std::string, std::string>, std::vector<double>> acc;
    std::vector<std::pair<std::string, std::string>> order;
    for (std::size_t i = 0; i < repeats; ++i) {
      const std::uint64_t s = seed + i;
      const PipelineResult r = run(s);
      warn_zero_distances(r);
      const std::string sub = "seed_" + std::to_string(s);
      write_reports(r, cfg, out / sub);
      outputs.push_back(sub + "/");
      for (const auto& row : r.aurocs) {
        auto key = std::make_pair(row.feature, row.ood);
        if (!acc.count(key)) order.push_back(key);
        acc[key].push_back(row.auroc);
      }
    }
    std::ostringstream table;
    table << "feature,ood,mean_auroc_pct,std_auroc_pct,repeats\n";
    std::cout << "feature   ood          mean AUROC %  std\n";
    for (const auto& key : order) {
      const auto& v = acc[key];
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / static_cast<double>(v.size()));
      table << key.first << ',' << key.second << ',' << format_percent(mean) << ',' << format_percent(sd) << ','
            << v.size() << '\n';
      char line[96];
      std::snprintf(line, sizeof line, "%-9s %-12s %-13s %s\n", key.first.c_str(), key.second.c_str(),
                    format_percent(mean).c_str(), format_percent(sd).c_str());
      std::cout << line;
    }
    write_file(out / "auroc_mean.csv", table.str());
    outputs.push_back("auroc_mean.csv");
  }
  write_manifest(out / "manifest.json", command, params, Json::object(), outputs);
}

std::vector<NamedSet> parse_oods(const std::vector<std::string>& specs) {
  std::vector<NamedSet> oods;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    std::string name, path;
    if (eq == std::string::npos) {
      path = s;
      name = fs::path(s).stem().string();
    } else {
      name = s.substr(0, eq);
      path = s.substr(eq + 1);
    }
    if (name.empty() || name == "union") {
      throw Error(ErrorCode::InvalidArgument, "OoD set name '" + name + "' is empty or reserved");
    }
    for (const auto& o : oods)
      if (o.name == name) throw Error(ErrorCode::InvalidArgument, "duplicate OoD set name '" + name + "'");
    oods.push_back({name, load_featureset(path)});
  }
  return oods;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-density OoD scoring and discriminative / non-discriminative feature decomposition"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // gen-toy ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-toy", "generate a synthetic toy dataset");
  std::string gen_case = "toy2d", gen_format = "binary";
  std::string gen_out;
  ToySpec toy;
  gen->add_option("--case", gen_case, "toy2d | toy128")->check(CLI::IsMember({"toy2d", "toy128"}))->capture_default_str();
  gen->add_option("--seed", toy.seed, "generator seed")->capture_default_str();
  gen->add_option("--train-per-class", toy.train_per_class, "training samples per class (0: case default)");
  gen->add_option("--test-per-class", toy.test_per_class, "test samples per class (0: case default)");
  gen->add_option("--ood-count", toy.ood_count, "samples per OoD population (0: case default)");
  gen->add_flag("--toy2d-literal-cov", toy.literal_variance, "toy2d: read 0.5 / 0.3 as variances");
  gen->add_option("--format", gen_format, "binary | csv")->check(CLI::IsMember({"binary", "csv"}))->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();

  // fit-density -----------------------------------------------------------
  auto* fitd = app.add_subcommand("fit-density", "fit a density scorer on a feature file");
  std::string fitd_in, fitd_out;
  ScoreFlags fitd_flags;
  fitd->add_option("--in", fitd_in, "training features")->required();
  fitd_flags.add(fitd);
  fitd->add_option("--out", fitd_out, "scorer JSON")->required();

  // decompose-fit ---------------------------------------------------------
  auto* dfit = app.add_subcommand("decompose-fit", "fit a feature decomposition");
  std::string dfit_in, dfit_out, dfit_transform = "pca";
  Eigen::Index dfit_dims = 0;
  IceFlags dfit_ice;
  dfit->add_option("--in", dfit_in, "training features")->required();
  dfit->add_option("--transform", dfit_transform, "pca | ice | split:<d>")->capture_default_str();
  dfit->add_option("--dims", dfit_dims, "pca: number of discriminative components");
  dfit->add_option("--seed", dfit_ice.cfg.seed, "iCE seed")->capture_default_str();
  dfit_ice.add(dfit);
  dfit->add_option("--out", dfit_out, "decomposition JSON")->required();

  // decompose-apply -------------------------------------------------------
  auto* dapp = app.add_subcommand("decompose-apply", "split a feature file into dis / non-dis parts");
  std::string dapp_model, dapp_in, dapp_out, dapp_format = "binary";
  dapp->add_option("--model", dapp_model, "decomposition JSON")->required();
  dapp->add_option("--in", dapp_in, "features to transform")->required();
  dapp->add_option("--format", dapp_format, "binary | csv")->check(CLI::IsMember({"binary", "csv"}))->capture_default_str();
  dapp->add_option("--out", dapp_out, "output directory (dis.*, nondis.*)")->required();

  // score -----------------------------------------------------------------
  auto* sc = app.add_subcommand("score", "score a feature file with a fitted scorer");
  std::string sc_model, sc_in, sc_out;
  bool sc_normalize = false;
  std::string sc_train;
  sc->add_option("--model", sc_model, "scorer JSON")->required();
  sc->add_option("--in", sc_in, "features to score")->required();
  sc->add_flag("--normalize", sc_normalize, "normalize by the scores of --train-features");
  sc->add_option("--train-features", sc_train, "training features used for --normalize");
  sc->add_option("--out", sc_out, "score table (CSV)")->required();

  // auroc -----------------------------------------------------------------
  auto* au = app.add_subcommand("auroc", "AUROC of in-distribution vs OoD score tables");
  std::string au_in, au_ood, au_out;
  au->add_option("--in", au_in, "in-distribution scores")->required();
  au->add_option("--ood", au_ood, "OoD scores")->required();
  au->add_option("--out", au_out, "result table (CSV)")->required();

  // distance / classwise ----------------------------------------------------
  struct DistanceFiles {
    std::string train_dis, in_dis, ood_dis, train_nondis, in_nondis, ood_nondis, out;
    KnnFlags knn;
    void add(CLI::App* a) {
      a->add_option("--train-dis", train_dis, "training dis scores")->required();
      a->add_option("--in-dis", in_dis, "in-distribution dis scores")->required();
      a->add_option("--ood-dis", ood_dis, "OoD dis scores")->required();
      a->add_option("--train-nondis", train_nondis, "training non-dis scores")->required();
      a->add_option("--in-nondis", in_nondis, "in-distribution non-dis scores")->required();
      a->add_option("--ood-nondis", ood_nondis, "OoD non-dis scores")->required();
      knn.add(a);
      a->add_option("--out", out, "result table (CSV)")->required();
    }
    Json inputs() const {
      return Json{{"train_dis", train_dis}, {"in_dis", in_dis},         {"ood_dis", ood_dis},
                  {"train_nondis", train_nondis}, {"in_nondis", in_nondis}, {"ood_nondis", ood_nondis}};
    }
  };
  auto* dist = app.add_subcommand("distance", "kNN KL dataset distance on dis / non-dis scores");
  DistanceFiles dist_files;
  dist_files.add(dist);
  auto* cw = app.add_subcommand("classwise", "per-class dataset distance and AUROC (OoD tables need labels)");
  DistanceFiles cw_files;
  cw_files.add(cw);

  // histogram ---------------------------------------------------------------
  auto* hist = app.add_subcommand("histogram", "histogram of a score table");
  std::string hist_in, hist_train, hist_out;
  Eigen::Index hist_bins = 50;
  std::optional<double> hist_lo, hist_hi;
  hist->add_option("--in", hist_in, "score table")->required();
  hist->add_option("--train", hist_train, "training scores; normalize before binning");
  hist->add_option("--bins", hist_bins, "bin count")->capture_default_str();
  hist->add_option("--lo", hist_lo, "lower range edge");
  hist->add_option("--hi", hist_hi, "upper range edge");
  hist->add_option("--out", hist_out, "histogram table (CSV)")->required();

  // repro-toy2d / repro-toy128 ----------------------------------------------
  auto* r2 = app.add_subcommand("repro-toy2d", "two-dimensional toy experiment");
  ReproOptions r2_opts;
  std::size_t r2_repeats = 1;
  std::string r2_out;
  ScoreFlags r2_score;
  KnnFlags r2_knn;
  r2->add_option("--seed", r2_opts.seed, "data seed")->capture_default_str();
  r2->add_option("--repeats", r2_repeats, "runs with consecutive seeds")->capture_default_str();
  r2->add_flag("--toy2d-literal-cov", r2_opts.literal_variance, "read 0.5 / 0.3 as variances");
  r2_score.add(r2);
  r2_knn.add(r2);
  r2->add_flag("--normalize,!--no-normalize", r2_opts.pipeline.normalize,
               "normalize dis / non-dis scores before combining")->capture_default_str();
  r2->add_option("--out", r2_out, "report directory")->required();

  auto* r128 = app.add_subcommand("repro-toy128", "128-dimensional toy experiment");
  ReproOptions r128_opts;
  std::size_t r128_repeats = 1;
  std::string r128_out;
  ScoreFlags r128_score;
  KnnFlags r128_knn;
  IceFlags r128_ice;
  r128->add_option("--seed", r128_opts.seed, "data and iCE seed")->capture_default_str();
  r128->add_option("--repeats", r128_repeats, "runs with consecutive seeds")->capture_default_str();
  r128->add_flag("--ice", r128_opts.use_ice, "learn the split with iCE instead of the ground-truth axes");
  r128_score.add(r128);
  r128_knn.add(r128);
  r128_ice.add(r128);
  r128->add_flag("--normalize,!--no-normalize", r128_opts.pipeline.normalize,
                 "normalize dis / non-dis scores before combining")->capture_default_str();
  r128->add_option("--out", r128_out, "report directory")->required();

  // pipeline ----------------------------------------------------------------
  auto* pl = app.add_subcommand("pipeline", "fit, decompose, score and evaluate feature files");
  std::string pl_train, pl_in, pl_out, pl_transform = "pca";
  std::vector<std::string> pl_oods;
  Eigen::Index pl_dims = 0;
  ScoreFlags pl_score;
  KnnFlags pl_knn;
  IceFlags pl_ice;
  PipelineConfig pl_cfg;
  bool pl_audit = false;
  pl->add_option("--train", pl_train, "training features")->required();
  pl->add_option("--in", pl_in, "in-distribution test features")->required();
  pl->add_option("--ood", pl_oods, "OoD features as name=path (repeatable)")->required();
  pl->add_option("--transform", pl_transform, "pca | ice | split:<d>")->capture_default_str();
  pl->add_option("--dims", pl_dims, "pca: number of discriminative components");
  pl->add_option("--seed", pl_ice.cfg.seed, "iCE seed")->capture_default_str();
  pl_score.add(pl);
  pl_knn.add(pl);
  pl_ice.add(pl);
  pl->add_flag("--normalize,!--no-normalize", pl_cfg.normalize, "normalize dis / non-dis scores before combining")
      ->capture_default_str();
  pl->add_option("--bins", pl_cfg.hist_bins, "histogram bins")->capture_default_str();
  pl->add_flag("--audit", pl_audit, "retrain linear probes on the decomposed features");
  pl->add_option("--out", pl_out, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: InvalidArgument: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      toy.kind = parse_toy_case(gen_case);
      const ToySpec spec = toy.resolved();
      const ToyData data = gen_toy(spec);
      const FileFormat fmt = parse_format(gen_format);
      const std::string ext = fmt == FileFormat::Csv ? ".csv" : ".odf";
      const fs::path out(gen_out);
      fs::create_directories(out);
      Json outputs = Json::array();
      for (const auto& [name, set] : std::vector<std::pair<std::string, const FeatureSet*>>{
               {"train", &data.train}, {"test_in", &data.test_in}, {"ood_dis", &data.ood_dis},
               {"ood_nondis", &data.ood_nondis}}) {
        save_featureset(*set, out / (name + ext), fmt);
        outputs.push_back(name + ext);
      }
      write_manifest(out / "manifest.json", "gen-toy",
                     {{"case", gen_case},
                      {"seed", spec.seed},
                      {"train_per_class", spec.train_per_class},
                      {"test_per_class", spec.test_per_class},
                      {"ood_count", spec.ood_count},
                      {"toy2d_literal_cov", spec.literal_variance},
                      {"format", gen_format}},
                     Json::object(), outputs);
    } else if (*fitd) {
      const FeatureSet train = load_featureset(fitd_in);
      const Scorer scorer = fit_scorer(train, fitd_flags.kind(), fitd_flags.epsilon, fitd_flags.base());
      ensure_parent(fitd_out);
      write_json(to_json(scorer), fitd_out);
      write_manifest(manifest_beside(fitd_out), "fit-density",
                     {{"variant", fitd_flags.variant},
                      {"relative_base", fitd_flags.relative_base},
                      {"epsilon", epsilon_json(fitd_flags.epsilon)},
                      {"effective_epsilon", scorer.model.epsilon}},
                     {{"in", fitd_in}}, Json::array({fs::path(fitd_out).filename().string()}));
    } else if (*dfit) {
      const FeatureSet train = load_featureset(dfit_in);
      const TransformSpec spec = parse_transform(dfit_transform, dfit_dims);
      const Decomposition dec = fit_decomposition(train, spec, dfit_ice.cfg);
      Json doc = to_json(dec);
      if (!dec.log.empty()) {
        Json log = Json::array();
        for (const auto& e : dec.log) {
          log.push_back({{"iteration", e.iteration}, {"term1", e.term1}, {"term2", e.term2},
                         {"head_accuracy", e.head_accuracy}, {"probe_accuracy", e.probe_accuracy},
                         {"max_sigma", e.max_sigma}});
        }
        doc["train_log"] = log;
      }
      ensure_parent(dfit_out);
      write_json(doc, dfit_out);
      Json params{{"transform", transform_label({dec.kind, dec.split})}, {"dims", dfit_dims}, {"split", dec.split}};
      if (spec.kind == TransformKind::Ice) params["ice"] = to_json(dfit_ice.cfg);
      write_manifest(manifest_beside(dfit_out), "decompose-fit", params, {{"in", dfit_in}},
                     Json::array({fs::path(dfit_out).filename().string()}));
    } else if (*dapp) {
      const Decomposition dec = decomposition_from_json(read_json(dapp_model));
      const FeatureSet in = load_featureset(dapp_in);
      const SplitPair parts = apply_decomposition(dec, in);
      const FileFormat fmt = parse_format(dapp_format);
      const std::string ext = fmt == FileFormat::Csv ? ".csv" : ".odf";
      const fs::path out(dapp_out);
      fs::create_directories(out);
      save_featureset(parts.first, out / ("dis" + ext), fmt);
      save_featureset(parts.rest, out / ("nondis" + ext), fmt);
      write_manifest(out / "manifest.json", "decompose-apply",
                     {{"transform", transform_label({dec.kind, dec.split})}, {"format", dapp_format}},
                     {{"model", dapp_model}, {"in", dapp_in}}, Json::array({"dis" + ext, "nondis" + ext}));
    } else if (*sc) {
      const Scorer scorer = scorer_from_json(read_json(sc_model));
      const FeatureSet in = load_featureset(sc_in);
      ScoreVector s = score(scorer, in);
      Json inputs{{"model", sc_model}, {"in", sc_in}};
      if (sc_normalize) {
        if (sc_train.empty()) throw Error(ErrorCode::InvalidArgument, "--normalize needs --train-features");
        s = normalize_scores(s, score(scorer, load_featureset(sc_train)));
        inputs["train_features"] = sc_train;
      }
      ensure_parent(sc_out);
      save_scores(sc_out, s, in.labeled() ? in.labels : std::vector<std::int32_t>{});
      Json params{{"scorer", scorer_name(scorer.kind)}, {"normalize", sc_normalize}};
      if (s.stats) params["train_stats"] = {{"mean", s.stats->mean}, {"std", s.stats->stddev}};
      write_manifest(manifest_beside(sc_out), "score", params, inputs,
                     Json::array({fs::path(sc_out).filename().string()}));
    } else if (*au) {
      const double a = auroc(with_orientation(load_scores(au_in)), with_orientation(load_scores(au_ood)));
      write_file(au_out, "auroc,auroc_pct\n" + num(a) + "," + format_percent(a) + "\n");
      std::cout << "AUROC " << format_percent(a) << " %\n";
      write_manifest(manifest_beside(au_out), "auroc", Json::object(), {{"in", au_in}, {"ood", au_ood}},
                     Json::array({fs::path(au_out).filename().string()}));
    } else if (*dist) {
      const auto& f = dist_files;
      const DistanceReport r =
          dataset_distance(load_scores(f.train_dis).scores, load_scores(f.in_dis).scores, load_scores(f.ood_dis).scores,
                           load_scores(f.train_nondis).scores, load_scores(f.in_nondis).scores,
                           load_scores(f.ood_nondis).scores, f.knn.opts);
      write_file(f.out, "d_dis,d_nondis,k,n,m\n" + num(r.d_dis) + "," + num(r.d_nondis) + "," + std::to_string(r.k) +
                            "," + std::to_string(r.n) + "," + std::to_string(r.m) + "\n");
      warn_zero_distances(r.zero_distances);
      std::cout << "d_dis " << num(r.d_dis) << "\nd_nondis " << num(r.d_nondis) << '\n';
      write_manifest(manifest_beside(f.out), "distance", {{"knn", knn_json(f.knn.opts)}, {"zero_distances", r.zero_distances}},
                     f.inputs(), Json::array({fs::path(f.out).filename().string()}));
    } else if (*cw) {
      const auto& f = cw_files;
      const ScoreTable od = load_scores(f.ood_dis);
      const ScoreTable on = load_scores(f.ood_nondis);
      if (od.labels.empty()) throw Error(ErrorCode::InvalidArgument, "classwise needs labeled OoD score tables");
      if (od.labels != on.labels) throw Error(ErrorCode::LengthMismatch, "dis and non-dis OoD labels differ");
      const FeatureScores dis{load_scores(f.train_dis).scores, load_scores(f.in_dis).scores, od.scores};
      const FeatureScores nondis{load_scores(f.train_nondis).scores, load_scores(f.in_nondis).scores, on.scores};
      std::ostringstream t;
      t << "class,count,dis_auroc_pct,nondis_auroc_pct,d_dis,d_nondis,mean_norm_dis,mean_norm_nondis\n";
      for (const auto& r : classwise_report(dis, nondis, od.labels, f.knn.opts)) {
        t << r.label << ',' << r.count << ',' << format_percent(r.dis_auroc) << ',' << format_percent(r.nondis_auroc)
          << ',' << num(r.d_dis) << ',' << num(r.d_nondis) << ',' << num(r.mean_dis) << ',' << num(r.mean_nondis)
          << '\n';
      }
      write_file(f.out, t.str());
      write_manifest(manifest_beside(f.out), "classwise", {{"knn", knn_json(f.knn.opts)}}, f.inputs(),
                     Json::array({fs::path(f.out).filename().string()}));
    } else if (*hist) {
      ScoreVector s = load_scores(hist_in).scores;
      Json inputs{{"in", hist_in}};
      if (!hist_train.empty()) {
        s = normalize_scores(s, load_scores(hist_train).scores);
        inputs["train"] = hist_train;
      }
      if (hist_lo.has_value() != hist_hi.has_value()) {
        throw Error(ErrorCode::InvalidArgument, "--lo and --hi must be given together");
      }
      std::optional<std::pair<double, double>> range;
      if (hist_lo) range = std::make_pair(*hist_lo, *hist_hi);
      const Histogram h = histogram(s, hist_bins, range);
      std::ostringstream t;
      t << "edge,count\n";
      for (std::size_t b = 0; b < h.counts.size(); ++b)
        t << num(h.edges(static_cast<Eigen::Index>(b))) << ',' << h.counts[b] << '\n';
      t << num(h.edges(h.edges.size() - 1)) << ",0\n";
      write_file(hist_out, t.str());
      write_manifest(manifest_beside(hist_out), "histogram",
                     {{"bins", hist_bins},
                      {"normalized", !hist_train.empty()},
                      {"lo", h.edges(0)},
                      {"hi", h.edges(h.edges.size() - 1)}},
                     inputs, Json::array({fs::path(hist_out).filename().string()}));
    } else if (*r2) {
      r2_opts.pipeline.scorer = r2_score.kind();
      r2_opts.pipeline.relative_base = r2_score.base();
      r2_opts.pipeline.epsilon = r2_score.epsilon;
      r2_opts.pipeline.knn = r2_knn.opts;
      r2_opts.pipeline.transform = {TransformKind::Split, 1};
      run_repeats("repro-toy2d", r2_out, r2_opts.seed, r2_repeats, r2_opts.pipeline,
                  {{"toy2d_literal_cov", r2_opts.literal_variance}}, [&](std::uint64_t seed) {
                    ReproOptions o = r2_opts;
                    o.seed = seed;
                    return run_repro_toy2d(o);
                  });
    } else if (*r128) {
      r128_opts.pipeline.scorer = r128_score.kind();
      r128_opts.pipeline.relative_base = r128_score.base();
      r128_opts.pipeline.epsilon = r128_score.epsilon;
      r128_opts.pipeline.knn = r128_knn.opts;
      r128_opts.pipeline.ice = r128_ice.cfg;
      r128_opts.pipeline.transform =
          r128_opts.use_ice ? TransformSpec{TransformKind::Ice, 0} : TransformSpec{TransformKind::Split, 10};
      run_repeats("repro-toy128", r128_out, r128_opts.seed, r128_repeats, r128_opts.pipeline,
                  {{"ice", r128_opts.use_ice}}, [&](std::uint64_t seed) {
                    ReproOptions o = r128_opts;
                    o.seed = seed;
                    o.pipeline.ice.seed = seed;
                    return run_repro_toy128(o);
                  });
    } else if (*pl) {
      pl_cfg.scorer = pl_score.kind();
      pl_cfg.relative_base = pl_score.base();
      pl_cfg.epsilon = pl_score.epsilon;
      pl_cfg.knn = pl_knn.opts;
      pl_cfg.ice = pl_ice.cfg;
      pl_cfg.transform = parse_transform(pl_transform, pl_dims);
      const FeatureSet train = load_featureset(pl_train);
      const FeatureSet in = load_featureset(pl_in);
      const std::vector<NamedSet> oods = parse_oods(pl_oods);
      const PipelineResult r = run_pipeline(train, in, oods, pl_cfg, pl_audit);
      const fs::path out(pl_out);
      write_reports(r, pl_cfg, out);
      write_json(to_json(r.decomposition), out / "decomposition.json");
      print_aurocs(r);
      warn_zero_distances(r);
      Json inputs{{"train", pl_train}, {"in", pl_in}};
      Json ood_inputs = Json::array();
      for (const auto& s : pl_oods) ood_inputs.push_back(s);
      inputs["ood"] = ood_inputs;
      write_manifest(out / "manifest.json", "pipeline", {{"pipeline", to_json(pl_cfg)}, {"audit", pl_audit}}, inputs,
                     {"auroc.csv", "distance.csv", "classwise.csv", "summary.json", "decomposition.json", "scores/",
                      "hist/"});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
