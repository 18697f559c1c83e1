#include "featdec/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "featdec/serialize.hpp"

namespace featdec {

TransformSpec parse_transform(std::string_view text, Eigen::Index dims) {
  TransformSpec spec;
  spec.dims = dims;
  if (text == "pca") {
    spec.kind = TransformKind::Pca;
    return spec;
  }
  if (text == "ice") {
    spec.kind = TransformKind::Ice;
    return spec;
  }
  if (text.starts_with("split:")) {
    const auto digits = text.substr(6);
    long long d = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || d <= 0) {
      throw Error(ErrorCode::BadSplit, "bad split spec '" + std::string(text) + "'");
    }
    spec.kind = TransformKind::Split;
    spec.dims = static_cast<Eigen::Index>(d);
    return spec;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown transform '" + std::string(text) + "' (pca | ice | split:<d>)");
}

std::string transform_label(const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::Split: return "split:" + std::to_string(spec.dims);
    case TransformKind::Pca: return "pca";
    case TransformKind::Ice: return "ice";
  }
  return "unknown";
}

Decomposition fit_decomposition(const FeatureSet& train, const TransformSpec& spec, const TrainConfig& cfg,
                                const IceObserver& observer) {
  Decomposition dec;
  dec.kind = spec.kind;
  dec.dim = train.d();
  switch (spec.kind) {
    case TransformKind::Split:
      if (spec.dims <= 0 || spec.dims >= train.d()) {
        throw Error(ErrorCode::BadSplit, "split index " + std::to_string(spec.dims) + " outside (0, " +
                                             std::to_string(train.d()) + ")");
      }
      dec.split = spec.dims;
      break;
    case TransformKind::Pca:
      dec.pca = pca_fit(train, spec.dims);
      dec.split = spec.dims;
      break;
    case TransformKind::Ice: {
      IceFit fit = ice_fit(train, cfg, observer);
      dec.split = fit.model.split();
      dec.ice = std::move(fit.model);
      dec.log = std::move(fit.log);
      dec.train_config = cfg;
      break;
    }
  }
  return dec;
}

SplitPair apply_decomposition(const Decomposition& dec, const FeatureSet& fs) {
  if (fs.d() != dec.dim) {
    throw Error(ErrorCode::DimensionMismatch, "decomposition expects dim " + std::to_string(dec.dim) + ", got " +
                                                  std::to_string(fs.d()));
  }
  switch (dec.kind) {
    case TransformKind::Split: return split_dims(fs, dec.split);
    case TransformKind::Pca: return pca_apply(*dec.pca, fs);
    case TransformKind::Ice: return ice_apply(*dec.ice, fs);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown decomposition kind");
}

double PipelineResult::auroc_of(std::string_view feature, std::string_view ood) const {
  for (const auto& r : aurocs)
    if (r.feature == feature && r.ood == ood) return r.auroc;
  throw Error(ErrorCode::InvalidArgument, "no AUROC for " + std::string(feature) + " / " + std::string(ood));
}

namespace {

struct ScoredFeature {
  Scorer scorer;
  ScoreSets sets;
};

ScoredFeature score_all(const FeatureSet& train, const FeatureSet& in, const std::vector<FeatureSet>& outs,
                        const PipelineConfig& cfg) {
  ScoredFeature f;
  f.scorer = fit_scorer(train, cfg.scorer, cfg.epsilon, cfg.relative_base);
  f.sets.train = score(f.scorer, train);
  f.sets.in = score(f.scorer, in);
  for (const auto& o : outs) f.sets.out.push_back(score(f.scorer, o));
  return f;
}

ScoreVector concat_scores(const std::vector<ScoreVector>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  ScoreVector out(VectorXd(total), parts.front().source, parts.front().higher_is_inlier);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.values.segment(at, p.size()) = p.values;
    at += p.size();
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const FeatureSet& train, const FeatureSet& test_in, const std::vector<NamedSet>& oods,
                            const PipelineConfig& cfg, bool audit, const IceObserver& observer) {
  if (oods.empty()) throw Error(ErrorCode::EmptyInput, "pipeline needs at least one OoD set");
  PipelineResult result;
  std::vector<FeatureSet> out_full;
  for (const auto& o : oods) {
    result.ood_names.push_back(o.name);
    out_full.push_back(o.data);
  }

  result.full = score_all(train, test_in, out_full, cfg).sets;

  result.decomposition = fit_decomposition(train, cfg.transform, cfg.ice, observer);
  const auto& dec = result.decomposition;
  const SplitPair train_split = apply_decomposition(dec, train);
  const SplitPair in_split = apply_decomposition(dec, test_in);
  std::vector<FeatureSet> out_dis, out_nondis;
  for (const auto& o : out_full) {
    SplitPair s = apply_decomposition(dec, o);
    out_dis.push_back(std::move(s.first));
    out_nondis.push_back(std::move(s.rest));
  }
  result.dis = score_all(train_split.first, in_split.first, out_dis, cfg).sets;
  result.nondis = score_all(train_split.rest, in_split.rest, out_nondis, cfg).sets;

  auto combine = [&](const ScoreVector& a, const ScoreVector& b) {
    return cfg.normalize ? combined_score(a, b, result.dis.train, result.nondis.train) : combined_score(a, b);
  };
  result.combined.train = combine(result.dis.train, result.nondis.train);
  result.combined.in = combine(result.dis.in, result.nondis.in);
  for (std::size_t i = 0; i < oods.size(); ++i)
    result.combined.out.push_back(combine(result.dis.out[i], result.nondis.out[i]));

  const std::vector<std::pair<std::string, const ScoreSets*>> features{
      {"full", &result.full}, {"dis", &result.dis}, {"nondis", &result.nondis}, {"combined", &result.combined}};
  for (const auto& [name, sets] : features) {
    for (std::size_t i = 0; i < oods.size(); ++i)
      result.aurocs.push_back({name, oods[i].name, auroc(sets->in, sets->out[i])});
    if (oods.size() > 1) result.aurocs.push_back({name, "union", auroc(sets->in, concat_scores(sets->out))});
  }

  for (std::size_t i = 0; i < oods.size(); ++i) {
    result.distances.push_back({oods[i].name, dataset_distance(result.dis.train, result.dis.in, result.dis.out[i],
                                                               result.nondis.train, result.nondis.in,
                                                               result.nondis.out[i], cfg.knn)});
  }
  if (oods.size() > 1) {
    result.distances.push_back({"union", dataset_distance(result.dis.train, result.dis.in,
                                                          concat_scores(result.dis.out), result.nondis.train,
                                                          result.nondis.in, concat_scores(result.nondis.out),
                                                          cfg.knn)});
  }

  // Class-wise table over the union: an unlabeled OoD set is one class, a
  // labeled one contributes one class per label.
  std::vector<std::int32_t> ids;
  std::vector<std::string> names;
  std::map<std::pair<std::size_t, std::int32_t>, std::int32_t> id_of;
  for (std::size_t i = 0; i < oods.size(); ++i) {
    for (auto l : oods[i].data.labels) {
      const auto key = std::make_pair(i, oods[i].data.labeled() ? l : -1);
      auto [it, fresh] = id_of.try_emplace(key, static_cast<std::int32_t>(names.size()));
      if (fresh) names.push_back(key.second < 0 ? oods[i].name : oods[i].name + ":" + std::to_string(key.second));
      ids.push_back(it->second);
    }
  }
  const FeatureScores dis_scores{result.dis.train, result.dis.in, concat_scores(result.dis.out)};
  const FeatureScores nondis_scores{result.nondis.train, result.nondis.in, concat_scores(result.nondis.out)};
  for (const auto& row : classwise_report(dis_scores, nondis_scores, ids, cfg.knn))
    result.classwise.push_back({names[static_cast<std::size_t>(row.label)], row});

  if (audit) {
    if (!train.labeled() || !test_in.labeled()) {
      throw Error(ErrorCode::InvalidArgument, "decomposition audit needs labeled train and test-in sets");
    }
    DecompositionAudit a;
    if (dec.kind == TransformKind::Ice) a.head_accuracy = argmax_accuracy(in_split.first.features, test_in.labels);
    a.probe_accuracy = probe_accuracy(fit_linear_probe(train_split.rest), in_split.rest);
    a.full_probe_accuracy = probe_accuracy(fit_linear_probe(concat_dims(train_split.first, train_split.rest)),
                                           concat_dims(in_split.first, in_split.rest));
    a.raw_probe_accuracy = probe_accuracy(fit_linear_probe(train), test_in);
    result.audit = a;
  }
  return result;
}

PipelineResult run_repro_toy2d(const ReproOptions& opts) {
  ToySpec spec;
  spec.kind = ToyCase::Toy2d;
  spec.seed = opts.seed;
  spec.literal_variance = opts.literal_variance;
  ToyData data = gen_toy2d(spec);
  PipelineConfig cfg = opts.pipeline;
  cfg.transform = {TransformKind::Split, 1};
  return run_pipeline(quantize_f32(data.train), quantize_f32(data.test_in),
                      {{"ood_dis", quantize_f32(data.ood_dis)}, {"ood_nondis", quantize_f32(data.ood_nondis)}}, cfg);
}

PipelineResult run_repro_toy128(const ReproOptions& opts) {
  ToySpec spec;
  spec.kind = ToyCase::Toy128;
  spec.seed = opts.seed;
  ToyData data = gen_toy128(spec);
  PipelineConfig cfg = opts.pipeline;
  cfg.transform = opts.use_ice ? TransformSpec{TransformKind::Ice, 0} : TransformSpec{TransformKind::Split, 10};
  return run_pipeline(quantize_f32(data.train), quantize_f32(data.test_in),
                      {{"ood_dis", quantize_f32(data.ood_dis)}, {"ood_nondis", quantize_f32(data.ood_nondis)}}, cfg,
                      opts.use_ice, opts.observer);
}

// ---------------------------------------------------------------------------

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * value);
  return buf;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Json distance_json(const DistanceReport& r) {
  return Json{{"d_dis", r.d_dis}, {"d_nondis", r.d_nondis}, {"k", r.k}, {"n", r.n}, {"m", r.m},
              {"zero_distances", r.zero_distances}};
}

}  // namespace

void write_reports(const PipelineResult& result, const PipelineConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "scores");
  std::filesystem::create_directories(dir / "hist");

  std::ostringstream au;
  au << "feature,ood,auroc_pct\n";
  for (const auto& r : result.aurocs) au << r.feature << ',' << r.ood << ',' << format_percent(r.auroc) << '\n';
  write_text(dir / "auroc.csv", au.str());

  std::ostringstream ds;
  ds << "ood,d_dis,d_nondis,k,n,m\n";
  for (const auto& d : result.distances) {
    ds << d.ood << ',' << num(d.report.d_dis) << ',' << num(d.report.d_nondis) << ',' << d.report.k << ','
       << d.report.n << ',' << d.report.m << '\n';
  }
  write_text(dir / "distance.csv", ds.str());

  std::ostringstream cw;
  cw << "class,count,dis_auroc_pct,nondis_auroc_pct,d_dis,d_nondis,mean_norm_dis,mean_norm_nondis\n";
  for (const auto& e : result.classwise) {
    const auto& r = e.row;
    cw << e.name << ',' << r.count << ',' << format_percent(r.dis_auroc) << ',' << format_percent(r.nondis_auroc)
       << ',' << num(r.d_dis) << ',' << num(r.d_nondis) << ',' << num(r.mean_dis) << ',' << num(r.mean_nondis)
       << '\n';
  }
  write_text(dir / "classwise.csv", cw.str());

  const std::vector<std::pair<std::string, const ScoreSets*>> features{
      {"full", &result.full}, {"dis", &result.dis}, {"nondis", &result.nondis}, {"combined", &result.combined}};
  for (const auto& [name, sets] : features) {
    save_scores(dir / "scores" / (name + "_train.csv"), sets->train);
    save_scores(dir / "scores" / (name + "_in.csv"), sets->in);
    for (std::size_t i = 0; i < result.ood_names.size(); ++i)
      save_scores(dir / "scores" / (name + "_" + result.ood_names[i] + ".csv"), sets->out[i]);
  }

  // Histograms of train-normalized dis / non-dis scores on a shared range
  // per feature, so populations can be overlaid.
  for (const auto& [name, sets] : std::vector<std::pair<std::string, const ScoreSets*>>{
           {"dis", &result.dis}, {"nondis", &result.nondis}}) {
    std::vector<std::pair<std::string, ScoreVector>> pops{{"in", normalize_scores(sets->in, sets->train)}};
    for (std::size_t i = 0; i < result.ood_names.size(); ++i)
      pops.emplace_back(result.ood_names[i], normalize_scores(sets->out[i], sets->train));
    double lo = pops.front().second.values.minCoeff(), hi = pops.front().second.values.maxCoeff();
    for (const auto& p : pops) {
      lo = std::min(lo, p.second.values.minCoeff());
      hi = std::max(hi, p.second.values.maxCoeff());
    }
    if (!(hi > lo)) hi = lo + 1;
    for (const auto& [pop, s] : pops) {
      const Histogram h = histogram(s, cfg.hist_bins, std::make_pair(lo, hi));
      std::ostringstream hs;
      hs << "edge,count\n";
      for (std::size_t b = 0; b < h.counts.size(); ++b) hs << num(h.edges(static_cast<Eigen::Index>(b))) << ',' << h.counts[b] << '\n';
      hs << num(h.edges(h.edges.size() - 1)) << ",0\n";
      write_text(dir / "hist" / (name + "_" + pop + ".csv"), hs.str());
    }
  }

  Json summary;
  summary["config"] = to_json(cfg);
  summary["ood_sets"] = result.ood_names;
  Json aurocs = Json::array();
  for (const auto& r : result.aurocs) aurocs.push_back({{"feature", r.feature}, {"ood", r.ood}, {"auroc", r.auroc}});
  summary["aurocs"] = aurocs;
  Json dists = Json::array();
  for (const auto& d : result.distances) {
    Json j = distance_json(d.report);
    j["ood"] = d.ood;
    dists.push_back(j);
  }
  summary["distances"] = dists;
  Json cws = Json::array();
  for (const auto& e : result.classwise) {
    cws.push_back({{"class", e.name},
                   {"count", e.row.count},
                   {"dis_auroc", e.row.dis_auroc},
                   {"nondis_auroc", e.row.nondis_auroc},
                   {"d_dis", e.row.d_dis},
                   {"d_nondis", e.row.d_nondis},
                   {"mean_norm_dis", e.row.mean_dis},
                   {"mean_norm_nondis", e.row.mean_nondis}});
  }
  summary["classwise"] = cws;
  summary["decomposition"] = {{"transform", transform_label({result.decomposition.kind, result.decomposition.split})},
                              {"split", result.decomposition.split}};
  if (!result.decomposition.log.empty()) {
    Json log = Json::array();
    for (const auto& e : result.decomposition.log) {
      log.push_back({{"iteration", e.iteration},
                     {"term1", e.term1},
                     {"term2", e.term2},
                     {"loss_theta", e.loss_theta},
                     {"loss_phi", e.loss_phi},
                     {"head_accuracy", e.head_accuracy},
                     {"probe_accuracy", e.probe_accuracy},
                     {"max_sigma", e.max_sigma}});
    }
    summary["decomposition"]["train_log"] = log;
  }
  if (result.audit) {
    summary["audit"] = {{"head_accuracy", result.audit->head_accuracy},
                        {"probe_accuracy", result.audit->probe_accuracy},
                        {"full_probe_accuracy", result.audit->full_probe_accuracy},
                        {"raw_probe_accuracy", result.audit->raw_probe_accuracy}};
  }
  write_json(summary, dir / "summary.json");
}

}  // namespace featdec
