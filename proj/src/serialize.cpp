#include "featdec/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace featdec {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::FormatError, std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("field '") + key + "': " + e.what());
  }
}

Json factor_json(const SpdFactor<double>& f) { return Json{{"lower", to_json(f.lower)}, {"log_det", f.log_det}}; }

SpdFactor<double> factor_from_json(const Json& j) {
  SpdFactor<double> f;
  f.lower = matrix_from_json(field(j, "lower"));
  f.log_det = get<double>(j, "log_det");
  if (f.lower.rows() != f.lower.cols()) throw Error(ErrorCode::FormatError, "factor is not square");
  return f;
}

std::string_view kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::Split: return "split";
    case TransformKind::Pca: return "pca";
    case TransformKind::Ice: return "ice";
  }
  return "unknown";
}

TransformKind parse_kind(std::string_view s) {
  if (s == "split") return TransformKind::Split;
  if (s == "pca") return TransformKind::Pca;
  if (s == "ice") return TransformKind::Ice;
  throw Error(ErrorCode::FormatError, "unknown transform kind '" + std::string(s) + "'");
}

}  // namespace

Json to_json(const MatrixXd& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[at++] = m(r, c);
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const Json& j) {
  const auto rows = get<Eigen::Index>(j, "rows");
  const auto cols = get<Eigen::Index>(j, "cols");
  const auto data = get<std::vector<double>>(j, "data");
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw Error(ErrorCode::FormatError, "matrix data size does not match rows × cols");
  }
  MatrixXd m(rows, cols);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[at++];
  return m;
}

Json to_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

VectorXd vector_from_json(const Json& j) {
  std::vector<double> data;
  try {
    data = j.get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("vector: ") + e.what());
  }
  return Eigen::Map<const VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Json to_json(const DensityModel& model) {
  Json means = Json::array(), factors = Json::array();
  for (const auto& m : model.means) means.push_back(to_json(m));
  for (const auto& f : model.factors) factors.push_back(factor_json(f));
  return Json{{"variant", variant_name(model.variant)},
              {"dim", model.dim},
              {"classes", model.classes},
              {"epsilon", model.epsilon},
              {"means", means},
              {"factors", factors}};
}

DensityModel density_from_json(const Json& j) {
  DensityModel m;
  try {
    m.variant = parse_variant(get<std::string>(j, "variant"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError) throw;
    throw Error(ErrorCode::FormatError, e.what());
  }
  m.dim = get<Eigen::Index>(j, "dim");
  m.classes = get<std::int32_t>(j, "classes");
  m.epsilon = get<double>(j, "epsilon");
  for (const auto& mj : field(j, "means")) m.means.push_back(vector_from_json(mj));
  for (const auto& fj : field(j, "factors")) m.factors.push_back(factor_from_json(fj));
  for (const auto& mu : m.means)
    if (mu.size() != m.dim) throw Error(ErrorCode::FormatError, "mean dimension does not match model dim");
  for (const auto& f : m.factors)
    if (f.dim() != m.dim) throw Error(ErrorCode::FormatError, "factor dimension does not match model dim");
  const std::size_t expect_means = m.variant == Variant::Marginal ? 1 : static_cast<std::size_t>(m.classes);
  const std::size_t expect_factors = m.variant == Variant::ClasswiseGda ? expect_means : 1;
  if (m.means.size() != expect_means || m.factors.size() != expect_factors) {
    throw Error(ErrorCode::FormatError, "density model has the wrong number of means or factors");
  }
  return m;
}

Json to_json(const Scorer& scorer) {
  Json j{{"scorer", scorer_name(scorer.kind)},
         {"relative_base", scorer.relative_base == RelativeBase::SharedMaha ? "shared_maha" : "classwise_gda"},
         {"model", to_json(scorer.model)}};
  if (scorer.marginal) j["marginal"] = to_json(*scorer.marginal);
  return j;
}

Scorer scorer_from_json(const Json& j) {
  Scorer s;
  try {
    s.kind = parse_scorer(get<std::string>(j, "scorer"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError) throw;
    throw Error(ErrorCode::FormatError, e.what());
  }
  const auto base = get<std::string>(j, "relative_base");
  if (base == "shared_maha") s.relative_base = RelativeBase::SharedMaha;
  else if (base == "classwise_gda") s.relative_base = RelativeBase::ClasswiseGda;
  else throw Error(ErrorCode::FormatError, "unknown relative_base '" + base + "'");
  s.model = density_from_json(field(j, "model"));
  if (j.contains("marginal")) s.marginal = density_from_json(j.at("marginal"));
  if (s.kind == ScorerKind::Relative && !s.marginal) {
    throw Error(ErrorCode::FormatError, "relative scorer without a marginal model");
  }
  return s;
}

Json to_json(const TrainConfig& cfg) {
  return Json{{"iterations", cfg.iterations}, {"lr_theta", cfg.lr_theta},     {"lr_phi", cfg.lr_phi},
              {"batch", cfg.batch},           {"probe_batch", cfg.probe_batch}, {"probe_steps", cfg.probe_steps},
              {"seed", cfg.seed},             {"layers", cfg.layers},         {"kappa", cfg.kappa},
              {"init_scale", cfg.init_scale}, {"log_every", cfg.log_every}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.iterations = get<std::size_t>(j, "iterations");
  c.lr_theta = get<double>(j, "lr_theta");
  c.lr_phi = get<double>(j, "lr_phi");
  c.batch = get<Eigen::Index>(j, "batch");
  c.probe_batch = get<Eigen::Index>(j, "probe_batch");
  c.probe_steps = get<std::size_t>(j, "probe_steps");
  c.seed = get<std::uint64_t>(j, "seed");
  c.layers = get<std::size_t>(j, "layers");
  c.kappa = get<double>(j, "kappa");
  c.init_scale = get<double>(j, "init_scale");
  c.log_every = get<std::size_t>(j, "log_every");
  return c;
}

Json to_json(const Decomposition& dec) {
  Json j{{"transform", kind_name(dec.kind)}, {"dim", dec.dim}, {"split", dec.split}};
  if (dec.pca) {
    j["pca"] = {{"mean", to_json(dec.pca->mean)},
                {"components", to_json(dec.pca->components)},
                {"variances", to_json(dec.pca->variances)}};
  }
  if (dec.ice) {
    const auto& net = dec.ice->net;
    Json layers = Json::array();
    for (const auto& l : net.layers) {
      layers.push_back({{"weight", to_json(l.weight)},
                        {"bias", to_json(l.bias)},
                        {"scale", l.scale},
                        {"power_u", to_json(l.power.u)},
                        {"power_v", to_json(l.power.v)},
                        {"sigma", l.power.sigma}});
    }
    j["ice"] = {{"classes", dec.ice->classes},
                {"kappa", net.kappa},
                {"layers", layers},
                {"probe_weight", to_json(dec.ice->probe_weight)},
                {"probe_bias", to_json(dec.ice->probe_bias)}};
  }
  if (dec.train_config) j["train_config"] = to_json(*dec.train_config);
  return j;
}

Decomposition decomposition_from_json(const Json& j) {
  Decomposition dec;
  dec.kind = parse_kind(get<std::string>(j, "transform"));
  dec.dim = get<Eigen::Index>(j, "dim");
  dec.split = get<Eigen::Index>(j, "split");
  if (dec.split <= 0 || dec.split >= dec.dim) throw Error(ErrorCode::FormatError, "split outside (0, dim)");
  if (dec.kind == TransformKind::Pca) {
    const Json& p = field(j, "pca");
    PcaTransform t;
    t.mean = vector_from_json(field(p, "mean"));
    t.components = matrix_from_json(field(p, "components"));
    t.variances = vector_from_json(field(p, "variances"));
    t.split = dec.split;
    if (t.mean.size() != dec.dim || t.components.rows() != dec.dim || t.components.cols() != dec.dim ||
        t.variances.size() != dec.dim) {
      throw Error(ErrorCode::FormatError, "pca shapes do not match dim");
    }
    dec.pca = std::move(t);
  }
  if (dec.kind == TransformKind::Ice) {
    const Json& ij = field(j, "ice");
    IceModel m;
    m.classes = get<std::int32_t>(ij, "classes");
    m.net.dim = dec.dim;
    m.net.kappa = get<double>(ij, "kappa");
    for (const auto& lj : field(ij, "layers")) {
      ResidualLayer l;
      l.weight = matrix_from_json(field(lj, "weight"));
      l.bias = vector_from_json(field(lj, "bias"));
      l.scale = get<double>(lj, "scale");
      l.power.u = vector_from_json(field(lj, "power_u"));
      l.power.v = vector_from_json(field(lj, "power_v"));
      l.power.sigma = get<double>(lj, "sigma");
      if (l.weight.rows() != dec.dim || l.weight.cols() != dec.dim || l.bias.size() != dec.dim) {
        throw Error(ErrorCode::FormatError, "layer shapes do not match dim");
      }
      m.net.layers.push_back(std::move(l));
    }
    m.probe_weight = matrix_from_json(field(ij, "probe_weight"));
    m.probe_bias = vector_from_json(field(ij, "probe_bias"));
    if (m.classes != dec.split || m.probe_weight.rows() != m.classes || m.probe_weight.cols() != dec.dim - m.classes ||
        m.probe_bias.size() != m.classes) {
      throw Error(ErrorCode::FormatError, "probe shapes do not match classes");
    }
    dec.ice = std::move(m);
  }
  if (j.contains("train_config")) dec.train_config = train_config_from_json(j.at("train_config"));
  return dec;
}

Json to_json(const PipelineConfig& cfg) {
  Json j{{"scorer", scorer_name(cfg.scorer)},
         {"relative_base", cfg.relative_base == RelativeBase::SharedMaha ? "shared_maha" : "classwise_gda"},
         {"transform", transform_label(cfg.transform)},
         {"dims", cfg.transform.dims},
         {"epsilon", cfg.epsilon ? Json(*cfg.epsilon) : Json(nullptr)},
         {"knn_k", cfg.knn.k},
         {"clamp_kl", cfg.knn.clamp_at_zero},
         {"normalize", cfg.normalize},
         {"hist_bins", cfg.hist_bins}};
  if (cfg.transform.kind == TransformKind::Ice) j["ice"] = to_json(cfg.ice);
  return j;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void save_scores(const std::filesystem::path& path, const ScoreVector& s, const std::vector<std::int32_t>& labels) {
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != s.size()) {
    throw Error(ErrorCode::LengthMismatch, "score and label counts differ");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << (labels.empty() ? "score\n" : "score,label\n");
  char buf[40];
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, s.values(i));
    out.write(buf, end - buf);
    if (!labels.empty()) out << ',' << labels[static_cast<std::size_t>(i)];
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ScoreTable load_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, path.string() + ": empty score table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_labels = false;
  if (line == "score,label") with_labels = true;
  else if (line != "score") throw Error(ErrorCode::FormatError, path.string() + ": bad score table header");

  std::vector<double> values;
  ScoreTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const char* b = line.data();
    const char* e = b + line.size();
    double v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc()) throw Error(ErrorCode::FormatError, where + ": bad score");
    if (with_labels) {
      if (p == e || *p != ',') throw Error(ErrorCode::FormatError, where + ": missing label");
      std::int32_t l = 0;
      auto [q, ec2] = std::from_chars(p + 1, e, l);
      if (ec2 != std::errc() || q != e) throw Error(ErrorCode::FormatError, where + ": bad label");
      t.labels.push_back(l);
    } else if (p != e) {
      throw Error(ErrorCode::FormatError, where + ": trailing data");
    }
    values.push_back(v);
  }
  t.scores = ScoreVector(Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())), "file");
  return t;
}

}  // namespace featdec
