#include "featdec/featstore.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace featdec {

namespace {

constexpr std::array<unsigned char, 4> kMagic{0x4F, 0x44, 0x46, 0x31};  // "ODF1"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  const U bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) {
      throw Error(ErrorCode::FormatError, "truncated file " + path_.string());
    }
    std::make_unsigned_t<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(bits);
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::string& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::int32_t infer_classes(const std::vector<std::int32_t>& labels) {
  std::int32_t c = 0;
  for (auto l : labels) c = std::max(c, l + 1);
  return c;
}

FeatureSet load_binary(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data, path);
  for (unsigned char m : kMagic) {
    if (static_cast<unsigned char>(r.get<std::uint8_t>()) != m) {
      throw Error(ErrorCode::FormatError, "bad magic in " + path.string());
    }
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw Error(ErrorCode::FormatError, "unsupported version " + std::to_string(version));
  }
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  const unsigned __int128 payload = static_cast<unsigned __int128>(n) * (4u + 4ull * d);
  if (payload != r.remaining()) {
    throw Error(ErrorCode::FormatError, "payload size does not match header in " + path.string());
  }
  if (c > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
    throw Error(ErrorCode::FormatError, "class count out of range");
  }
  std::vector<std::int32_t> labels(n);
  for (auto& l : labels) l = r.get<std::int32_t>();
  MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      features(i, j) = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
  FeatureSet fs;
  fs.features = std::move(features);
  fs.labels = std::move(labels);
  fs.classes = static_cast<std::int32_t>(c);
  fs.validate();
  return fs;
}

void save_binary(const FeatureSet& fs, const std::filesystem::path& path) {
  std::string out;
  out.reserve(24 + static_cast<std::size_t>(fs.n()) * (4 + 4 * static_cast<std::size_t>(fs.d())));
  for (unsigned char m : kMagic) out.push_back(static_cast<char>(m));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(fs.n()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs.d()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs.classes));
  for (auto l : fs.labels) put_le<std::int32_t>(out, l);
  for (Eigen::Index i = 0; i < fs.n(); ++i)
    for (Eigen::Index j = 0; j < fs.d(); ++j)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(fs.features(i, j))));
  write_file(path, out);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

template <typename T>
T parse_number(std::string_view cell, const std::filesystem::path& path, std::size_t line_no) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                                            std::string(cell) + "'");
  }
  return value;
}

FeatureSet load_csv(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "empty csv " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "label") {
    throw Error(ErrorCode::FormatError, "csv header must start with 'label' in " + path.string());
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 1] != "f" + std::to_string(j)) {
      throw Error(ErrorCode::FormatError, "unexpected csv column '" + std::string(header[j + 1]) + "'");
    }
  }
  std::vector<std::int32_t> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) {
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(d + 1) + " columns");
    }
    labels.push_back(parse_number<std::int32_t>(cells[0], path, line_no));
    for (std::size_t j = 0; j < d; ++j) {
      const double v = parse_number<double>(cells[j + 1], path, line_no);
      values.push_back(static_cast<double>(static_cast<float>(v)));
    }
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  MatrixXd features(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j)
      features(i, j) = values[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
  FeatureSet fs;
  fs.features = std::move(features);
  fs.classes = infer_classes(labels);
  fs.labels = std::move(labels);
  fs.validate();
  return fs;
}

void save_csv(const FeatureSet& fs, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "label";
  for (Eigen::Index j = 0; j < fs.d(); ++j) out << ",f" << j;
  out << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (Eigen::Index i = 0; i < fs.n(); ++i) {
    out << fs.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < fs.d(); ++j) out << ',' << static_cast<float>(fs.features(i, j));
    out << '\n';
  }
  write_file(path, out.str());
}

}  // namespace

FeatureSet::FeatureSet(MatrixXd f, std::vector<std::int32_t> l, std::int32_t c)
    : features(std::move(f)), labels(std::move(l)), classes(c) {
  validate();
}

FeatureSet FeatureSet::unlabeled(MatrixXd f) {
  std::vector<std::int32_t> labels(static_cast<std::size_t>(f.rows()), -1);
  return FeatureSet(std::move(f), std::move(labels), 0);
}

void FeatureSet::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "label count " + std::to_string(labels.size()) +
                                                  " != sample count " + std::to_string(features.rows()));
  }
  if (classes < 0) throw Error(ErrorCode::LabelOutOfRange, "negative class count");
  for (auto l : labels) {
    if (l < -1 || l >= classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(l) + " outside [-1, " + std::to_string(classes) + ")");
    }
  }
}

std::vector<Eigen::Index> FeatureSet::class_counts() const {
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(classes), 0);
  for (auto l : labels)
    if (l >= 0) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

FileFormat parse_format(std::string_view name) {
  if (name == "binary" || name == "odf") return FileFormat::Binary;
  if (name == "csv") return FileFormat::Csv;
  throw Error(ErrorCode::InvalidArgument, "unknown format '" + std::string(name) + "'");
}

FileFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

FeatureSet load_featureset(const std::filesystem::path& path, FileFormat format) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FormatError, "no such file " + path.string());
  return format == FileFormat::Binary ? load_binary(path) : load_csv(path);
}

FeatureSet load_featureset(const std::filesystem::path& path) { return load_featureset(path, format_from_path(path)); }

void save_featureset(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format) {
  fs.validate();
  if (format == FileFormat::Binary)
    save_binary(fs, path);
  else
    save_csv(fs, path);
}

void save_featureset(const FeatureSet& fs, const std::filesystem::path& path) {
  save_featureset(fs, path, format_from_path(path));
}

FeatureSet quantize_f32(FeatureSet fs) {
  fs.features = fs.features.cast<float>().cast<double>();
  return fs;
}

std::string_view toy_case_name(ToyCase c) { return c == ToyCase::Toy2d ? "toy2d" : "toy128"; }

ToyCase parse_toy_case(std::string_view name) {
  if (name == "toy2d") return ToyCase::Toy2d;
  if (name == "toy128") return ToyCase::Toy128;
  throw Error(ErrorCode::InvalidArgument, "unknown toy case '" + std::string(name) + "'");
}

ToySpec ToySpec::resolved() const {
  ToySpec s = *this;
  const bool two = kind == ToyCase::Toy2d;
  if (s.train_per_class == 0) s.train_per_class = two ? 5000 : 1000;
  if (s.test_per_class == 0) s.test_per_class = two ? 2000 : 500;
  if (s.ood_count == 0) s.ood_count = two ? 2000 : 5000;
  if (s.train_per_class < 1 || s.test_per_class < 1 || s.ood_count < 1) {
    throw Error(ErrorCode::InvalidArgument, "toy sample counts must be >= 1");
  }
  return s;
}

namespace {

FeatureSet class_blocks(Rng& rng, const std::vector<VectorXd>& means, const SpdFactor<double>& cov,
                        Eigen::Index per_class) {
  const auto classes = static_cast<Eigen::Index>(means.size());
  MatrixXd x(classes * per_class, cov.dim());
  std::vector<std::int32_t> labels;
  labels.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index c = 0; c < classes; ++c) {
    x.middleRows(c * per_class, per_class) = gaussian_sample(rng, means[static_cast<std::size_t>(c)], cov, per_class);
    labels.insert(labels.end(), static_cast<std::size_t>(per_class), static_cast<std::int32_t>(c));
  }
  return FeatureSet(std::move(x), std::move(labels), static_cast<std::int32_t>(classes));
}

}  // namespace

ToyData gen_toy2d(const ToySpec& input) {
  const ToySpec spec = input.resolved();
  if (spec.kind != ToyCase::Toy2d) throw Error(ErrorCode::InvalidArgument, "gen_toy2d: spec is not toy2d");
  const double in_var = spec.literal_variance ? 0.5 : 0.5 * 0.5;
  const double ood_var = spec.literal_variance ? 0.3 : 0.3 * 0.3;
  const auto in_cov = scaled_identity_factor<double>(2, in_var);
  const auto ood_cov = scaled_identity_factor<double>(2, ood_var);
  const std::vector<VectorXd> means{VectorXd::Map(std::array{3.0, 0.0}.data(), 2),
                                    VectorXd::Map(std::array{-3.0, 0.0}.data(), 2)};

  Rng rng(spec.seed);
  ToyData out;
  out.train = class_blocks(rng, means, in_cov, spec.train_per_class);
  out.test_in = class_blocks(rng, means, in_cov, spec.test_per_class);
  const VectorXd red = VectorXd::Map(std::array{1.6, 0.0}.data(), 2);
  const VectorXd green = VectorXd::Map(std::array{3.0, 1.4}.data(), 2);
  out.ood_dis = FeatureSet::unlabeled(gaussian_sample(rng, red, ood_cov, spec.ood_count));
  out.ood_nondis = FeatureSet::unlabeled(gaussian_sample(rng, green, ood_cov, spec.ood_count));
  return out;
}

ToyData gen_toy128(const ToySpec& input) {
  const ToySpec spec = input.resolved();
  if (spec.kind != ToyCase::Toy128) throw Error(ErrorCode::InvalidArgument, "gen_toy128: spec is not toy128");
  constexpr Eigen::Index kDim = 128;
  constexpr Eigen::Index kClasses = 10;
  const auto cov = scaled_identity_factor<double>(kDim, 1.0);
  std::vector<VectorXd> means;
  for (Eigen::Index c = 0; c < kClasses; ++c) means.push_back(10.0 * VectorXd::Unit(kDim, c));

  Rng rng(spec.seed);
  ToyData out;
  out.train = class_blocks(rng, means, cov, spec.train_per_class);
  out.test_in = class_blocks(rng, means, cov, spec.test_per_class);

  const VectorXd zero = VectorXd::Zero(kDim);
  MatrixXd dis = gaussian_sample(rng, zero, cov, spec.ood_count);
  for (Eigen::Index i = 0; i < dis.rows(); ++i) dis(i, rng.uniform_int(0, kClasses - 1)) += 5.0;
  MatrixXd nondis = gaussian_sample(rng, zero, cov, spec.ood_count);
  for (Eigen::Index i = 0; i < nondis.rows(); ++i) {
    nondis(i, rng.uniform_int(0, kClasses - 1)) += 10.0;
    nondis(i, rng.uniform_int(kClasses, kDim - 1)) += 5.0;
  }
  out.ood_dis = FeatureSet::unlabeled(std::move(dis));
  out.ood_nondis = FeatureSet::unlabeled(std::move(nondis));
  return out;
}

ToyData gen_toy(const ToySpec& spec) {
  return spec.kind == ToyCase::Toy2d ? gen_toy2d(spec) : gen_toy128(spec);
}

SplitPair split_dims(const FeatureSet& fs, Eigen::Index d) {
  if (d <= 0 || d >= fs.d()) {
    throw Error(ErrorCode::BadSplit, "split index " + std::to_string(d) + " outside (0, " + std::to_string(fs.d()) + ")");
  }
  SplitPair out;
  out.first = FeatureSet(fs.features.leftCols(d), fs.labels, fs.classes);
  out.rest = FeatureSet(fs.features.rightCols(fs.d() - d), fs.labels, fs.classes);
  return out;
}

FeatureSet concat_dims(const FeatureSet& left, const FeatureSet& right) {
  if (left.n() != right.n()) throw Error(ErrorCode::DimensionMismatch, "concat_dims: row counts differ");
  MatrixXd f(left.n(), left.d() + right.d());
  f << left.features, right.features;
  return FeatureSet(std::move(f), left.labels, left.classes);
}

FeatureSet concat_rows(const FeatureSet& top, const FeatureSet& bottom) {
  if (top.d() != bottom.d()) throw Error(ErrorCode::DimensionMismatch, "concat_rows: feature dims differ");
  MatrixXd f(top.n() + bottom.n(), top.d());
  f << top.features, bottom.features;
  if (top.labeled() && bottom.labeled()) {
    auto labels = top.labels;
    labels.insert(labels.end(), bottom.labels.begin(), bottom.labels.end());
    return FeatureSet(std::move(f), std::move(labels), std::max(top.classes, bottom.classes));
  }
  return FeatureSet::unlabeled(std::move(f));
}

FeatureSet select_class(const FeatureSet& fs, std::int32_t label) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < fs.n(); ++i)
    if (fs.labels[static_cast<std::size_t>(i)] == label) rows.push_back(i);
  MatrixXd f(static_cast<Eigen::Index>(rows.size()), fs.d());
  for (std::size_t r = 0; r < rows.size(); ++r) f.row(static_cast<Eigen::Index>(r)) = fs.features.row(rows[r]);
  return FeatureSet(std::move(f), std::vector<std::int32_t>(rows.size(), label), fs.classes);
}

}  // namespace featdec
