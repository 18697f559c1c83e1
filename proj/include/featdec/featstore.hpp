#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "featdec/numkit.hpp"

namespace featdec {

/// n×d feature matrix (one sample per row) with optional integer labels.
/// Unlabeled sets have classes == 0 and every label equal to -1.
struct FeatureSet {
  MatrixXd features;
  std::vector<std::int32_t> labels;
  std::int32_t classes = 0;

  FeatureSet() = default;
  FeatureSet(MatrixXd f, std::vector<std::int32_t> l, std::int32_t c);

  /// Unlabeled set over `f`.
  static FeatureSet unlabeled(MatrixXd f);

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }
  bool labeled() const { return classes > 0; }

  /// Throws LabelOutOfRange / DimensionMismatch on broken invariants.
  void validate() const;

  /// Per-class sample counts; requires labeled().
  std::vector<Eigen::Index> class_counts() const;
};

enum class FileFormat { Binary, Csv };

FileFormat parse_format(std::string_view name);
/// Binary for everything except a `.csv` extension.
FileFormat format_from_path(const std::filesystem::path& path);

FeatureSet load_featureset(const std::filesystem::path& path, FileFormat format);
FeatureSet load_featureset(const std::filesystem::path& path);
void save_featureset(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format);
void save_featureset(const FeatureSet& fs, const std::filesystem::path& path);

/// Rounds every feature to the nearest 32-bit float, i.e. what a save/load
/// cycle through the binary format does.
FeatureSet quantize_f32(FeatureSet fs);

enum class ToyCase { Toy2d, Toy128 };

std::string_view toy_case_name(ToyCase c);
ToyCase parse_toy_case(std::string_view name);

struct ToySpec {
  ToyCase kind = ToyCase::Toy2d;
  Eigen::Index train_per_class = 0;  // 0 selects the case default
  Eigen::Index test_per_class = 0;
  Eigen::Index ood_count = 0;
  std::uint64_t seed = 0;
  /// toy2d only: treat 0.5 / 0.3 as per-coordinate variances instead of
  /// standard deviations.
  bool literal_variance = false;

  /// Copy with every zero count replaced by the case default.
  ToySpec resolved() const;
};

struct ToyData {
  FeatureSet train;
  FeatureSet test_in;
  FeatureSet ood_dis;
  FeatureSet ood_nondis;
};

/// Two classes at (±3, 0) and OoD populations at (1.6, 0) (discriminative)
/// and (3, 1.4) (non-discriminative).
ToyData gen_toy2d(const ToySpec& spec);

/// Ten classes at 10·e_c in 128 dimensions with identity covariance. OoD
/// along discriminative axes sits at 5·e_k, k < 10; OoD along
/// non-discriminative axes at 10·e_c + 5·e_l with l >= 10 (zero-based).
ToyData gen_toy128(const ToySpec& spec);

ToyData gen_toy(const ToySpec& spec);

struct SplitPair {
  FeatureSet first;
  FeatureSet rest;
};

/// Columns [0, d) and [d, fs.d()); labels copied into both halves.
SplitPair split_dims(const FeatureSet& fs, Eigen::Index d);

/// Column-wise concatenation; labels taken from `left`.
FeatureSet concat_dims(const FeatureSet& left, const FeatureSet& right);

/// Row-wise concatenation. Labels kept only when both sides are labeled.
FeatureSet concat_rows(const FeatureSet& top, const FeatureSet& bottom);

/// Rows with the given label.
FeatureSet select_class(const FeatureSet& fs, std::int32_t label);

}  // namespace featdec
