#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "featdec/decomp.hpp"
#include "featdec/density.hpp"
#include "featdec/metrics.hpp"

namespace featdec {

// ---------------------------------------------------------------------------
// Decomposition selection

enum class TransformKind { Split, Pca, Ice };

struct TransformSpec {
  TransformKind kind = TransformKind::Split;
  Eigen::Index dims = 0;  // split index for split/pca; ignored for ice (d = C)
};

/// Parses "pca", "ice" or "split:<d>". For pca the split comes from `dims`.
TransformSpec parse_transform(std::string_view text, Eigen::Index dims = 0);
std::string transform_label(const TransformSpec& spec);

struct Decomposition {
  TransformKind kind = TransformKind::Split;
  Eigen::Index dim = 0;
  Eigen::Index split = 0;
  std::optional<PcaTransform> pca;
  std::optional<IceModel> ice;
  std::optional<TrainConfig> train_config;
  std::vector<TrainLogEntry> log;
};

Decomposition fit_decomposition(const FeatureSet& train, const TransformSpec& spec, const TrainConfig& cfg = {},
                                const IceObserver& observer = {});
SplitPair apply_decomposition(const Decomposition& dec, const FeatureSet& fs);

// ---------------------------------------------------------------------------
// Fit → decompose → score → evaluate

struct PipelineConfig {
  ScorerKind scorer = ScorerKind::Maha;
  RelativeBase relative_base = RelativeBase::SharedMaha;
  TransformSpec transform;
  std::optional<double> epsilon;
  KnnKlOptions knn;
  bool normalize = true;  // normalize before averaging into the combined score
  TrainConfig ice;
  Eigen::Index hist_bins = 50;
};

struct NamedSet {
  std::string name;
  FeatureSet data;
};

struct AurocRow {
  std::string feature;  // full | dis | nondis | combined
  std::string ood;      // OoD set name, or "union"
  double auroc = 0;
};

struct DistanceRow {
  std::string ood;
  DistanceReport report;
};

struct ClasswiseEntry {
  std::string name;
  ClasswiseRow row;
};

struct ScoreSets {
  ScoreVector train, in;
  std::vector<ScoreVector> out;  // aligned with PipelineResult::ood_names
};

struct DecompositionAudit {
  double head_accuracy = 0;       // argmax of z_d on test-in (iCE only)
  double probe_accuracy = 0;      // fresh probe on frozen z_n, train → test-in
  double full_probe_accuracy = 0; // fresh probe on the full transformed features
  double raw_probe_accuracy = 0;  // fresh probe on the raw features
};

struct PipelineResult {
  std::vector<std::string> ood_names;
  std::vector<AurocRow> aurocs;
  std::vector<DistanceRow> distances;
  std::vector<ClasswiseEntry> classwise;
  ScoreSets full, dis, nondis, combined;
  Decomposition decomposition;
  std::optional<DecompositionAudit> audit;

  /// AUROC lookup; throws InvalidArgument when absent.
  double auroc_of(std::string_view feature, std::string_view ood) const;
};

/// `audit` additionally trains fresh linear probes on the decomposed
/// features (requires labeled test_in). `observer` is forwarded to iCE
/// training.
PipelineResult run_pipeline(const FeatureSet& train, const FeatureSet& test_in, const std::vector<NamedSet>& oods,
                            const PipelineConfig& cfg, bool audit = false, const IceObserver& observer = {});

// ---------------------------------------------------------------------------
// Toy reproductions

struct ReproOptions {
  std::uint64_t seed = 0;
  bool use_ice = false;           // toy128 only
  bool literal_variance = false;  // toy2d only
  PipelineConfig pipeline;
  IceObserver observer;           // toy128 with iCE only
};

/// Writes nothing; generates data (rounded to 32-bit floats as the files
/// would be) and runs the pipeline with the ground-truth axis split.
PipelineResult run_repro_toy2d(const ReproOptions& opts);
PipelineResult run_repro_toy128(const ReproOptions& opts);

// ---------------------------------------------------------------------------
// Reports

/// Writes auroc.csv, distance.csv, classwise.csv, summary.json, score and
/// histogram tables under `dir`.
void write_reports(const PipelineResult& result, const PipelineConfig& cfg, const std::filesystem::path& dir);

std::string format_percent(double value);

}  // namespace featdec
