#pragma once

// Structured-text (JSON) documents for fitted models and transforms, plus the
// score table format used between CLI subcommands.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "featdec/density.hpp"
#include "featdec/pipeline.hpp"

namespace featdec {

using Json = nlohmann::ordered_json;

Json to_json(const MatrixXd& m);  // {"rows", "cols", "data" (row-major)}
MatrixXd matrix_from_json(const Json& j);
Json to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);

Json to_json(const DensityModel& model);
DensityModel density_from_json(const Json& j);

Json to_json(const Scorer& scorer);
Scorer scorer_from_json(const Json& j);

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const Decomposition& dec);
Decomposition decomposition_from_json(const Json& j);

Json to_json(const PipelineConfig& cfg);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

/// Score table: header "score" or "score,label", one sample per line.
struct ScoreTable {
  ScoreVector scores;
  std::vector<std::int32_t> labels;  // empty when the table has no label column
};

void save_scores(const std::filesystem::path& path, const ScoreVector& s, const std::vector<std::int32_t>& labels = {});
ScoreTable load_scores(const std::filesystem::path& path);

}  // namespace featdec
