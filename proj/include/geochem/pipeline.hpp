#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geochem/compositional.hpp"
#include "geochem/detectors.hpp"
#include "geochem/eval.hpp"
#include "geochem/spatial.hpp"
#include "json.hpp"

namespace geochem {

struct DatasetConfig {
    std::string name;
    std::filesystem::path survey;
    std::filesystem::path deposits;
    /// Target element symbol, e.g. "Au".
    std::string target;
    /// Restrict ingestion to these symbols (all when absent).
    std::optional<std::vector<std::string>> elements;
};

struct PreprocessConfig {
    AbnormalStrategy abnormal = AbnormalStrategy::HalfDetectionLimit;
    TransformSpace transform = TransformSpace::Clr;
    bool standardize = true;
    SelectionStrategy selection = SelectionStrategy::All;
    /// Manual selection by element symbol.
    std::vector<std::string> selected;
    double pca_variance = 0.95;
    /// Manual selection only: keep the listed elements first and transform
    /// that subcomposition, instead of transforming the full composition.
    bool select_first = false;

    nlohmann::json to_json() const;
    static PreprocessConfig from_json(const nlohmann::json& j);
};

struct PipelineConfig {
    std::vector<DatasetConfig> datasets;
    PreprocessConfig preprocess;
    /// Raw detector blocks; each may carry a "label" used in file names.
    std::vector<nlohmann::json> detectors;
    EvalProtocol protocol;
    std::filesystem::path output_dir;
    bool parallel = false;
    bool save_models = false;

    /// Paths in the file are resolved against `base_dir`. An empty
    /// output_dir falls back to `default_output`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                    const std::filesystem::path& default_output = "geochem_out");
    static PipelineConfig load(const std::filesystem::path& path,
                               const std::filesystem::path& default_output = "geochem_out");
};

/// A survey turned into detector input, plus the constants needed to repeat it.
struct PreparedSurvey {
    Survey survey;  // after abnormal-value handling
    CompositionMatrix matrix;  // transformed, standardized, selected
    DetectorInput input;
    std::vector<std::string> warnings;
    nlohmann::json metadata;
};

PreparedSurvey prepare_survey(const Survey& raw, const std::string& target, const PreprocessConfig& config);

/// Label of a detector block: its "label" key or its kind.
std::string detector_label(const nlohmann::json& block);

/// Scored CSV: SAMPLEID,x,y,score with 10 significant digits.
void write_scored_csv(const Survey& survey, const std::vector<double>& scores, const std::string& path);

struct ScoredPoint {
    std::string id;
    Point position;
    double score = 0.0;
};

std::vector<ScoredPoint> read_scored_csv(const std::string& path);

struct RunSummary {
    /// Mean AUC per (dataset, detector label).
    std::vector<std::string> datasets;
    std::vector<std::string> detectors;
    std::vector<std::vector<double>> mean_auc;
};

/// Full pipeline. Writes, under output_dir/<dataset>/, <label>_scores.csv and
/// <label>_report.json (and <label>_model.json when save_models is set), plus
/// comparison.csv, comparison_rows.csv and manifest.json at the top level.
/// On failure the manifest records the failing stage before the error is
/// rethrown with the stage named.
RunSummary run_pipeline(const PipelineConfig& config);

struct SurveyStats {
    std::size_t samples = 0;
    std::size_t elements = 0;
    double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
    double avg_sampling_distance = 0.0;
};

SurveyStats survey_stats(const Survey& survey);

}  // namespace geochem
