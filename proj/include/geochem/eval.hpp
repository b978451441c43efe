#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geochem/geodata.hpp"
#include "geochem/spatial.hpp"
#include "json.hpp"

namespace geochem {

struct EvalProtocol {
    std::size_t n_runs = 20;
    std::size_t bg_per_pos = 10;
    /// Radii in multiples of the average sampling distance.
    double match_radius = 5.0;
    double exclusion_radius = 1.0;
    /// Share of top-scored samples used for the distance-to-deposits statistic.
    double dtd_fraction = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static EvalProtocol from_json(const nlohmann::json& j);
};

struct PositiveAssignment {
    std::vector<double> scores;
    /// Sample matched to each kept deposit.
    std::vector<std::size_t> samples;
    std::vector<std::string> matched;
    std::vector<std::string> dropped;
};

/// Each deposit takes the score of its nearest sample when that sample lies
/// within match_radius x `avg_distance`. Throws DataError when none match.
PositiveAssignment assign_positive_scores(const std::vector<double>& scores, const SpatialIndex& index,
                                          const std::vector<DepositSite>& deposits, const EvalProtocol& protocol,
                                          double avg_distance);

/// Uniform draw without replacement of bg_per_pos x n_positive samples that
/// lie farther than exclusion_radius x `avg_distance` from every deposit.
/// A pool smaller than the request is returned whole (sorted) with a warning.
std::vector<std::size_t> sample_background(const SpatialIndex& index, const std::vector<DepositSite>& deposits,
                                           const EvalProtocol& protocol, std::size_t n_positive,
                                           std::uint64_t run_seed, double avg_distance,
                                           std::string* warning = nullptr);

/// Mann-Whitney AUC with half credit for ties.
double roc_auc(const std::vector<double>& pos, const std::vector<double>& bg);

/// Step-interpolated average precision. Tied scores form one threshold, which
/// equals ranking positives after backgrounds within a tie.
double average_precision(const std::vector<double>& pos, const std::vector<double>& bg);

/// Trapezoidal area under the precision-recall points taken at each distinct
/// score threshold, starting from (recall 0, precision of the first threshold).
double pr_auc(const std::vector<double>& pos, const std::vector<double>& bg);

/// Mean distance to the nearest deposit over the top ceil(q N) samples by
/// score (ties resolved by lower sample index).
double distance_to_deposits(const std::vector<double>& scores, const SpatialIndex& index,
                            const std::vector<DepositSite>& deposits, double top_fraction);

struct MetricSummary {
    std::vector<double> runs;
    double mean = 0.0;
    double variance = 0.0;  // population variance

    static MetricSummary from_runs(std::vector<double> runs);
    nlohmann::json to_json() const;
};

struct EvalReport {
    std::string detector;
    std::string config_hash;
    EvalProtocol protocol;
    MetricSummary auc;
    MetricSummary ap;
    MetricSummary pr_auc;
    double dtd = 0.0;
    std::size_t matched_deposits = 0;
    std::vector<std::string> dropped_deposits;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

/// Fixed positives, background resampled with seed + r for r = 1..n_runs.
EvalReport run_protocol(const std::vector<double>& scores, const SpatialIndex& index,
                        const std::vector<DepositSite>& deposits, const EvalProtocol& protocol,
                        const std::string& detector = "", const std::string& config_hash = "");

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace geochem
