#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geochem/geodata.hpp"
#include "json.hpp"

namespace geochem {

struct SynthConfig {
    std::size_t n_samples = 2000;
    double width = 4000.0;
    double height = 4000.0;
    std::size_t n_elements = 12;
    /// Gaussian smoothing bandwidth of the background fields.
    double correlation_range = 400.0;
    std::size_t n_deposits = 8;
    double halo_radius = 250.0;
    double enrichment_factor = 6.0;
    /// Element enriched around deposits, plus co-enriched pathfinders.
    std::size_t target = 0;
    std::vector<std::size_t> pathfinders = {1, 4, 5};
    /// Number of shared latent fields that correlate the elements.
    std::size_t latent_fields = 3;
    /// Standard deviation of per-sample log-space noise.
    double noise = 0.15;
    std::uint64_t seed = 42;

    void validate() const;
    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

struct GroundTruth {
    std::vector<Point> deposits;
    std::vector<bool> in_halo;
};

struct SynthSurvey {
    Survey survey;
    std::vector<DepositSite> deposits;
    GroundTruth truth;
    std::vector<std::string> warnings;
};

/// Element column names used by the generator, e.g. Au_ppb, Cu_ppm.
std::vector<ElementDescriptor> synth_elements(std::size_t count);

SynthSurvey generate_survey(const SynthConfig& config);

/// Multiplier applied to enriched elements at distance d from a deposit:
/// max(1, factor * exp(-d^2 / (2 (radius / 2)^2))) inside the halo, 1 outside.
double enrichment_at(double distance, double factor, double radius);

/// Writes `<prefix>_survey.csv`, `<prefix>_deposits.csv`, `<prefix>_truth.csv`.
void write_synth_files(const SynthSurvey& synth, const std::string& prefix);

}  // namespace geochem
