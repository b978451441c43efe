#pragma once

#include <memory>

#include "geochem/detectors.hpp"

namespace geochem {

/// Builds an unfitted detector from a config block such as
/// {"kind": "isolation_forest", "trees": 100, "seed": 3}. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
std::unique_ptr<AnomalyScorer> make_detector(const nlohmann::json& block);

/// Block with every hyperparameter filled in (defaults made explicit).
nlohmann::json normalized_detector_block(const nlohmann::json& block);

}  // namespace geochem
