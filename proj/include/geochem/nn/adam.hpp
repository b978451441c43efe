#pragma once

#include <cstdint>
#include <vector>

#include "geochem/nn/layers.hpp"

namespace geochem::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed ParameterSet.
class Adam {
public:
    Adam(const ParameterSet& params, AdamConfig config = {});

    /// Applies one update from the gradients currently stored on the parameters.
    void step();

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    ParameterSet params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
};

}  // namespace geochem::nn
