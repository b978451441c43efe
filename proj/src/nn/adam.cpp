#include "geochem/nn/adam.hpp"

#include <cmath>

#include "geochem/error.hpp"

namespace geochem::nn {

Adam::Adam(const ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
    if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
    for (const auto& [name, t] : params_.items()) {
        m_.emplace_back(t.numel(), 0.0);
        v_.emplace_back(t.numel(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    auto& items = params_.items();
    for (std::size_t p = 0; p < items.size(); ++p) {
        Tensor t = items[p].second;
        if (t.node()->grad.empty()) continue;
        auto& data = t.data();
        const auto& grad = t.node()->grad;
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            data[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
    }
}

}  // namespace geochem::nn
