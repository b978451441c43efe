#pragma once

#include <cstdint>
#include <memory>

#include "geochem/detectors.hpp"
#include "geochem/nn/layers.hpp"

namespace geochem {

struct AutoEncoderConfig {
    std::size_t hidden = 64;
    std::size_t latent = 16;
    std::size_t epochs = 100;
    std::size_t batch = 64;
    double lr = 1e-3;
    /// KL weight (VAE only).
    double beta = 1.0;
    /// Start the decoder output layer at zero so the untrained model predicts 0.
    bool zero_init_output = false;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AutoEncoderConfig from_json(const nlohmann::json& j);
};

/// KL(N(mu, exp(logvar)) || N(0, 1)) for one latent dimension.
double gaussian_kl(double mu, double logvar);

/// MLP autoencoder C -> hidden -> latent -> hidden -> C with GELU activations.
/// The VAE variant encodes to (mu, logvar) and samples z by reparameterization
/// during training; scoring decodes z = mu.
class AutoEncoderDetector final : public AnomalyScorer {
public:
    AutoEncoderDetector(bool variational, AutoEncoderConfig config = {});

    DetectorKind kind() const override { return variational_ ? DetectorKind::Vae : DetectorKind::AutoEncoder; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<AutoEncoderDetector> restore(const nlohmann::json& j);

    /// Builds fresh weights for `width` input columns without training.
    void initialize(std::size_t width);
    /// Per-row mean squared reconstruction error (deterministic forward pass).
    std::vector<double> reconstruction_error(const Eigen::MatrixXd& x) const;
    /// Training objective on one batch. For the VAE `noise` (rows x latent)
    /// supplies the reparameterization draws; recon MSE plus beta * KL / C,
    /// both averaged over rows.
    nn::Tensor batch_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd* noise) const;

    const nn::ParameterSet& parameters() const { return params_; }
    /// Mean training loss per epoch from the last fit.
    const std::vector<double>& loss_history() const { return history_; }
    const AutoEncoderConfig& config() const { return config_; }

private:
    nn::Tensor encode(const nn::Tensor& x) const;
    nn::Tensor decode(const nn::Tensor& z) const;

    bool variational_;
    AutoEncoderConfig config_;
    std::size_t width_ = 0;
    nn::Linear enc1_, enc2_, dec1_, dec2_;
    nn::ParameterSet params_;
    std::vector<double> history_;
};

nn::Tensor tensor_from_rows(const Eigen::MatrixXd& x);

/// Flat parameter buffers keyed by name.
nlohmann::json parameters_to_json(const nn::ParameterSet& params);
/// Copies named buffers into an already-shaped parameter set.
void parameters_from_json(const nlohmann::json& j, const nn::ParameterSet& params);

}  // namespace geochem
