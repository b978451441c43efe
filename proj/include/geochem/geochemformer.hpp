#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "geochem/detectors.hpp"
#include "geochem/nn/layers.hpp"
#include "geochem/spatial.hpp"

namespace geochem {

/// Centering and scales used to turn raw survey coordinates into token inputs.
struct CoordinateFrame {
    double cx = 0.0;
    double cy = 0.0;
    /// Coordinate standard deviation (pooled over x and y) for query tokens.
    double coord_scale = 1.0;
    /// Average sampling distance, the unit of neighbour offsets.
    double offset_scale = 1.0;

    static CoordinateFrame fit(const SpatialIndex& index);
    Point normalize(const Point& p) const { return {(p.x - cx) / coord_scale, (p.y - cy) / coord_scale}; }
    nlohmann::json to_json() const;
    static CoordinateFrame from_json(const nlohmann::json& j);
};

struct NeighborToken {
    Point offset;  // in units of the average sampling distance
    std::vector<double> features;
};

struct SclSequence {
    std::size_t element_token_id = 0;
    Point query_coords;
    /// Exactly K entries, nearest first; padding entries are zero and masked.
    std::vector<NeighborToken> neighbors;
    std::vector<std::size_t> neighbor_ids;
    std::vector<std::uint8_t> mask;  // 1 = real neighbour
};

/// The K nearest other samples of `sample` as Stage-1 tokens.
SclSequence build_neighborhood_tokens(const Eigen::MatrixXd& features, const SpatialIndex& index,
                                      const CoordinateFrame& frame, std::size_t sample, std::size_t k,
                                      std::size_t target_element);

/// Fixed 2-D sinusoidal encoding of normalized coordinates, `width` values.
std::vector<double> sinusoidal_encoding(const Point& p, std::size_t width);

struct GeoChemFormerConfig {
    nn::EncoderConfig encoder;
    std::size_t k = 128;
    std::size_t scl_epochs = 40;
    std::size_t edm_epochs = 100;
    std::size_t batch = 64;
    double lr = 1e-3;
    /// Probability of hiding an element's value token during Stage-2 training.
    double mask_rate = 0.15;
    /// Start the shared Stage-2 decoder at zero.
    bool zero_init_decoder = false;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static GeoChemFormerConfig from_json(const nlohmann::json& j);
};

/// Stage 1: predicts each sample's target-element value from its neighbours
/// and its own coordinates; the hidden state of the query token is the
/// sample's spatial context.
class SpatialContextModel {
public:
    SpatialContextModel() = default;
    SpatialContextModel(const GeoChemFormerConfig& config, std::size_t n_features, std::size_t vocab);

    /// Token matrix [B, K + 2, d] and key mask for a batch of sequences.
    nn::Tensor embed(const std::vector<SclSequence>& batch, std::vector<std::uint8_t>& key_mask) const;
    /// Query-token hidden states [B, d].
    nn::Tensor context(const std::vector<SclSequence>& batch, bool train, Rng* rng) const;
    /// Predicted target values [B].
    nn::Tensor predict(const std::vector<SclSequence>& batch, bool train, Rng* rng) const;

    const nn::ParameterSet& parameters() const { return params_; }
    nn::ParameterSet& parameters() { return params_; }
    std::size_t width() const { return width_; }

private:
    std::size_t width_ = 0;
    std::size_t k_ = 0;
    std::size_t n_features_ = 0;
    nn::Embedding element_;
    nn::Linear query_, neighbor_, head_;
    nn::TransformerEncoder encoder_;
    nn::ParameterSet params_;
};

/// Stage 2: reconstructs every element from [context token, element tokens].
/// Without a context width the model is the plain element transformer (T1).
class ElementModel {
public:
    ElementModel() = default;
    ElementModel(const GeoChemFormerConfig& config, std::size_t n_elements, std::size_t context_width);

    /// Reconstruction [B, C]. `value_mask` (B*C, 1 = keep) hides value tokens;
    /// empty keeps all. `context` is [B, context_width] or undefined for T1.
    nn::Tensor reconstruct(const Eigen::MatrixXd& x, const Eigen::MatrixXd* context,
                           const std::vector<double>& value_mask, bool train, Rng* rng) const;

    bool has_context() const { return context_width_ > 0; }
    const nn::ParameterSet& parameters() const { return params_; }
    nn::ParameterSet& parameters() { return params_; }

private:
    std::size_t n_elements_ = 0;
    std::size_t width_ = 0;
    std::size_t context_width_ = 0;
    nn::Embedding identity_;
    nn::Linear value_, combine_, context_, decoder_;
    nn::TransformerEncoder encoder_;
    nn::ParameterSet params_;
};

/// Mean squared residual over (prediction, target) pairs.
double mean_squared_residual(const std::vector<double>& prediction, const std::vector<double>& target);

/// Two-stage GeoChemFormer (with_context) or the T1 baseline (without).
class GeoChemFormerDetector final : public AnomalyScorer {
public:
    GeoChemFormerDetector(bool with_context, GeoChemFormerConfig config = {});

    DetectorKind kind() const override { return with_context_ ? DetectorKind::GeoChemFormer : DetectorKind::T1; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<GeoChemFormerDetector> restore(const nlohmann::json& j);

    /// Builds untrained models for the given input (used by fit and by tests).
    void initialize(const DetectorInput& input);

    /// Stage-1 sequences for every sample of `input`; neighbours come from the
    /// scored survey itself, coordinates use the fitted frame.
    std::vector<SclSequence> sequences(const DetectorInput& input) const;
    /// Stage-1 loss on a subset of samples (no dropout).
    nn::Tensor scl_loss(const std::vector<SclSequence>& seqs, const Eigen::VectorXd& targets) const;
    /// Stage-1 predictions for every sample.
    std::vector<double> predict_target(const DetectorInput& input) const;
    /// Spatial context q' for every sample [N, d].
    Eigen::MatrixXd spatial_context(const DetectorInput& input) const;
    /// Stage-2 loss on a batch with an explicit value mask (no dropout).
    nn::Tensor edm_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd* context,
                        const std::vector<double>& value_mask) const;
    /// Stage-2 reconstruction of every row.
    Eigen::MatrixXd reconstruct(const DetectorInput& input) const;

    const SpatialContextModel& stage1() const { return stage1_; }
    const ElementModel& stage2() const { return stage2_; }
    const GeoChemFormerConfig& config() const { return config_; }
    /// Mean Stage-1 / Stage-2 training loss per epoch from the last fit.
    const std::vector<double>& scl_history() const { return scl_history_; }
    const std::vector<double>& edm_history() const { return edm_history_; }

private:
    void train_stage1(const DetectorInput& input);
    void train_stage2(const DetectorInput& input);

    bool with_context_;
    GeoChemFormerConfig config_;
    std::size_t n_features_ = 0;
    std::size_t vocab_ = 1;
    std::size_t target_id_ = 0;
    CoordinateFrame frame_;
    SpatialContextModel stage1_;
    ElementModel stage2_;
    std::vector<double> scl_history_;
    std::vector<double> edm_history_;
};

}  // namespace geochem
