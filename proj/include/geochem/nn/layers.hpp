#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geochem/nn/ops.hpp"
#include "geochem/nn/tensor.hpp"
#include "geochem/random.hpp"

namespace geochem::nn {

/// Ordered, named view of a model's trainable tensors. Names are stable and
/// double as snapshot keys.
class ParameterSet {
public:
    void add(std::string name, Tensor tensor) { items_.emplace_back(std::move(name), std::move(tensor)); }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    /// Total scalar count.
    std::size_t count() const;
    void zero_grad();
    const Tensor& get(const std::string& name) const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

/// Xavier-uniform weights, zero bias.
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParameterSet& params) const;
    /// Zeroes weight and bias, e.g. for an output layer that must start at 0.
    void zero();

    Tensor weight;
    Tensor bias;
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t width);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParameterSet& params) const;

    Tensor gain;
    Tensor bias;
};

/// Learned lookup table.
class Embedding {
public:
    Embedding() = default;
    Embedding(std::size_t vocab, std::size_t width, Rng& rng);

    Tensor forward(const std::vector<std::size_t>& ids, Shape prefix) const;
    void collect(const std::string& prefix, ParameterSet& params) const;

    Tensor table;
};

/// Query/key/value/output projections around the fused attention op.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng);

    Tensor forward(const Tensor& query, const Tensor& key, const Tensor& value,
                   const std::vector<std::uint8_t>& key_mask = {}) const;
    void collect(const std::string& prefix, ParameterSet& params) const;

    std::size_t heads = 1;
    Linear wq, wk, wv, wo;
};

struct EncoderConfig {
    std::size_t layers = 2;
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t ff_width = 128;
    double dropout = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Pre-norm block: x + MHA(LN(x)), then x + FF(LN(x)) with a GELU MLP.
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(const EncoderConfig& config, Rng& rng);

    /// `rng` is only consulted when `train` is set and dropout is positive.
    Tensor forward(const Tensor& x, const std::vector<std::uint8_t>& key_mask, bool train, Rng* rng) const;
    void collect(const std::string& prefix, ParameterSet& params) const;

    double dropout = 0.0;
    LayerNorm norm_attn, norm_ff;
    MultiHeadAttention attn;
    Linear ff_in, ff_out;
};

/// Stack of encoder layers followed by a final layer norm.
class TransformerEncoder {
public:
    TransformerEncoder() = default;
    TransformerEncoder(const EncoderConfig& config, Rng& rng);

    Tensor forward(const Tensor& x, const std::vector<std::uint8_t>& key_mask, bool train, Rng* rng) const;
    void collect(const std::string& prefix, ParameterSet& params) const;

    std::vector<EncoderLayer> layers;
    LayerNorm final_norm;
};

}  // namespace geochem::nn
