#include "geochem/nn/layers.hpp"

#include <cmath>

#include "geochem/error.hpp"

namespace geochem::nn {

std::size_t ParameterSet::count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& [name, t] : items_) t.zero_grad();
}

const Tensor& ParameterSet::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw ConfigError("no parameter named '" + name + "'");
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-limit, limit);
    weight = Tensor::parameter({in, out}, std::move(w));
    if (with_bias) bias = Tensor::parameter({out}, std::vector<double>(out, 0.0));
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParameterSet& params) const {
    params.add(prefix + ".weight", weight);
    if (bias.defined()) params.add(prefix + ".bias", bias);
}

void Linear::zero() {
    std::fill(weight.data().begin(), weight.data().end(), 0.0);
    if (bias.defined()) std::fill(bias.data().begin(), bias.data().end(), 0.0);
}

LayerNorm::LayerNorm(std::size_t width)
    : gain(Tensor::parameter({width}, std::vector<double>(width, 1.0))),
      bias(Tensor::parameter({width}, std::vector<double>(width, 0.0))) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, ParameterSet& params) const {
    params.add(prefix + ".gain", gain);
    params.add(prefix + ".bias", bias);
}

Embedding::Embedding(std::size_t vocab, std::size_t width, Rng& rng) {
    std::vector<double> t(vocab * width);
    for (auto& x : t) x = rng.normal(0.0, 0.5);
    table = Tensor::parameter({vocab, width}, std::move(t));
}

Tensor Embedding::forward(const std::vector<std::size_t>& ids, Shape prefix) const {
    return embedding(table, ids, std::move(prefix));
}

void Embedding::collect(const std::string& prefix, ParameterSet& params) const {
    params.add(prefix + ".table", table);
}

MultiHeadAttention::MultiHeadAttention(std::size_t width, std::size_t n_heads, Rng& rng)
    : heads(n_heads), wq(width, width, rng), wk(width, width, rng), wv(width, width, rng), wo(width, width, rng) {
    if (n_heads == 0 || width % n_heads != 0) {
        throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& key, const Tensor& value,
                                   const std::vector<std::uint8_t>& key_mask) const {
    Tensor mixed = attention(wq.forward(query), wk.forward(key), wv.forward(value), heads, key_mask);
    return wo.forward(mixed);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterSet& params) const {
    wq.collect(prefix + ".wq", params);
    wk.collect(prefix + ".wk", params);
    wv.collect(prefix + ".wv", params);
    wo.collect(prefix + ".wo", params);
}

void EncoderConfig::validate() const {
    if (layers < 1) throw ConfigError("encoder needs at least one layer");
    if (width < 1 || heads < 1 || width % heads != 0) {
        throw ConfigError("encoder width " + std::to_string(width) + " must be divisible by heads " +
                          std::to_string(heads));
    }
    if (ff_width < 1) throw ConfigError("encoder feed-forward width must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

EncoderLayer::EncoderLayer(const EncoderConfig& config, Rng& rng)
    : dropout(config.dropout),
      norm_attn(config.width),
      norm_ff(config.width),
      attn(config.width, config.heads, rng),
      ff_in(config.width, config.ff_width, rng),
      ff_out(config.ff_width, config.width, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, const std::vector<std::uint8_t>& key_mask, bool train, Rng* rng) const {
    const bool drop = train && dropout > 0.0 && rng != nullptr;
    Tensor h = norm_attn.forward(x);
    Tensor a = attn.forward(h, h, h, key_mask);
    if (drop) a = nn::dropout(a, dropout, *rng);
    Tensor y = add(x, a);
    Tensor f = ff_out.forward(gelu(ff_in.forward(norm_ff.forward(y))));
    if (drop) f = nn::dropout(f, dropout, *rng);
    return add(y, f);
}

void EncoderLayer::collect(const std::string& prefix, ParameterSet& params) const {
    norm_attn.collect(prefix + ".norm_attn", params);
    attn.collect(prefix + ".attn", params);
    norm_ff.collect(prefix + ".norm_ff", params);
    ff_in.collect(prefix + ".ff_in", params);
    ff_out.collect(prefix + ".ff_out", params);
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& config, Rng& rng) : final_norm(config.width) {
    config.validate();
    for (std::size_t l = 0; l < config.layers; ++l) layers.emplace_back(config, rng);
}

Tensor TransformerEncoder::forward(const Tensor& x, const std::vector<std::uint8_t>& key_mask, bool train,
                                   Rng* rng) const {
    Tensor h = x;
    for (const auto& layer : layers) h = layer.forward(h, key_mask, train, rng);
    return final_norm.forward(h);
}

void TransformerEncoder::collect(const std::string& prefix, ParameterSet& params) const {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(prefix + ".layer" + std::to_string(l), params);
    final_norm.collect(prefix + ".final_norm", params);
}

}  // namespace geochem::nn
