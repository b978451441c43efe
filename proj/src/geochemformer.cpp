#include "geochem/geochemformer.hpp"

#include <cmath>
#include <numeric>

#include "geochem/error.hpp"
#include "geochem/nn/adam.hpp"
#include "geochem/nn/autoencoder.hpp"

namespace geochem {

using nlohmann::json;
namespace ag = geochem::nn;

CoordinateFrame CoordinateFrame::fit(const SpatialIndex& index) {
    if (index.size() < 2) throw DataError("spatial context needs at least two samples");
    CoordinateFrame f;
    const double n = static_cast<double>(index.size());
    for (const auto& p : index.points()) {
        f.cx += p.x;
        f.cy += p.y;
    }
    f.cx /= n;
    f.cy /= n;
    double ss = 0.0;
    for (const auto& p : index.points()) ss += (p.x - f.cx) * (p.x - f.cx) + (p.y - f.cy) * (p.y - f.cy);
    f.coord_scale = std::sqrt(ss / (2.0 * n));
    if (!(f.coord_scale > 0.0)) f.coord_scale = 1.0;
    f.offset_scale = average_sampling_distance(index);
    if (!(f.offset_scale > 0.0)) f.offset_scale = 1.0;
    return f;
}

json CoordinateFrame::to_json() const {
    return json{{"cx", cx}, {"cy", cy}, {"coord_scale", coord_scale}, {"offset_scale", offset_scale}};
}

CoordinateFrame CoordinateFrame::from_json(const json& j) {
    CoordinateFrame f;
    f.cx = j.at("cx").get<double>();
    f.cy = j.at("cy").get<double>();
    f.coord_scale = j.at("coord_scale").get<double>();
    f.offset_scale = j.at("offset_scale").get<double>();
    return f;
}

SclSequence build_neighborhood_tokens(const Eigen::MatrixXd& features, const SpatialIndex& index,
                                      const CoordinateFrame& frame, std::size_t sample, std::size_t k,
                                      std::size_t target_element) {
    if (k < 1) throw ConfigError("neighbourhood size K must be at least 1");
    if (index.size() < 2) throw DataError("spatial context needs at least two samples");
    if (sample >= index.size() || static_cast<Eigen::Index>(index.size()) != features.rows()) {
        throw DataError("neighbourhood sample index out of range");
    }
    const Point& q = index.point(sample);
    SclSequence seq;
    seq.element_token_id = target_element;
    seq.query_coords = frame.normalize(q);
    const auto found = index.knn(q, k, sample);
    const std::size_t C = static_cast<std::size_t>(features.cols());
    seq.neighbors.resize(k, NeighborToken{{0.0, 0.0}, std::vector<double>(C, 0.0)});
    seq.neighbor_ids.assign(k, 0);
    seq.mask.assign(k, 0);
    for (std::size_t j = 0; j < found.size(); ++j) {
        const Point& p = index.point(found[j].index);
        auto& tok = seq.neighbors[j];
        tok.offset = {(p.x - q.x) / frame.offset_scale, (p.y - q.y) / frame.offset_scale};
        for (std::size_t c = 0; c < C; ++c) {
            tok.features[c] = features(static_cast<Eigen::Index>(found[j].index), static_cast<Eigen::Index>(c));
        }
        seq.neighbor_ids[j] = found[j].index;
        seq.mask[j] = 1;
    }
    return seq;
}

std::vector<double> sinusoidal_encoding(const Point& p, std::size_t width) {
    // Four values (sin/cos of x and y) per frequency; frequencies span 1..64
    // cycles per coordinate unit on a log scale.
    std::vector<double> out(width, 0.0);
    const std::size_t n_freq = width / 4;
    for (std::size_t i = 0; i < n_freq; ++i) {
        const double w = n_freq > 1 ? std::pow(64.0, static_cast<double>(i) / static_cast<double>(n_freq - 1)) : 1.0;
        out[4 * i] = std::sin(w * p.x);
        out[4 * i + 1] = std::cos(w * p.x);
        out[4 * i + 2] = std::sin(w * p.y);
        out[4 * i + 3] = std::cos(w * p.y);
    }
    return out;
}

void GeoChemFormerConfig::validate() const {
    encoder.validate();
    if (k < 1) throw ConfigError("neighbourhood size K must be at least 1");
    if (scl_epochs < 1 || edm_epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw ConfigError("mask_rate must lie in [0, 1]");
}

json GeoChemFormerConfig::to_json() const {
    return json{{"layers", encoder.layers},
                {"width", encoder.width},
                {"heads", encoder.heads},
                {"ff_width", encoder.ff_width},
                {"dropout", encoder.dropout},
                {"k", k},
                {"scl_epochs", scl_epochs},
                {"edm_epochs", edm_epochs},
                {"batch", batch},
                {"lr", lr},
                {"mask_rate", mask_rate},
                {"zero_init_decoder", zero_init_decoder},
                {"seed", seed}};
}

GeoChemFormerConfig GeoChemFormerConfig::from_json(const json& j) {
    GeoChemFormerConfig c;
    c.encoder.layers = j.value("layers", c.encoder.layers);
    c.encoder.width = j.value("width", c.encoder.width);
    c.encoder.heads = j.value("heads", c.encoder.heads);
    c.encoder.ff_width = j.value("ff_width", c.encoder.ff_width);
    c.encoder.dropout = j.value("dropout", c.encoder.dropout);
    c.k = j.value("k", c.k);
    c.scl_epochs = j.value("scl_epochs", c.scl_epochs);
    c.edm_epochs = j.value("edm_epochs", c.edm_epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.mask_rate = j.value("mask_rate", c.mask_rate);
    c.zero_init_decoder = j.value("zero_init_decoder", c.zero_init_decoder);
    c.seed = j.value("seed", c.seed);
    c.encoder.seed = c.seed;
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Stage 1

SpatialContextModel::SpatialContextModel(const GeoChemFormerConfig& config, std::size_t n_features,
                                         std::size_t vocab)
    : width_(config.encoder.width), k_(config.k), n_features_(n_features) {
    Rng rng(config.seed);
    element_ = ag::Embedding(vocab, width_, rng);
    query_ = ag::Linear(2, width_, rng);
    neighbor_ = ag::Linear(2 + n_features, width_, rng);
    encoder_ = ag::TransformerEncoder(config.encoder, rng);
    head_ = ag::Linear(width_, 1, rng);
    element_.collect("scl.element", params_);
    query_.collect("scl.query", params_);
    neighbor_.collect("scl.neighbor", params_);
    encoder_.collect("scl.encoder", params_);
    head_.collect("scl.head", params_);
}

ag::Tensor SpatialContextModel::embed(const std::vector<SclSequence>& batch, std::vector<std::uint8_t>& key_mask) const {
    const std::size_t B = batch.size();
    const std::size_t S = k_ + 2;
    const std::size_t F = 2 + n_features_;
    std::vector<std::size_t> ids(B);
    std::vector<double> coords(B * 2);
    std::vector<double> pos(B * width_);
    std::vector<double> tokens(B * k_ * F, 0.0);
    key_mask.assign(B * S, 1);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& seq = batch[b];
        if (seq.neighbors.size() != k_) throw ConfigError("stage 1 sequence does not hold K neighbours");
        ids[b] = seq.element_token_id;
        coords[2 * b] = seq.query_coords.x;
        coords[2 * b + 1] = seq.query_coords.y;
        const auto enc = sinusoidal_encoding(seq.query_coords, width_);
        std::copy(enc.begin(), enc.end(), pos.begin() + static_cast<std::ptrdiff_t>(b * width_));
        for (std::size_t j = 0; j < k_; ++j) {
            const auto& tok = seq.neighbors[j];
            double* row = tokens.data() + (b * k_ + j) * F;
            row[0] = tok.offset.x;
            row[1] = tok.offset.y;
            std::copy(tok.features.begin(), tok.features.end(), row + 2);
            key_mask[b * S + 2 + j] = seq.mask[j];
        }
    }
    const ag::Tensor e = element_.forward(ids, {B, 1});
    const ag::Tensor q = ag::reshape(
        ag::add(query_.forward(ag::Tensor::constant({B, 2}, std::move(coords))),
                ag::Tensor::constant({B, width_}, std::move(pos))),
        {B, 1, width_});
    const ag::Tensor t = neighbor_.forward(ag::Tensor::constant({B, k_, F}, std::move(tokens)));
    return ag::concat({e, q, t}, 1);
}

ag::Tensor SpatialContextModel::context(const std::vector<SclSequence>& batch, bool train, Rng* rng) const {
    std::vector<std::uint8_t> mask;
    const ag::Tensor x = embed(batch, mask);
    const ag::Tensor h = encoder_.forward(x, mask, train, rng);
    return ag::reshape(ag::slice(h, 1, 1, 1), {batch.size(), width_});
}

ag::Tensor SpatialContextModel::predict(const std::vector<SclSequence>& batch, bool train, Rng* rng) const {
    return ag::reshape(head_.forward(context(batch, train, rng)), {batch.size()});
}

// ---------------------------------------------------------------------------
// Stage 2

ElementModel::ElementModel(const GeoChemFormerConfig& config, std::size_t n_elements, std::size_t context_width)
    : n_elements_(n_elements), width_(config.encoder.width), context_width_(context_width) {
    Rng rng(config.seed + 1);
    identity_ = ag::Embedding(n_elements, width_, rng);
    value_ = ag::Linear(1, width_, rng);
    combine_ = ag::Linear(2 * width_, width_, rng);
    encoder_ = ag::TransformerEncoder(config.encoder, rng);
    decoder_ = ag::Linear(width_, 1, rng);
    if (config.zero_init_decoder) decoder_.zero();
    if (context_width_ > 0) context_ = ag::Linear(context_width_, width_, rng);
    identity_.collect("edm.identity", params_);
    value_.collect("edm.value", params_);
    combine_.collect("edm.combine", params_);
    if (context_width_ > 0) context_.collect("edm.context", params_);
    encoder_.collect("edm.encoder", params_);
    decoder_.collect("edm.decoder", params_);
}

ag::Tensor ElementModel::reconstruct(const Eigen::MatrixXd& x, const Eigen::MatrixXd* context,
                                     const std::vector<double>& value_mask, bool train, Rng* rng) const {
    const std::size_t B = static_cast<std::size_t>(x.rows());
    const std::size_t C = n_elements_;
    if (static_cast<std::size_t>(x.cols()) != C) throw DataError("element model input has the wrong width");
    if (!value_mask.empty() && value_mask.size() != B * C) throw ConfigError("value mask has the wrong length");

    std::vector<std::size_t> ids(B * C);
    for (std::size_t b = 0; b < B; ++b) std::iota(ids.begin() + static_cast<std::ptrdiff_t>(b * C),
                                                  ids.begin() + static_cast<std::ptrdiff_t>((b + 1) * C), 0);
    const ag::Tensor identity = identity_.forward(ids, {B, C});
    ag::Tensor values = value_.forward(ag::reshape(tensor_from_rows(x), {B, C, 1}));
    if (!value_mask.empty()) {
        std::vector<double> wide(B * C * width_);
        for (std::size_t i = 0; i < B * C; ++i) {
            std::fill_n(wide.begin() + static_cast<std::ptrdiff_t>(i * width_), width_, value_mask[i]);
        }
        values = ag::mul_constant(values, wide);
    }
    ag::Tensor seq = combine_.forward(ag::concat({identity, values}, 2));
    std::size_t offset = 0;
    if (context_width_ > 0) {
        if (context == nullptr || context->rows() != x.rows() ||
            static_cast<std::size_t>(context->cols()) != context_width_) {
            throw DataError("spatial context is not aligned with the element rows");
        }
        const ag::Tensor g = ag::reshape(context_.forward(tensor_from_rows(*context)), {B, 1, width_});
        seq = ag::concat({g, seq}, 1);
        offset = 1;
    }
    const ag::Tensor h = encoder_.forward(seq, {}, train, rng);
    const ag::Tensor tokens = offset ? ag::slice(h, 1, offset, C) : h;
    return ag::reshape(decoder_.forward(tokens), {B, C});
}

double mean_squared_residual(const std::vector<double>& prediction, const std::vector<double>& target) {
    if (prediction.size() != target.size() || prediction.empty()) {
        throw DataError("residual vectors must be nonempty and aligned");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = prediction[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(prediction.size());
}

// ---------------------------------------------------------------------------
// Detector

namespace {

Eigen::MatrixXd with_positions(const DetectorInput& input) {
    Eigen::MatrixXd m(input.features.rows(), input.features.cols() + 2);
    m.leftCols(input.features.cols()) = input.features;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        m(i, input.features.cols()) = input.positions[static_cast<std::size_t>(i)].x;
        m(i, input.features.cols() + 1) = input.positions[static_cast<std::size_t>(i)].y;
    }
    return m;
}

void check_input(const DetectorInput& input) {
    if (input.features.rows() < 2) throw DataError("geochemformer needs at least two samples");
    if (static_cast<Eigen::Index>(input.positions.size()) != input.features.rows()) {
        throw DataError("positions are not aligned with the feature rows");
    }
    if (!input.features.allFinite()) throw DataError("geochemformer input contains non-finite values");
}

template <typename T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<Eigen::Index>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(items[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

GeoChemFormerDetector::GeoChemFormerDetector(bool with_context, GeoChemFormerConfig config)
    : with_context_(with_context), config_(config) {
    config_.encoder.seed = config_.seed;
    config_.validate();
}

void GeoChemFormerDetector::initialize(const DetectorInput& input) {
    check_input(input);
    n_features_ = static_cast<std::size_t>(input.features.cols());
    vocab_ = std::max<std::size_t>(input.element_vocab, input.target_id + 1);
    target_id_ = input.target_id;
    frame_ = CoordinateFrame::fit(SpatialIndex(input.positions));
    if (with_context_) stage1_ = SpatialContextModel(config_, n_features_, vocab_);
    stage2_ = ElementModel(config_, n_features_, with_context_ ? config_.encoder.width : 0);
}

std::vector<SclSequence> GeoChemFormerDetector::sequences(const DetectorInput& input) const {
    check_input(input);
    const SpatialIndex index(input.positions);
    std::vector<SclSequence> out;
    out.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        out.push_back(build_neighborhood_tokens(input.features, index, frame_, i, config_.k, target_id_));
    }
    return out;
}

ag::Tensor GeoChemFormerDetector::scl_loss(const std::vector<SclSequence>& seqs, const Eigen::VectorXd& targets) const {
    if (static_cast<Eigen::Index>(seqs.size()) != targets.size()) throw DataError("stage 1 targets are misaligned");
    const ag::Tensor y = ag::Tensor::constant({seqs.size()}, std::vector<double>(targets.data(), targets.data() + targets.size()));
    return ag::mse(stage1_.predict(seqs, false, nullptr), y);
}

std::vector<double> GeoChemFormerDetector::predict_target(const DetectorInput& input) const {
    if (!with_context_) throw ConfigError("t1 has no spatial stage");
    const auto seqs = sequences(input);
    std::vector<double> out;
    out.reserve(seqs.size());
    for (std::size_t start = 0; start < seqs.size(); start += 256) {
        const std::vector<SclSequence> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                             seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), start + 256)));
        const auto y = stage1_.predict(chunk, false, nullptr).data();
        out.insert(out.end(), y.begin(), y.end());
    }
    return out;
}

Eigen::MatrixXd GeoChemFormerDetector::spatial_context(const DetectorInput& input) const {
    if (!with_context_) throw ConfigError("t1 has no spatial stage");
    const auto seqs = sequences(input);
    const Eigen::Index d = static_cast<Eigen::Index>(stage1_.width());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(seqs.size()), d);
    for (std::size_t start = 0; start < seqs.size(); start += 256) {
        const std::size_t end = std::min(seqs.size(), start + 256);
        const std::vector<SclSequence> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                             seqs.begin() + static_cast<std::ptrdiff_t>(end));
        const auto q = stage1_.context(chunk, false, nullptr).data();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            for (Eigen::Index c = 0; c < d; ++c) {
                out(static_cast<Eigen::Index>(start + b), c) = q[b * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            }
        }
    }
    return out;
}

ag::Tensor GeoChemFormerDetector::edm_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd* context,
                                           const std::vector<double>& value_mask) const {
    return ag::mse(stage2_.reconstruct(x, context, value_mask, false, nullptr), tensor_from_rows(x));
}

void GeoChemFormerDetector::train_stage1(const DetectorInput& input) {
    if (input.target_values.size() != input.features.rows()) {
        throw DataError("stage 1 needs one target value per sample");
    }
    const auto all = sequences(input);
    const auto order = canonical_row_order(with_positions(input));
    ag::Adam adam(stage1_.parameters(), ag::AdamConfig{.lr = config_.lr});
    Rng rng(config_.seed ^ 0x5c1ULL);
    std::vector<std::size_t> perm(order.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t epoch = 0; epoch < config_.scl_epochs; ++epoch) {
        rng.shuffle(perm);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < perm.size(); start += config_.batch) {
            const std::size_t end = std::min(perm.size(), start + config_.batch);
            std::vector<SclSequence> batch;
            std::vector<double> y;
            for (std::size_t t = start; t < end; ++t) {
                const auto row = static_cast<std::size_t>(order[perm[t]]);
                batch.push_back(all[row]);
                y.push_back(input.target_values(static_cast<Eigen::Index>(row)));
            }
            const std::size_t B = batch.size();
            ag::Tensor loss = ag::mse(stage1_.predict(batch, true, &rng), ag::Tensor::constant({B}, std::move(y)));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NumericError("geochemformer stage 1: loss became non-finite at epoch " + std::to_string(epoch + 1));
            }
            stage1_.parameters().zero_grad();
            loss.backward();
            adam.step();
            total += value;
            ++batches;
        }
        scl_history_.push_back(total / static_cast<double>(batches));
    }
}

void GeoChemFormerDetector::train_stage2(const DetectorInput& input) {
    const char* name = to_string(kind());
    const auto order = canonical_row_order(with_positions(input));
    const Eigen::MatrixXd x = take_rows(input.features, order);
    Eigen::MatrixXd ctx;
    if (with_context_) ctx = take_rows(spatial_context(input), order);

    ag::Adam adam(stage2_.parameters(), ag::AdamConfig{.lr = config_.lr});
    Rng rng(config_.seed ^ 0xed3ULL);
    const std::size_t C = n_features_;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t epoch = 0; epoch < config_.edm_epochs; ++epoch) {
        rng.shuffle(perm);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < perm.size(); start += config_.batch) {
            const std::size_t end = std::min(perm.size(), start + config_.batch);
            const std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                                perm.begin() + static_cast<std::ptrdiff_t>(end));
            const Eigen::MatrixXd xb = take_rows(x, idx);
            Eigen::MatrixXd cb;
            if (with_context_) cb = take_rows(ctx, idx);
            std::vector<double> keep(idx.size() * C, 1.0);
            if (config_.mask_rate > 0.0) {
                for (auto& v : keep) v = rng.uniform() < config_.mask_rate ? 0.0 : 1.0;
            }
            const ag::Tensor recon = stage2_.reconstruct(xb, with_context_ ? &cb : nullptr, keep, true, &rng);
            ag::Tensor loss = ag::mse(recon, tensor_from_rows(xb));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NumericError(std::string(name) + " stage 2: loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            }
            stage2_.parameters().zero_grad();
            loss.backward();
            adam.step();
            total += value;
            ++batches;
        }
        edm_history_.push_back(total / static_cast<double>(batches));
    }
}

void GeoChemFormerDetector::fit(const DetectorInput& input) {
    warnings_.clear();
    scl_history_.clear();
    edm_history_.clear();
    initialize(input);
    if (with_context_) train_stage1(input);
    train_stage2(input);
}

Eigen::MatrixXd GeoChemFormerDetector::reconstruct(const DetectorInput& input) const {
    if (n_features_ == 0) throw ConfigError("geochemformer is not fitted");
    check_input(input);
    if (static_cast<std::size_t>(input.features.cols()) != n_features_) {
        throw DataError("geochemformer input has " + std::to_string(input.features.cols()) + " columns, fitted on " +
                        std::to_string(n_features_));
    }
    Eigen::MatrixXd ctx;
    if (with_context_) ctx = spatial_context(input);
    Eigen::MatrixXd out(input.features.rows(), input.features.cols());
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < out.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, out.rows() - start);
        const Eigen::MatrixXd xb = input.features.middleRows(start, n);
        Eigen::MatrixXd cb;
        if (with_context_) cb = ctx.middleRows(start, n);
        const auto r = stage2_.reconstruct(xb, with_context_ ? &cb : nullptr, {}, false, nullptr).data();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < out.cols(); ++c) {
                out(start + i, c) = r[static_cast<std::size_t>(i * out.cols() + c)];
            }
        }
    }
    return out;
}

std::vector<double> GeoChemFormerDetector::score(const DetectorInput& input) const {
    const Eigen::MatrixXd r = reconstruct(input);
    std::vector<double> out(static_cast<std::size_t>(r.rows()));
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = (input.features.row(i) - r.row(i)).squaredNorm() / static_cast<double>(r.cols());
    }
    return out;
}

json GeoChemFormerDetector::snapshot() const {
    json j{{"with_context", with_context_},
           {"config", config_.to_json()},
           {"n_features", n_features_},
           {"vocab", vocab_},
           {"target_id", target_id_},
           {"frame", frame_.to_json()},
           {"stage2", parameters_to_json(stage2_.parameters())}};
    if (with_context_) j["stage1"] = parameters_to_json(stage1_.parameters());
    return j;
}

std::unique_ptr<GeoChemFormerDetector> GeoChemFormerDetector::restore(const json& j) {
    auto det = std::make_unique<GeoChemFormerDetector>(j.at("with_context").get<bool>(),
                                                       GeoChemFormerConfig::from_json(j.at("config")));
    det->n_features_ = j.at("n_features").get<std::size_t>();
    det->vocab_ = j.at("vocab").get<std::size_t>();
    det->target_id_ = j.at("target_id").get<std::size_t>();
    det->frame_ = CoordinateFrame::from_json(j.at("frame"));
    if (det->with_context_) {
        det->stage1_ = SpatialContextModel(det->config_, det->n_features_, det->vocab_);
        parameters_from_json(j.at("stage1"), det->stage1_.parameters());
    }
    det->stage2_ = ElementModel(det->config_, det->n_features_, det->with_context_ ? det->config_.encoder.width : 0);
    parameters_from_json(j.at("stage2"), det->stage2_.parameters());
    return det;
}

}  // namespace geochem
