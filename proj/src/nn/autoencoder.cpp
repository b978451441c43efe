#include "geochem/nn/autoencoder.hpp"

#include <cmath>
#include <numeric>

#include "geochem/error.hpp"
#include "geochem/nn/adam.hpp"

namespace geochem {

using nlohmann::json;
namespace ag = geochem::nn;

void AutoEncoderConfig::validate() const {
    if (hidden < 1 || latent < 1) throw ConfigError("autoencoder widths must be positive");
    if (epochs < 1 || batch < 1) throw ConfigError("autoencoder epochs and batch must be positive");
    if (!(lr > 0.0)) throw ConfigError("autoencoder learning rate must be positive");
    if (!(beta >= 0.0)) throw ConfigError("vae beta must be non-negative");
}

json AutoEncoderConfig::to_json() const {
    return json{{"hidden", hidden}, {"latent", latent}, {"epochs", epochs},
                {"batch", batch},   {"lr", lr},         {"beta", beta},
                {"zero_init_output", zero_init_output}, {"seed", seed}};
}

AutoEncoderConfig AutoEncoderConfig::from_json(const json& j) {
    AutoEncoderConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.latent = j.value("latent", c.latent);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.beta = j.value("beta", c.beta);
    c.zero_init_output = j.value("zero_init_output", c.zero_init_output);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

double gaussian_kl(double mu, double logvar) { return 0.5 * (mu * mu + std::exp(logvar) - 1.0 - logvar); }

ag::Tensor tensor_from_rows(const Eigen::MatrixXd& x) {
    std::vector<double> flat(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) flat[static_cast<std::size_t>(i * x.cols() + c)] = x(i, c);
    }
    return ag::Tensor::constant({static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols())},
                                std::move(flat));
}

json parameters_to_json(const ag::ParameterSet& params) {
    json out = json::object();
    for (const auto& [name, t] : params.items()) out[name] = t.data();
    return out;
}

void parameters_from_json(const json& j, const ag::ParameterSet& params) {
    for (const auto& [name, t] : params.items()) {
        if (!j.contains(name)) throw DataError("snapshot is missing parameter '" + name + "'");
        auto values = j.at(name).get<std::vector<double>>();
        if (values.size() != t.numel()) throw DataError("snapshot parameter '" + name + "' has the wrong size");
        ag::Tensor handle = t;
        handle.data() = std::move(values);
    }
}

AutoEncoderDetector::AutoEncoderDetector(bool variational, AutoEncoderConfig config)
    : variational_(variational), config_(config) {
    config_.validate();
}

void AutoEncoderDetector::initialize(std::size_t width) {
    if (width < 1) throw DataError("autoencoder needs at least one column");
    width_ = width;
    Rng rng(config_.seed);
    const std::size_t code = variational_ ? 2 * config_.latent : config_.latent;
    enc1_ = ag::Linear(width, config_.hidden, rng);
    enc2_ = ag::Linear(config_.hidden, code, rng);
    dec1_ = ag::Linear(config_.latent, config_.hidden, rng);
    dec2_ = ag::Linear(config_.hidden, width, rng);
    if (config_.zero_init_output) dec2_.zero();
    params_ = ag::ParameterSet();
    enc1_.collect("enc1", params_);
    enc2_.collect("enc2", params_);
    dec1_.collect("dec1", params_);
    dec2_.collect("dec2", params_);
}

ag::Tensor AutoEncoderDetector::encode(const ag::Tensor& x) const {
    return enc2_.forward(ag::gelu(enc1_.forward(x)));
}

ag::Tensor AutoEncoderDetector::decode(const ag::Tensor& z) const {
    return dec2_.forward(ag::gelu(dec1_.forward(z)));
}

ag::Tensor AutoEncoderDetector::batch_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd* noise) const {
    if (static_cast<std::size_t>(x.cols()) != width_) throw DataError("autoencoder input has the wrong width");
    const ag::Tensor input = tensor_from_rows(x);
    const ag::Tensor code = encode(input);
    if (!variational_) return ag::mse(decode(code), input);

    const std::size_t L = config_.latent;
    const ag::Tensor mu = ag::slice(code, 1, 0, L);
    const ag::Tensor logvar = ag::slice(code, 1, L, L);
    if (noise == nullptr || noise->rows() != x.rows() || static_cast<std::size_t>(noise->cols()) != L) {
        throw ConfigError("vae loss needs a rows x latent noise matrix");
    }
    const ag::Tensor z = ag::add(mu, ag::mul(ag::exp(ag::scale(logvar, 0.5)), tensor_from_rows(*noise)));
    const ag::Tensor recon = ag::mse(decode(z), input);
    const ag::Tensor kl_terms = ag::add_scalar(ag::sub(ag::add(ag::square(mu), ag::exp(logvar)), logvar), -1.0);
    const double norm = 0.5 * config_.beta / static_cast<double>(x.rows() * x.cols());
    return ag::add(recon, ag::scale(ag::sum(kl_terms), norm));
}

void AutoEncoderDetector::fit(const DetectorInput& input) {
    warnings_.clear();
    history_.clear();
    const Eigen::MatrixXd x = take_rows(input.features, canonical_row_order(input.features));
    if (x.rows() < 1) throw DataError("autoencoder needs at least one row");
    if (!x.allFinite()) throw DataError("autoencoder input contains non-finite values");
    initialize(static_cast<std::size_t>(x.cols()));

    ag::Adam adam(params_, ag::AdamConfig{.lr = config_.lr});
    Rng rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    const char* name = to_string(kind());

    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config_.batch) {
            const std::size_t end = std::min(order.size(), start + config_.batch);
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const Eigen::MatrixXd batch = take_rows(x, idx);
            Eigen::MatrixXd noise;
            if (variational_) {
                noise.resize(batch.rows(), static_cast<Eigen::Index>(config_.latent));
                for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
            }
            ag::Tensor loss = batch_loss(batch, variational_ ? &noise : nullptr);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NumericError(std::string(name) + ": training loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            }
            params_.zero_grad();
            loss.backward();
            adam.step();
            total += value;
            ++batches;
        }
        history_.push_back(total / static_cast<double>(batches));
    }
}

std::vector<double> AutoEncoderDetector::reconstruction_error(const Eigen::MatrixXd& x) const {
    if (width_ == 0) throw ConfigError("autoencoder is not fitted");
    if (static_cast<std::size_t>(x.cols()) != width_) throw DataError("autoencoder input has the wrong width");
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, x.rows() - start);
        const Eigen::MatrixXd rows = x.middleRows(start, n);
        ag::Tensor code = encode(tensor_from_rows(rows));
        if (variational_) code = ag::slice(code, 1, 0, config_.latent);
        const ag::Tensor recon = decode(code);
        const auto& r = recon.data();
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index c = 0; c < rows.cols(); ++c) {
                const double d = rows(i, c) - r[static_cast<std::size_t>(i * rows.cols() + c)];
                s += d * d;
            }
            out[static_cast<std::size_t>(start + i)] = s / static_cast<double>(rows.cols());
        }
    }
    return out;
}

std::vector<double> AutoEncoderDetector::score(const DetectorInput& input) const {
    return reconstruction_error(input.features);
}

json AutoEncoderDetector::snapshot() const {
    return json{{"variational", variational_},
                {"config", config_.to_json()},
                {"width", width_},
                {"parameters", parameters_to_json(params_)}};
}

std::unique_ptr<AutoEncoderDetector> AutoEncoderDetector::restore(const json& j) {
    auto det = std::make_unique<AutoEncoderDetector>(j.at("variational").get<bool>(),
                                                     AutoEncoderConfig::from_json(j.at("config")));
    det->initialize(j.at("width").get<std::size_t>());
    parameters_from_json(j.at("parameters"), det->params_);
    return det;
}

}  // namespace geochem
