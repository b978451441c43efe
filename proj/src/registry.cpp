#include "geochem/registry.hpp"

#include "geochem/error.hpp"
#include "geochem/geochemformer.hpp"
#include "geochem/nn/autoencoder.hpp"

namespace geochem {

using nlohmann::json;

namespace {

json defaults_for(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::ZScore: return json{{"use_target", false}};
        case DetectorKind::Mahalanobis: return json::object();
        case DetectorKind::KnnDistance: return json{{"k", 5}};
        case DetectorKind::IsolationForest: {
            const IsolationForestConfig c;
            return json{{"trees", c.trees}, {"subsample", c.subsample}, {"seed", c.seed}};
        }
        case DetectorKind::OneClassSvm: {
            const OneClassSvmConfig c;
            return json{{"nu", c.nu},
                        {"gamma", c.gamma},
                        {"max_iterations", c.max_iterations},
                        {"tolerance", c.tolerance},
                        {"max_train", c.max_train},
                        {"seed", c.seed}};
        }
        case DetectorKind::AutoEncoder:
        case DetectorKind::Vae: return AutoEncoderConfig{}.to_json();
        case DetectorKind::T1:
        case DetectorKind::GeoChemFormer: return GeoChemFormerConfig{}.to_json();
    }
    return json::object();
}

template <typename T>
T positive_count(const json& j, const char* key, const char* kind) {
    const auto v = j.at(key).get<long long>();
    if (v < 1) throw ConfigError(std::string(kind) + ": " + key + " must be at least 1");
    return static_cast<T>(v);
}

}  // namespace

json normalized_detector_block(const json& block) {
    if (!block.is_object() || !block.contains("kind")) throw ConfigError("detector block needs a \"kind\"");
    const DetectorKind kind = detector_kind_from_string(block.at("kind").get<std::string>());
    json merged = defaults_for(kind);
    for (const auto& [key, value] : block.items()) {
        if (key == "kind") continue;
        if (!merged.contains(key)) {
            throw ConfigError(std::string(to_string(kind)) + ": unknown hyperparameter '" + key + "'");
        }
        merged[key] = value;
    }
    merged["kind"] = to_string(kind);
    return merged;
}

std::unique_ptr<AnomalyScorer> make_detector(const json& block) {
    const json j = normalized_detector_block(block);
    const DetectorKind kind = detector_kind_from_string(j.at("kind").get<std::string>());
    const char* name = to_string(kind);
    try {
        switch (kind) {
            case DetectorKind::ZScore: return std::make_unique<ZScoreDetector>(j.at("use_target").get<bool>());
            case DetectorKind::Mahalanobis: return std::make_unique<MahalanobisDetector>();
            case DetectorKind::KnnDistance:
                return std::make_unique<KnnDistanceDetector>(positive_count<std::size_t>(j, "k", name));
            case DetectorKind::IsolationForest: {
                IsolationForestConfig c;
                c.trees = positive_count<std::size_t>(j, "trees", name);
                c.subsample = positive_count<std::size_t>(j, "subsample", name);
                c.seed = j.at("seed").get<std::uint64_t>();
                return std::make_unique<IsolationForestDetector>(c);
            }
            case DetectorKind::OneClassSvm: {
                OneClassSvmConfig c;
                c.nu = j.at("nu").get<double>();
                c.gamma = j.at("gamma").get<double>();
                c.max_iterations = positive_count<std::size_t>(j, "max_iterations", name);
                c.tolerance = j.at("tolerance").get<double>();
                c.max_train = positive_count<std::size_t>(j, "max_train", name);
                c.seed = j.at("seed").get<std::uint64_t>();
                if (!(c.nu > 0.0 && c.nu <= 1.0)) throw ConfigError("ocsvm: nu must lie in (0, 1]");
                return std::make_unique<OneClassSvmDetector>(c);
            }
            case DetectorKind::AutoEncoder:
            case DetectorKind::Vae:
                return std::make_unique<AutoEncoderDetector>(kind == DetectorKind::Vae, AutoEncoderConfig::from_json(j));
            case DetectorKind::T1:
            case DetectorKind::GeoChemFormer:
                return std::make_unique<GeoChemFormerDetector>(kind == DetectorKind::GeoChemFormer,
                                                               GeoChemFormerConfig::from_json(j));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string(name) + ": bad hyperparameter value (" + e.what() + ")");
    }
    throw ConfigError("unhandled detector kind");
}

json detector_snapshot(const AnomalyScorer& scorer) {
    return json{{"format", "geochem-detector"},
                {"version", kSnapshotVersion},
                {"kind", to_string(scorer.kind())},
                {"state", scorer.snapshot()}};
}

std::unique_ptr<AnomalyScorer> restore_detector(const json& snapshot) {
    if (snapshot.value("format", "") != "geochem-detector") throw DataError("not a detector snapshot");
    if (snapshot.value("version", 0) != kSnapshotVersion) {
        throw DataError("unsupported snapshot version " + std::to_string(snapshot.value("version", 0)));
    }
    const DetectorKind kind = detector_kind_from_string(snapshot.at("kind").get<std::string>());
    const json& s = snapshot.at("state");
    try {
        switch (kind) {
            case DetectorKind::ZScore: return ZScoreDetector::restore(s);
            case DetectorKind::Mahalanobis: return MahalanobisDetector::restore(s);
            case DetectorKind::KnnDistance: return KnnDistanceDetector::restore(s);
            case DetectorKind::IsolationForest: return IsolationForestDetector::restore(s);
            case DetectorKind::OneClassSvm: return OneClassSvmDetector::restore(s);
            case DetectorKind::AutoEncoder:
            case DetectorKind::Vae: return AutoEncoderDetector::restore(s);
            case DetectorKind::T1:
            case DetectorKind::GeoChemFormer: return GeoChemFormerDetector::restore(s);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt snapshot: ") + e.what());
    }
    throw DataError("unhandled detector kind in snapshot");
}

}  // namespace geochem
