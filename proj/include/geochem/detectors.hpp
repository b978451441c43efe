#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geochem/geodata.hpp"
#include "json.hpp"

namespace geochem {

enum class DetectorKind {
    ZScore,
    Mahalanobis,
    KnnDistance,
    IsolationForest,
    OneClassSvm,
    AutoEncoder,
    Vae,
    T1,
    GeoChemFormer,
};

const char* to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(const std::string& name);
std::vector<DetectorKind> all_detector_kinds();

/// What a detector sees for one survey. Deposits are never part of it.
struct DetectorInput {
    /// N x C preprocessed features (after transform and selection).
    Eigen::MatrixXd features;
    /// Sample positions in survey order (used by the spatial model only).
    std::vector<Point> positions;
    /// Column of `features` holding the target element, when it survived selection.
    std::optional<Eigen::Index> target_column;
    /// Preprocessed target-element value per sample (spatial pretraining target).
    Eigen::VectorXd target_values;
    /// Element id of the target within the pre-selection element list.
    std::size_t target_id = 0;
    /// Number of elements before selection (vocabulary of target ids).
    std::size_t element_vocab = 1;
};

/// Common contract: fit on a survey, then score rows (higher = more anomalous).
/// Scoring is const and deterministic for a fitted detector.
class AnomalyScorer {
public:
    virtual ~AnomalyScorer() = default;

    virtual DetectorKind kind() const = 0;
    virtual void fit(const DetectorInput& input) = 0;
    virtual std::vector<double> score(const DetectorInput& input) const = 0;

    /// Fitted state including the kind tag and hyperparameters.
    virtual nlohmann::json snapshot() const = 0;
    /// Non-fatal notes raised during fit (degenerate columns, non-convergence).
    const std::vector<std::string>& warnings() const { return warnings_; }

protected:
    std::vector<std::string> warnings_;
};

/// Row indices sorted lexicographically by content. Stochastic fits walk rows
/// in this order so their result does not depend on the input row order.
std::vector<Eigen::Index> canonical_row_order(const Eigen::MatrixXd& rows);

/// Rows of `m` in the given order.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& order);

// ---------------------------------------------------------------------------
// Statistical and classical scorers

/// Per-column |z|; the target column when `use_target` is set and available,
/// otherwise the maximum over columns with non-zero spread.
class ZScoreDetector final : public AnomalyScorer {
public:
    explicit ZScoreDetector(bool use_target = false) : use_target_(use_target) {}
    DetectorKind kind() const override { return DetectorKind::ZScore; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<ZScoreDetector> restore(const nlohmann::json& j);

private:
    bool use_target_;
    Eigen::VectorXd mean_;
    Eigen::VectorXd sd_;
    std::vector<bool> active_;
};

/// sqrt((x - mu)^T (S + eps I)^-1 (x - mu)) with eps = 1e-6 * trace(S) / C.
class MahalanobisDetector final : public AnomalyScorer {
public:
    DetectorKind kind() const override { return DetectorKind::Mahalanobis; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<MahalanobisDetector> restore(const nlohmann::json& j);

    double ridge() const { return ridge_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }

private:
    void factorize();

    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;  // includes the ridge
    double ridge_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Mean Euclidean distance to the k nearest training rows. When scoring the
/// training matrix itself, each row's own entry is skipped.
class KnnDistanceDetector final : public AnomalyScorer {
public:
    explicit KnnDistanceDetector(std::size_t k = 5) : k_(k) {}
    DetectorKind kind() const override { return DetectorKind::KnnDistance; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<KnnDistanceDetector> restore(const nlohmann::json& j);

private:
    std::size_t k_;
    Eigen::MatrixXd train_;
};

/// Isolation-forest average path-length normalizer, 2 H(n-1) - 2 (n-1) / n
/// with H(m) = ln m + Euler's constant; zero for n < 2.
double isolation_path_normalizer(double n);

struct IsolationForestConfig {
    std::size_t trees = 100;
    std::size_t subsample = 256;  // clipped to N
    std::uint64_t seed = 0;
};

class IsolationForestDetector final : public AnomalyScorer {
public:
    explicit IsolationForestDetector(IsolationForestConfig config = {}) : config_(config) {}
    DetectorKind kind() const override { return DetectorKind::IsolationForest; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<IsolationForestDetector> restore(const nlohmann::json& j);

    /// Expected path length of one row across the forest.
    double mean_path_length(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    std::size_t effective_subsample() const { return psi_; }

private:
    struct Node {
        int feature = -1;  // -1 marks an external node
        double split = 0.0;
        int left = -1;
        int right = -1;
        std::size_t size = 0;
    };
    using Tree = std::vector<Node>;

    IsolationForestConfig config_;
    std::size_t psi_ = 0;
    std::vector<Tree> trees_;
};

struct OneClassSvmConfig {
    double nu = 0.1;
    /// RBF width; non-positive selects 1 / C.
    double gamma = 0.0;
    std::size_t max_iterations = 2000;
    double tolerance = 1e-6;
    /// Larger training sets are subsampled (seeded) to bound the kernel matrix.
    std::size_t max_train = 2000;
    std::uint64_t seed = 0;
};

/// One-class SVM solved as the SVDD dual with Frank-Wolfe iterations over the
/// capped simplex {sum a = 1, 0 <= a <= 1 / (nu N)}. Score is the squared
/// kernel distance to the learned center.
class OneClassSvmDetector final : public AnomalyScorer {
public:
    explicit OneClassSvmDetector(OneClassSvmConfig config = {}) : config_(config) {}
    DetectorKind kind() const override { return DetectorKind::OneClassSvm; }
    void fit(const DetectorInput& input) override;
    std::vector<double> score(const DetectorInput& input) const override;
    nlohmann::json snapshot() const override;
    static std::unique_ptr<OneClassSvmDetector> restore(const nlohmann::json& j);

    const Eigen::VectorXd& alpha() const { return alpha_; }
    double upper_bound() const { return upper_; }
    bool converged() const { return converged_; }
    double duality_gap() const { return gap_; }
    std::size_t iterations() const { return iterations_; }

private:
    double kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const;

    OneClassSvmConfig config_;
    double gamma_ = 1.0;
    Eigen::MatrixXd support_;  // training rows with alpha > 0
    Eigen::VectorXd alpha_;    // over the full (possibly subsampled) training set
    Eigen::VectorXd support_alpha_;
    double upper_ = 1.0;
    double center_norm_ = 0.0;  // alpha^T K alpha
    bool converged_ = false;
    double gap_ = 0.0;
    std::size_t iterations_ = 0;
};

// ---------------------------------------------------------------------------
// Snapshots

inline constexpr int kSnapshotVersion = 1;

/// Wraps a detector snapshot with the format tag and version.
nlohmann::json detector_snapshot(const AnomalyScorer& scorer);
/// Rebuilds any detector (classical or neural) from `detector_snapshot` output.
std::unique_ptr<AnomalyScorer> restore_detector(const nlohmann::json& snapshot);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace geochem
