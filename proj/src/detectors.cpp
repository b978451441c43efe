#include "geochem/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "geochem/error.hpp"
#include "geochem/random.hpp"

namespace geochem {

using nlohmann::json;

const char* to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::ZScore: return "zscore";
        case DetectorKind::Mahalanobis: return "mahalanobis";
        case DetectorKind::KnnDistance: return "knn_dist";
        case DetectorKind::IsolationForest: return "isolation_forest";
        case DetectorKind::OneClassSvm: return "ocsvm";
        case DetectorKind::AutoEncoder: return "ae";
        case DetectorKind::Vae: return "vae";
        case DetectorKind::T1: return "t1";
        case DetectorKind::GeoChemFormer: return "geochemformer";
    }
    return "unknown";
}

DetectorKind detector_kind_from_string(const std::string& name) {
    for (auto kind : all_detector_kinds()) {
        if (name == to_string(kind)) return kind;
    }
    if (name == "zs") return DetectorKind::ZScore;
    if (name == "md") return DetectorKind::Mahalanobis;
    if (name == "knn") return DetectorKind::KnnDistance;
    if (name == "if") return DetectorKind::IsolationForest;
    if (name == "osvm") return DetectorKind::OneClassSvm;
    if (name == "t2") return DetectorKind::GeoChemFormer;
    throw ConfigError("unknown detector kind '" + name + "'");
}

std::vector<DetectorKind> all_detector_kinds() {
    return {DetectorKind::ZScore,          DetectorKind::Mahalanobis, DetectorKind::KnnDistance,
            DetectorKind::IsolationForest, DetectorKind::OneClassSvm, DetectorKind::AutoEncoder,
            DetectorKind::Vae,             DetectorKind::T1,          DetectorKind::GeoChemFormer};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw DataError("snapshot matrix has wrong length");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = flat[static_cast<std::size_t>(i * cols + c)];
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto flat = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

std::vector<Eigen::Index> canonical_row_order(const Eigen::MatrixXd& rows) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c) {
            if (rows(a, c) != rows(b, c)) return rows(a, c) < rows(b, c);
        }
        return false;
    });
    return order;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& order) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(order.size()), m.cols());
    for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
    return out;
}

namespace {

void require_width(const DetectorInput& input, Eigen::Index expected, const char* who) {
    if (input.features.cols() != expected) {
        throw DataError(std::string(who) + ": fitted on " + std::to_string(expected) + " features, scoring " +
                        std::to_string(input.features.cols()));
    }
}

}  // namespace

// --- z-score ---------------------------------------------------------------

void ZScoreDetector::fit(const DetectorInput& input) {
    const auto& x = input.features;
    if (x.rows() < 1) throw DataError("zscore: no rows");
    if (!x.allFinite()) throw DataError("zscore: non-finite features");
    const double n = static_cast<double>(x.rows());
    mean_ = x.colwise().sum().transpose() / n;
    sd_.resize(x.cols());
    active_.assign(static_cast<std::size_t>(x.cols()), true);
    warnings_.clear();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        sd_(c) = std::sqrt((x.col(c).array() - mean_(c)).square().sum() / n);
        if (!(sd_(c) > 1e-12 * std::max(1.0, std::abs(mean_(c))))) {
            active_[static_cast<std::size_t>(c)] = false;
            warnings_.push_back("zscore: column " + std::to_string(c) + " has zero variance and is ignored");
        }
    }
    if (use_target_ && input.target_column) {
        if (*input.target_column < 0 || *input.target_column >= x.cols()) throw ConfigError("zscore: target column out of range");
    }
}

std::vector<double> ZScoreDetector::score(const DetectorInput& input) const {
    require_width(input, mean_.size(), "zscore");
    std::vector<double> out(static_cast<std::size_t>(input.features.rows()), 0.0);
    const bool single = use_target_ && input.target_column.has_value();
    for (Eigen::Index i = 0; i < input.features.rows(); ++i) {
        double best = 0.0;
        for (Eigen::Index c = 0; c < input.features.cols(); ++c) {
            if (single && c != *input.target_column) continue;
            if (!active_[static_cast<std::size_t>(c)]) continue;
            best = std::max(best, std::abs(input.features(i, c) - mean_(c)) / sd_(c));
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

json ZScoreDetector::snapshot() const {
    return json{{"use_target", use_target_}, {"mean", vector_to_json(mean_)}, {"sd", vector_to_json(sd_)},
                {"active", active_}};
}

std::unique_ptr<ZScoreDetector> ZScoreDetector::restore(const json& j) {
    auto d = std::make_unique<ZScoreDetector>(j.at("use_target").get<bool>());
    d->mean_ = vector_from_json(j.at("mean"));
    d->sd_ = vector_from_json(j.at("sd"));
    d->active_ = j.at("active").get<std::vector<bool>>();
    return d;
}

// --- Mahalanobis -------------------------------------------------------------

void MahalanobisDetector::fit(const DetectorInput& input) {
    const auto& x = input.features;
    if (x.rows() < 1) throw DataError("mahalanobis: no rows");
    if (!x.allFinite()) throw DataError("mahalanobis: non-finite features");
    const double n = static_cast<double>(x.rows());
    mean_ = x.colwise().sum().transpose() / n;
    const Eigen::MatrixXd centered = x.rowwise() - mean_.transpose();
    cov_ = centered.transpose() * centered / n;
    const double c = static_cast<double>(x.cols());
    ridge_ = 1e-6 * cov_.trace() / c;
    if (!(ridge_ > 0.0)) ridge_ = 1e-12;
    cov_.diagonal().array() += ridge_;
    factorize();
}

void MahalanobisDetector::factorize() {
    llt_.compute(cov_);
    if (llt_.info() != Eigen::Success) throw NumericError("mahalanobis: covariance is not positive definite after ridge");
}

std::vector<double> MahalanobisDetector::score(const DetectorInput& input) const {
    require_width(input, mean_.size(), "mahalanobis");
    const Eigen::MatrixXd diff = (input.features.rowwise() - mean_.transpose()).transpose();
    const Eigen::MatrixXd white = llt_.matrixL().solve(diff);
    std::vector<double> out(static_cast<std::size_t>(input.features.rows()));
    for (Eigen::Index i = 0; i < white.cols(); ++i) out[static_cast<std::size_t>(i)] = white.col(i).norm();
    return out;
}

json MahalanobisDetector::snapshot() const {
    return json{{"mean", vector_to_json(mean_)}, {"covariance", matrix_to_json(cov_)}, {"ridge", ridge_}};
}

std::unique_ptr<MahalanobisDetector> MahalanobisDetector::restore(const json& j) {
    auto d = std::make_unique<MahalanobisDetector>();
    d->mean_ = vector_from_json(j.at("mean"));
    d->cov_ = matrix_from_json(j.at("covariance"));
    d->ridge_ = j.at("ridge").get<double>();
    d->factorize();
    return d;
}

// --- kNN distance ------------------------------------------------------------

void KnnDistanceDetector::fit(const DetectorInput& input) {
    if (k_ < 1) throw ConfigError("knn_dist: k must be at least 1");
    if (k_ >= static_cast<std::size_t>(input.features.rows())) {
        throw ConfigError("knn_dist: k = " + std::to_string(k_) + " must be below the sample count " +
                          std::to_string(input.features.rows()));
    }
    if (!input.features.allFinite()) throw DataError("knn_dist: non-finite features");
    train_ = input.features;
}

std::vector<double> KnnDistanceDetector::score(const DetectorInput& input) const {
    require_width(input, train_.cols(), "knn_dist");
    const auto& q = input.features;
    const bool self = q.rows() == train_.rows() && q == train_;
    const Eigen::Index n = train_.rows();
    std::vector<double> out(static_cast<std::size_t>(q.rows()));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        std::size_t m = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (self && j == i) continue;
            d2[m++] = (train_.row(j) - q.row(i)).squaredNorm();
        }
        const std::size_t k = std::min(k_, m);
        std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(k),
                          d2.begin() + static_cast<std::ptrdiff_t>(m));
        double total = 0.0;
        for (std::size_t t = 0; t < k; ++t) total += std::sqrt(d2[t]);
        out[static_cast<std::size_t>(i)] = total / static_cast<double>(k);
    }
    return out;
}

json KnnDistanceDetector::snapshot() const { return json{{"k", k_}, {"train", matrix_to_json(train_)}}; }

std::unique_ptr<KnnDistanceDetector> KnnDistanceDetector::restore(const json& j) {
    auto d = std::make_unique<KnnDistanceDetector>(j.at("k").get<std::size_t>());
    d->train_ = matrix_from_json(j.at("train"));
    return d;
}

// --- isolation forest --------------------------------------------------------

double isolation_path_normalizer(double n) {
    if (n < 2.0) return 0.0;
    constexpr double euler = 0.5772156649;
    return 2.0 * (std::log(n - 1.0) + euler) - 2.0 * (n - 1.0) / n;
}

void IsolationForestDetector::fit(const DetectorInput& input) {
    const Eigen::MatrixXd x = take_rows(input.features, canonical_row_order(input.features));
    const auto n = static_cast<std::size_t>(x.rows());
    if (config_.trees < 1) throw ConfigError("isolation_forest: need at least one tree");
    if (n < 2) throw DataError("isolation_forest: need at least two rows");
    psi_ = std::min(config_.subsample, n);
    if (psi_ < 2) throw ConfigError("isolation_forest: subsample must be at least 2");
    const int depth_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi_))));
    Rng rng(config_.seed);
    trees_.clear();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    for (std::size_t t = 0; t < config_.trees; ++t) {
        // Partial Fisher-Yates draws psi rows without replacement.
        for (std::size_t i = 0; i < psi_; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
        std::vector<std::size_t> rows(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi_));
        Tree tree;
        struct Work {
            int node;
            std::size_t lo, hi;
            int depth;
        };
        tree.push_back({});
        std::vector<Work> stack{{0, 0, rows.size(), 0}};
        while (!stack.empty()) {
            const Work w = stack.back();
            stack.pop_back();
            const std::size_t count = w.hi - w.lo;
            tree[static_cast<std::size_t>(w.node)].size = count;
            if (w.depth >= depth_limit || count <= 1) continue;
            std::vector<std::pair<Eigen::Index, std::pair<double, double>>> spread;
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                double lo = x(static_cast<Eigen::Index>(rows[w.lo]), c), hi = lo;
                for (std::size_t r = w.lo + 1; r < w.hi; ++r) {
                    const double v = x(static_cast<Eigen::Index>(rows[r]), c);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (hi > lo) spread.push_back({c, {lo, hi}});
            }
            if (spread.empty()) continue;
            const auto& [feature, range] = spread[rng.below(spread.size())];
            double split = rng.uniform(range.first, range.second);
            if (split <= range.first) split = std::nextafter(range.first, range.second);
            const auto mid_it = std::partition(
                rows.begin() + static_cast<std::ptrdiff_t>(w.lo), rows.begin() + static_cast<std::ptrdiff_t>(w.hi),
                [&](std::size_t r) { return x(static_cast<Eigen::Index>(r), feature) < split; });
            const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
            const int left = static_cast<int>(tree.size());
            tree.push_back({});
            tree.push_back({});
            Node& node = tree[static_cast<std::size_t>(w.node)];
            node.feature = static_cast<int>(feature);
            node.split = split;
            node.left = left;
            node.right = left + 1;
            stack.push_back({left + 1, mid, w.hi, w.depth + 1});
            stack.push_back({left, w.lo, mid, w.depth + 1});
        }
        trees_.push_back(std::move(tree));
    }
}

double IsolationForestDetector::mean_path_length(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    double total = 0.0;
    for (const auto& tree : trees_) {
        int at = 0;
        int depth = 0;
        while (tree[static_cast<std::size_t>(at)].feature >= 0) {
            const Node& node = tree[static_cast<std::size_t>(at)];
            at = row(node.feature) < node.split ? node.left : node.right;
            ++depth;
        }
        total += depth + isolation_path_normalizer(static_cast<double>(tree[static_cast<std::size_t>(at)].size));
    }
    return total / static_cast<double>(trees_.size());
}

std::vector<double> IsolationForestDetector::score(const DetectorInput& input) const {
    if (trees_.empty()) throw ConfigError("isolation_forest: not fitted");
    const double norm = isolation_path_normalizer(static_cast<double>(psi_));
    std::vector<double> out(static_cast<std::size_t>(input.features.rows()));
    for (Eigen::Index i = 0; i < input.features.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = std::pow(2.0, -mean_path_length(input.features.row(i)) / norm);
    }
    return out;
}

json IsolationForestDetector::snapshot() const {
    json trees = json::array();
    for (const auto& tree : trees_) {
        json nodes = json::array();
        for (const auto& n : tree) nodes.push_back({n.feature, n.split, n.left, n.right, n.size});
        trees.push_back(std::move(nodes));
    }
    return json{{"trees", config_.trees}, {"subsample", config_.subsample}, {"seed", config_.seed},
                {"psi", psi_},           {"forest", std::move(trees)}};
}

std::unique_ptr<IsolationForestDetector> IsolationForestDetector::restore(const json& j) {
    IsolationForestConfig cfg;
    cfg.trees = j.at("trees").get<std::size_t>();
    cfg.subsample = j.at("subsample").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    auto d = std::make_unique<IsolationForestDetector>(cfg);
    d->psi_ = j.at("psi").get<std::size_t>();
    for (const auto& jt : j.at("forest")) {
        Tree tree;
        for (const auto& jn : jt) {
            tree.push_back({jn[0].get<int>(), jn[1].get<double>(), jn[2].get<int>(), jn[3].get<int>(),
                            jn[4].get<std::size_t>()});
        }
        d->trees_.push_back(std::move(tree));
    }
    return d;
}

// --- one-class SVM (SVDD dual) ---------------------------------------------

double OneClassSvmDetector::kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
    return std::exp(-gamma_ * (a - b).squaredNorm());
}

void OneClassSvmDetector::fit(const DetectorInput& input) {
    if (!(config_.nu > 0.0 && config_.nu <= 1.0)) throw ConfigError("ocsvm: nu must lie in (0, 1]");
    if (input.features.rows() < 1) throw DataError("ocsvm: no rows");
    if (!input.features.allFinite()) throw DataError("ocsvm: non-finite features");
    warnings_.clear();
    gamma_ = config_.gamma > 0.0 ? config_.gamma : 1.0 / static_cast<double>(std::max<Eigen::Index>(1, input.features.cols()));

    Eigen::MatrixXd x = take_rows(input.features, canonical_row_order(input.features));
    if (static_cast<std::size_t>(x.rows()) > config_.max_train) {
        std::vector<std::size_t> idx(static_cast<std::size_t>(x.rows()));
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(config_.seed);
        rng.shuffle(idx);
        idx.resize(config_.max_train);
        std::sort(idx.begin(), idx.end());
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(idx.size()), x.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
        x = std::move(sub);
        warnings_.push_back("ocsvm: trained on a subsample of " + std::to_string(config_.max_train) + " rows");
    }
    const Eigen::Index n = x.rows();
    upper_ = 1.0 / (config_.nu * static_cast<double>(n));

    Eigen::MatrixXd kmat(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kmat(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) kmat(i, j) = kmat(j, i) = kernel(x.row(i), x.row(j));
    }
    const Eigen::VectorXd diag = kmat.diagonal();

    // Linear minimization over the capped simplex: fill the smallest gradients first.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    auto vertex = [&](const Eigen::VectorXd& grad) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return grad(a) < grad(b) || (grad(a) == grad(b) && a < b);
        });
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        double mass = 1.0;
        for (Eigen::Index idx : order) {
            const double put = std::min(upper_, mass);
            s(idx) = put;
            mass -= put;
            if (mass <= 0.0) break;
        }
        return s;
    };

    alpha_ = vertex(Eigen::VectorXd::Zero(n));  // feasible start
    Eigen::VectorXd k_alpha = kmat * alpha_;
    converged_ = false;
    iterations_ = 0;
    for (; iterations_ < config_.max_iterations; ++iterations_) {
        const Eigen::VectorXd grad = 2.0 * k_alpha - diag;
        gap_ = -grad.dot(vertex(grad) - alpha_);
        if (gap_ < config_.tolerance) {
            converged_ = true;
            break;
        }
        // Pairwise step: shift mass from the worst coordinate still holding some to
        // the best one with room left, exact line search, clipped at the box.
        Eigen::Index up = -1, down = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (alpha_(j) < upper_ && (up < 0 || grad(j) < grad(up))) up = j;
            if (alpha_(j) > 0.0 && (down < 0 || grad(j) > grad(down))) down = j;
        }
        if (up < 0 || down < 0 || up == down || grad(up) >= grad(down)) break;
        const double curvature = 2.0 * (kmat(up, up) + kmat(down, down) - 2.0 * kmat(up, down));
        double step = std::min(upper_ - alpha_(up), alpha_(down));
        if (curvature > 0.0) step = std::min(step, (grad(down) - grad(up)) / curvature);
        alpha_(up) += step;
        alpha_(down) -= step;
        if (alpha_(down) < 0.0) alpha_(down) = 0.0;
        k_alpha.noalias() += step * (kmat.col(up) - kmat.col(down));
    }
    if (!converged_) {
        warnings_.push_back("ocsvm: Frank-Wolfe stopped after " + std::to_string(iterations_) +
                            " iterations with duality gap " + std::to_string(gap_));
    }
    k_alpha = kmat * alpha_;
    center_norm_ = alpha_.dot(k_alpha);

    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (alpha_(i) > 0.0) support.push_back(i);
    }
    support_.resize(static_cast<Eigen::Index>(support.size()), x.cols());
    support_alpha_.resize(static_cast<Eigen::Index>(support.size()));
    for (std::size_t s = 0; s < support.size(); ++s) {
        support_.row(static_cast<Eigen::Index>(s)) = x.row(support[s]);
        support_alpha_(static_cast<Eigen::Index>(s)) = alpha_(support[s]);
    }
}

std::vector<double> OneClassSvmDetector::score(const DetectorInput& input) const {
    require_width(input, support_.cols(), "ocsvm");
    std::vector<double> out(static_cast<std::size_t>(input.features.rows()));
    for (Eigen::Index i = 0; i < input.features.rows(); ++i) {
        double cross = 0.0;
        for (Eigen::Index s = 0; s < support_.rows(); ++s) {
            cross += support_alpha_(s) * kernel(input.features.row(i), support_.row(s));
        }
        out[static_cast<std::size_t>(i)] = 1.0 - 2.0 * cross + center_norm_;
    }
    return out;
}

json OneClassSvmDetector::snapshot() const {
    return json{{"nu", config_.nu},
                {"gamma", gamma_},
                {"max_iterations", config_.max_iterations},
                {"tolerance", config_.tolerance},
                {"max_train", config_.max_train},
                {"seed", config_.seed},
                {"support", matrix_to_json(support_)},
                {"support_alpha", vector_to_json(support_alpha_)},
                {"center_norm", center_norm_},
                {"upper", upper_},
                {"converged", converged_},
                {"gap", gap_}};
}

std::unique_ptr<OneClassSvmDetector> OneClassSvmDetector::restore(const json& j) {
    OneClassSvmConfig cfg;
    cfg.nu = j.at("nu").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.max_iterations = j.at("max_iterations").get<std::size_t>();
    cfg.tolerance = j.at("tolerance").get<double>();
    cfg.max_train = j.at("max_train").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    auto d = std::make_unique<OneClassSvmDetector>(cfg);
    d->gamma_ = cfg.gamma;
    d->support_ = matrix_from_json(j.at("support"));
    d->support_alpha_ = vector_from_json(j.at("support_alpha"));
    d->alpha_ = d->support_alpha_;
    d->center_norm_ = j.at("center_norm").get<double>();
    d->upper_ = j.at("upper").get<double>();
    d->converged_ = j.at("converged").get<bool>();
    d->gap_ = j.at("gap").get<double>();
    return d;
}

}  // namespace geochem
