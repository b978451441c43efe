#include "geochem/compositional.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "geochem/error.hpp"

namespace geochem {

const char* to_string(TransformSpace space) {
    switch (space) {
        case TransformSpace::Raw: return "raw";
        case TransformSpace::Clr: return "clr";
        case TransformSpace::Ilr: return "ilr";
        case TransformSpace::ZScore: return "zscore";
    }
    return "raw";
}

TransformSpace transform_space_from_string(const std::string& name) {
    if (name == "raw") return TransformSpace::Raw;
    if (name == "clr") return TransformSpace::Clr;
    if (name == "ilr") return TransformSpace::Ilr;
    if (name == "zscore") return TransformSpace::ZScore;
    throw ConfigError("unknown transform '" + name + "' (expected raw, clr, ilr)");
}

void CompositionMatrix::validate() const {
    if (static_cast<Eigen::Index>(element_names.size()) != data.cols()) {
        throw DataError("composition matrix: column labels do not match the data width");
    }
    if (static_cast<Eigen::Index>(row_ids.size()) != data.rows()) {
        throw DataError("composition matrix: row ids do not match the data height");
    }
    if (!data.allFinite()) throw DataError("composition matrix contains NaN or Inf entries");
}

CompositionMatrix to_composition(const Survey& survey, std::vector<std::string>* dropped) {
    const auto& samples = survey.samples();
    const auto& elements = survey.elements();
    std::vector<std::size_t> kept;
    std::vector<double> fill;
    for (std::size_t c = 0; c < elements.size(); ++c) {
        std::vector<double> observed;
        for (const auto& s : samples) {
            if (!s.missing[c]) observed.push_back(s.values[c]);
        }
        if (observed.empty()) {
            if (dropped) dropped->push_back(elements[c].symbol);
            continue;
        }
        std::sort(observed.begin(), observed.end());
        const std::size_t n = observed.size();
        fill.push_back(n % 2 ? observed[n / 2] : 0.5 * (observed[n / 2 - 1] + observed[n / 2]));
        kept.push_back(c);
    }
    if (kept.empty()) throw DataError("no element has any observed value");

    CompositionMatrix m;
    m.space = TransformSpace::Raw;
    m.data.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) m.element_names.push_back(elements[kept[j]].symbol);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        m.row_ids.push_back(samples[i].id);
        for (std::size_t j = 0; j < kept.size(); ++j) {
            const std::size_t c = kept[j];
            m.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                samples[i].missing[c] ? fill[j] : samples[i].values[c];
        }
    }
    return m;
}

CompositionMatrix clr_transform(const CompositionMatrix& raw) {
    if (raw.space != TransformSpace::Raw) throw ConfigError("clr_transform expects a raw-space matrix");
    CompositionMatrix out = raw;
    out.space = TransformSpace::Clr;
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        double mean_log = 0.0;
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            const double v = raw.data(i, c);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw NumericError("clr: non-positive entry in row " + raw.row_ids[static_cast<std::size_t>(i)] +
                                   ", element " + raw.element_names[static_cast<std::size_t>(c)]);
            }
            out.data(i, c) = std::log(v);
            mean_log += out.data(i, c);
        }
        mean_log /= static_cast<double>(raw.cols());
        out.data.row(i).array() -= mean_log;
    }
    return out;
}

Eigen::MatrixXd helmert_basis(Eigen::Index parts) {
    if (parts < 2) throw ConfigError("ILR needs at least two parts");
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(parts, parts - 1);
    for (Eigen::Index j = 1; j < parts; ++j) {
        const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
        for (Eigen::Index r = 0; r < j; ++r) v(r, j - 1) = 1.0 / norm;
        v(j, j - 1) = -static_cast<double>(j) / norm;
    }
    return v;
}

CompositionMatrix ilr_transform(const CompositionMatrix& raw) {
    if (raw.cols() < 2) throw ConfigError("ILR needs at least two parts, got " + std::to_string(raw.cols()));
    const CompositionMatrix clr = clr_transform(raw);
    CompositionMatrix out;
    out.space = TransformSpace::Ilr;
    out.row_ids = raw.row_ids;
    out.data = clr.data * helmert_basis(raw.cols());
    for (Eigen::Index j = 1; j < raw.cols(); ++j) out.element_names.push_back("ilr" + std::to_string(j));
    return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& data) {
    Standardizer s;
    const double n = static_cast<double>(data.rows());
    s.mean = data.colwise().sum().transpose() / n;
    s.scale.resize(data.cols());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        const double var = (data.col(c).array() - s.mean(c)).square().sum() / n;
        const double sd = std::sqrt(var);
        s.scale(c) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))) ? sd : 1.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& data) const {
    if (data.cols() != mean.size()) throw DataError("standardizer width mismatch");
    return (data.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

CompositionMatrix standardize(const CompositionMatrix& matrix) {
    CompositionMatrix out = matrix;
    out.space = TransformSpace::ZScore;
    out.data = Standardizer::fit(matrix.data).apply(matrix.data);
    return out;
}

const char* to_string(SelectionStrategy strategy) {
    switch (strategy) {
        case SelectionStrategy::All: return "all";
        case SelectionStrategy::Manual: return "manual";
        case SelectionStrategy::Pca: return "pca";
    }
    return "all";
}

SelectionStrategy selection_strategy_from_string(const std::string& name) {
    if (name == "all" || name == "none" || name == "na") return SelectionStrategy::All;
    if (name == "manual") return SelectionStrategy::Manual;
    if (name == "pca") return SelectionStrategy::Pca;
    throw ConfigError("unknown feature selection '" + name + "'");
}

FeatureSelection FeatureSelection::manual(std::vector<Eigen::Index> columns) {
    FeatureSelection s;
    s.strategy = SelectionStrategy::Manual;
    s.selected = std::move(columns);
    return s;
}

FeatureSelection FeatureSelection::pca(double variance_threshold) {
    FeatureSelection s;
    s.strategy = SelectionStrategy::Pca;
    s.variance_threshold = variance_threshold;
    return s;
}

FeatureSelection fit_pca(const CompositionMatrix& matrix, double variance_threshold) {
    if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) {
        throw ConfigError("PCA variance threshold must lie in (0, 1]");
    }
    const Eigen::Index n = matrix.rows();
    const Eigen::Index c = matrix.cols();
    FeatureSelection sel = FeatureSelection::pca(variance_threshold);
    sel.center = matrix.data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = matrix.data.rowwise() - sel.center.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    Eigen::VectorXd values = eig.eigenvalues().reverse();
    Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    for (Eigen::Index j = 0; j < c; ++j) values(j) = std::max(values(j), 0.0);

    const double total = values.sum();
    Eigen::Index k = 1;
    if (total > 0.0) {
        double cumulative = 0.0;
        for (k = 0; k < c;) {
            cumulative += values(k++);
            if (cumulative >= variance_threshold * total * (1.0 - 1e-12)) break;
        }
    }
    for (Eigen::Index j = 0; j < c; ++j) {
        Eigen::Index arg = 0;
        vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
    }
    sel.explained_variance = values;
    sel.loadings = vectors.leftCols(k);
    return sel;
}

CompositionMatrix select_features(const CompositionMatrix& matrix, const FeatureSelection& selection) {
    switch (selection.strategy) {
        case SelectionStrategy::All: return matrix;
        case SelectionStrategy::Manual: {
            std::set<Eigen::Index> seen;
            CompositionMatrix out;
            out.space = matrix.space;
            out.row_ids = matrix.row_ids;
            out.data.resize(matrix.rows(), static_cast<Eigen::Index>(selection.selected.size()));
            for (std::size_t j = 0; j < selection.selected.size(); ++j) {
                const Eigen::Index src = selection.selected[j];
                if (src < 0 || src >= matrix.cols()) {
                    throw ConfigError("manual selection index " + std::to_string(src) + " out of range [0, " +
                                      std::to_string(matrix.cols()) + ")");
                }
                if (!seen.insert(src).second) throw ConfigError("manual selection repeats index " + std::to_string(src));
                out.data.col(static_cast<Eigen::Index>(j)) = matrix.data.col(src);
                out.element_names.push_back(matrix.element_names[static_cast<std::size_t>(src)]);
            }
            return out;
        }
        case SelectionStrategy::Pca: {
            const FeatureSelection fitted = selection.fitted() ? selection : fit_pca(matrix, selection.variance_threshold);
            if (fitted.loadings.rows() != matrix.cols()) throw ConfigError("PCA loadings do not match matrix width");
            CompositionMatrix out;
            out.space = matrix.space;
            out.row_ids = matrix.row_ids;
            out.data = (matrix.data.rowwise() - fitted.center.transpose()) * fitted.loadings;
            for (Eigen::Index j = 0; j < fitted.loadings.cols(); ++j) out.element_names.push_back("PC" + std::to_string(j + 1));
            return out;
        }
    }
    return matrix;
}

}  // namespace geochem
