#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "geochem/geodata.hpp"

namespace geochem {

enum class TransformSpace { Raw, Clr, Ilr, ZScore };

const char* to_string(TransformSpace space);
TransformSpace transform_space_from_string(const std::string& name);

/// Dense N x C table of concentrations in a named space. Rows follow the
/// survey sample order.
struct CompositionMatrix {
    Eigen::MatrixXd data;
    TransformSpace space = TransformSpace::Raw;
    std::vector<std::string> element_names;
    std::vector<std::string> row_ids;

    Eigen::Index rows() const { return data.rows(); }
    Eigen::Index cols() const { return data.cols(); }

    /// Throws DataError when shapes disagree or entries are not finite.
    void validate() const;
};

/// Raw-space matrix from a survey. Masked entries are filled with the median
/// of the observed values of their element; elements without any observed
/// value are skipped and their symbols appended to `dropped` when given.
CompositionMatrix to_composition(const Survey& survey, std::vector<std::string>* dropped = nullptr);

/// ln(x) - mean(ln(x)) per row. Requires strictly positive entries.
CompositionMatrix clr_transform(const CompositionMatrix& raw);

/// C x (C-1) Helmert basis: orthonormal columns that each sum to zero.
Eigen::MatrixXd helmert_basis(Eigen::Index parts);

/// clr(x) * V with V the Helmert basis; C-1 output columns.
CompositionMatrix ilr_transform(const CompositionMatrix& raw);

/// Column means and population standard deviations captured on fit data.
/// Columns whose spread is zero are only centered.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& data);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
};

CompositionMatrix standardize(const CompositionMatrix& matrix);

enum class SelectionStrategy { All, Manual, Pca };

const char* to_string(SelectionStrategy strategy);
SelectionStrategy selection_strategy_from_string(const std::string& name);

struct FeatureSelection {
    SelectionStrategy strategy = SelectionStrategy::All;
    /// Manual: retained column indices, in output order.
    std::vector<Eigen::Index> selected;
    /// Pca: fitted state. `loadings` is C x k with orthonormal columns.
    double variance_threshold = 0.95;
    Eigen::VectorXd center;
    Eigen::MatrixXd loadings;
    Eigen::VectorXd explained_variance;  // all C eigenvalues, non-increasing

    static FeatureSelection all() { return {}; }
    static FeatureSelection manual(std::vector<Eigen::Index> columns);
    static FeatureSelection pca(double variance_threshold = 0.95);

    bool fitted() const { return strategy != SelectionStrategy::Pca || loadings.size() > 0; }
    Eigen::Index component_count() const { return loadings.cols(); }
};

/// Eigendecomposition of the column covariance. k is the smallest count whose
/// cumulative explained variance reaches the threshold. Each component is
/// signed so that its largest-magnitude loading is positive.
FeatureSelection fit_pca(const CompositionMatrix& matrix, double variance_threshold = 0.95);

/// Applies a selection; an unfitted PCA selection is fitted on `matrix` first.
CompositionMatrix select_features(const CompositionMatrix& matrix, const FeatureSelection& selection);

}  // namespace geochem
