#pragma once

#include <Eigen/Dense>

namespace defe::pca {

struct PCAProjection {
    Eigen::VectorXd mean;                // input_dim
    Eigen::MatrixXd components;          // k x input_dim, orthonormal rows
    Eigen::VectorXd explained_variance;  // k, non-increasing

    Eigen::Index input_dim() const { return components.cols(); }
    Eigen::Index output_dim() const { return components.rows(); }
};

/// Principal components of `samples` (features x examples) by exact
/// eigendecomposition of the sample covariance (divisor n - 1). Each
/// component's largest-magnitude coordinate is made positive. Throws
/// NumericError when k exceeds the effective rank.
PCAProjection fit_pca(const Eigen::MatrixXd& samples, Eigen::Index k);

/// components * (x - mean), column by column.
Eigen::MatrixXd apply_pca(const PCAProjection& projection, const Eigen::MatrixXd& samples);

/// components^T * y + mean.
Eigen::MatrixXd reconstruct(const PCAProjection& projection, const Eigen::MatrixXd& projected);

}  // namespace defe::pca
