#include "defe/pca.hpp"

#include "defe/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <string>

namespace defe::pca {

PCAProjection fit_pca(const Eigen::MatrixXd& samples, Eigen::Index k) {
    const Eigen::Index d = samples.rows();
    const Eigen::Index n = samples.cols();
    if (k < 1 || k > d) {
        throw ConfigError("PCA needs 1 <= k <= input dimension (" + std::to_string(d) + "), got " + std::to_string(k));
    }
    if (n < 2) {
        throw DataError("PCA needs at least two samples");
    }
    PCAProjection out;
    out.mean = samples.rowwise().mean();
    const Eigen::MatrixXd centered = samples.colwise() - out.mean;
    Eigen::MatrixXd covariance = Eigen::MatrixXd::Zero(d, d);
    covariance.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(n - 1));
    covariance.triangularView<Eigen::StrictlyUpper>() = covariance.transpose();

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
    if (solver.info() != Eigen::Success) {
        throw NumericError("covariance eigendecomposition failed");
    }
    // Eigen returns ascending eigenvalues.
    const Eigen::VectorXd values = solver.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

    const double largest = std::max(values(0), 0.0);
    const double tolerance = largest * static_cast<double>(d) * std::numeric_limits<double>::epsilon();
    Eigen::Index rank = 0;
    while (rank < d && values(rank) > tolerance) ++rank;
    if (k > rank) {
        throw NumericError("PCA requested " + std::to_string(k) + " components but the effective rank is " +
                           std::to_string(rank));
    }

    out.components = vectors.leftCols(k).transpose();
    out.explained_variance = values.head(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index at = 0;
        out.components.row(c).cwiseAbs().maxCoeff(&at);
        if (out.components(c, at) < 0.0) out.components.row(c) *= -1.0;
    }
    return out;
}

Eigen::MatrixXd apply_pca(const PCAProjection& projection, const Eigen::MatrixXd& samples) {
    if (samples.rows() != projection.input_dim()) {
        throw NumericError("PCA input dimension " + std::to_string(samples.rows()) + " does not match " +
                           std::to_string(projection.input_dim()));
    }
    return projection.components * (samples.colwise() - projection.mean);
}

Eigen::MatrixXd reconstruct(const PCAProjection& projection, const Eigen::MatrixXd& projected) {
    if (projected.rows() != projection.output_dim()) {
        throw NumericError("projected dimension does not match the PCA output");
    }
    return (projection.components.transpose() * projected).colwise() + projection.mean;
}

}  // namespace defe::pca
