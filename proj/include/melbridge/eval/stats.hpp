#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace melbridge::eval {

/// Sample mean and covariance of an embedding set; the two of these feed the
/// Frechet distance.
struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  ///< symmetric, PSD up to numerical noise
    std::size_t count = 0;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Rows are embeddings. Unbiased covariance (n - 1), explicitly symmetrized.
/// Throws on fewer than 2 rows.
GaussianStats fit_gaussian(const Eigen::MatrixXd& rows);
GaussianStats fit_gaussian(const std::vector<std::vector<float>>& embeddings);

Eigen::MatrixXd stack_embeddings(const std::vector<std::vector<float>>& embeddings);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), the Gaussian 2-Wasserstein
/// squared distance. The matrix square root comes from a symmetric
/// eigendecomposition of sqrt(Sa) Sb sqrt(Sa); eigenvalues in [-1e-8, 0) are
/// clipped to zero, anything more negative is an error naming the offender.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

}  // namespace melbridge::eval
