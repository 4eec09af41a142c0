#include "melbridge/eval/stats.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace melbridge::eval {

namespace {

constexpr double kEigTol = 1e-8;

/// Eigendecomposition with the PSD clip shared by both square roots.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error(std::string("eigendecomposition failed for ") + what);
    Eigen::VectorXd lam = es.eigenvalues();
    if (lam.minCoeff() < -kEigTol)
        throw std::runtime_error(std::string(what) + " is not positive semidefinite: min eigenvalue " +
                                 std::to_string(lam.minCoeff()));
    lam = lam.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd stack_embeddings(const std::vector<std::vector<float>>& embeddings) {
    if (embeddings.empty()) throw std::invalid_argument("no embeddings to stack");
    const std::size_t d = embeddings.front().size();
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(embeddings.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].size() != d)
            throw std::invalid_argument("embedding " + std::to_string(i) + " has dim " +
                                        std::to_string(embeddings[i].size()) + ", expected " +
                                        std::to_string(d));
        for (std::size_t j = 0; j < d; ++j)
            rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = embeddings[i][j];
    }
    return rows;
}

GaussianStats fit_gaussian(const Eigen::MatrixXd& rows) {
    const Eigen::Index n = rows.rows();
    if (n < 2)
        throw std::invalid_argument("need at least 2 embeddings to fit a Gaussian, got " +
                                    std::to_string(n));
    GaussianStats s;
    s.count = static_cast<std::size_t>(n);
    s.mean = rows.colwise().mean();
    const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
    s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
    return s;
}

GaussianStats fit_gaussian(const std::vector<std::vector<float>>& embeddings) {
    return fit_gaussian(stack_embeddings(embeddings));
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("distribution dims differ: " + std::to_string(a.dim()) +
                                    " vs " + std::to_string(b.dim()));
    if (a.dim() == 0) throw std::invalid_argument("empty distributions");

    const Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov, "first covariance");
    const Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigendecomposition failed for the covariance product");
    const Eigen::VectorXd lam = es.eigenvalues();
    if (lam.minCoeff() < -kEigTol)
        throw std::runtime_error("covariance product is not positive semidefinite: min eigenvalue " +
                                 std::to_string(lam.minCoeff()));
    const double tr_sqrt = lam.cwiseMax(0.0).cwiseSqrt().sum();

    const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, d2);  // clamp the numerical dust below zero
}

}  // namespace melbridge::eval
