#include "wlclean/pca.hpp"

#include "wlclean/errors.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace wlclean {

PcaTransform pca_fit(const Matrix& samples, std::size_t k) {
    const auto m = static_cast<std::size_t>(samples.rows());
    const auto n = static_cast<std::size_t>(samples.cols());
    if (m < 2) {
        throw ConfigError("PCA needs at least 2 samples");
    }
    if (k == 0 || k > std::min(m, n)) {
        throw ConfigError("PCA target dimension " + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(m, n)) + "]");
    }

    PcaTransform t;
    t.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - t.mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(m - 1);
    if (cov.trace() <= 0.0) {
        throw NumericalError("zero variance");
    }

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("covariance eigendecomposition failed");
    }
    // Eigen returns ascending eigenvalues.
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return solver.eigenvalues()(a) > solver.eigenvalues()(b);
    });

    t.components.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    t.explained_variance.resize(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        Vector axis = solver.eigenvectors().col(order[i]);
        Eigen::Index peak = 0;
        axis.cwiseAbs().maxCoeff(&peak);
        if (axis(peak) < 0.0) axis = -axis;
        t.components.row(static_cast<Eigen::Index>(i)) = axis.transpose();
        t.explained_variance(static_cast<Eigen::Index>(i)) = std::max(0.0, solver.eigenvalues()(order[i]));
    }
    return t;
}

Vector pca_apply(const PcaTransform& t, const Vector& v) {
    if (v.size() != t.mean.size()) {
        throw DimensionError("PCA input has dimension " + std::to_string(v.size()) + ", expected " +
                             std::to_string(t.mean.size()));
    }
    return t.components * (v - t.mean);
}

}  // namespace wlclean
