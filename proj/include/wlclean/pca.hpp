#pragma once

#include "wlclean/linalg.hpp"

#include <cstddef>

namespace wlclean {

/// Projection onto the top-k principal directions of a sample.
struct PcaTransform {
    Vector mean;                 // length n
    Matrix components;           // k x n, orthonormal rows
    Vector explained_variance;   // length k, non-increasing

    [[nodiscard]] std::size_t input_dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    [[nodiscard]] std::size_t output_dim() const noexcept { return static_cast<std::size_t>(components.rows()); }
};

/// Fits PCA to the rows of `samples` (m x n) by eigendecomposition of the
/// sample covariance (divisor m - 1). Each component's sign is fixed so its
/// largest-magnitude entry is positive.
///
/// Throws ConfigError when m < 2 or k is outside [1, min(m, n)], and
/// NumericalError("zero variance") when all rows coincide.
[[nodiscard]] PcaTransform pca_fit(const Matrix& samples, std::size_t k);

/// components * (v - mean). Throws DimensionError on size mismatch.
[[nodiscard]] Vector pca_apply(const PcaTransform& t, const Vector& v);

}  // namespace wlclean
