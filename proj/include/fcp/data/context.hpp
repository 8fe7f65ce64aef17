#pragma once

#include <fcp/data/splits.hpp>
#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

#include <cmath>

namespace fcp::data {

/// Per-column affine standardization.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    Matrix apply(const Matrix& x) const {
        Matrix out = x.rowwise() - mean;
        return out.array().rowwise() / scale.array();
    }
};

/// Column means and sample standard deviations over `rows`; constant columns get scale 1.
inline Standardizer fit_standardizer(const Matrix& x, IndexRange rows) {
    if (rows.size() < 2 || rows.end > static_cast<std::size_t>(x.rows()))
        throw UsageError("standardizer needs >= 2 rows inside the data");
    const auto block = x.middleRows(static_cast<Eigen::Index>(rows.begin), static_cast<Eigen::Index>(rows.size()));
    Standardizer s;
    s.mean = block.colwise().mean();
    const Matrix centered = block.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(rows.size() - 1)).array().sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
        if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
    return s;
}

/// Flattened x_{i-k..i-1}, oldest first: k * d_x values.
inline Vector lag_features(const Matrix& x, std::size_t i, std::size_t k) {
    if (i < k || i > static_cast<std::size_t>(x.rows())) throw UsageError("lag window out of range");
    const Eigen::Index d = x.cols();
    Vector out(static_cast<Eigen::Index>(k) * d);
    for (std::size_t l = 0; l < k; ++l)
        out.segment(static_cast<Eigen::Index>(l) * d, d) = x.row(static_cast<Eigen::Index>(i - k + l)).transpose();
    return out;
}

/// Encoder tokens for index i: rows j = i-w+1..i hold [x_j, eps_j]. Residuals
/// are only used for j < i and j >= first_residual; other slots, and rows
/// before the series start, are zero.
inline Matrix context_window(const Matrix& x, const Matrix& eps, std::size_t first_residual, std::size_t i,
                             std::size_t w) {
    if (w < 1) throw UsageError("context window must be >= 1");
    if (i >= static_cast<std::size_t>(x.rows())) throw UsageError("context index out of range");
    const Eigen::Index dx = x.cols();
    const Eigen::Index dy = eps.cols();
    Matrix tokens = Matrix::Zero(static_cast<Eigen::Index>(w), dx + dy);
    for (std::size_t r = 0; r < w; ++r) {
        if (i + r + 1 < w) continue;
        const std::size_t j = i + r + 1 - w;
        const auto row = static_cast<Eigen::Index>(r);
        tokens.row(row).head(dx) = x.row(static_cast<Eigen::Index>(j));
        if (j < i && j >= first_residual) tokens.row(row).tail(dy) = eps.row(static_cast<Eigen::Index>(j));
    }
    return tokens;
}

}  // namespace fcp::data
