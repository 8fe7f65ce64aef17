#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

namespace fcp::predictor {

/// y = W [features; 1]; W is d_y x (width + 1) with the intercept last.
struct LinearModel {
    Matrix weights;

    Eigen::Index input_width() const { return weights.cols() - 1; }

    Vector predict(const Vector& features) const {
        if (features.size() != input_width()) throw ShapeMismatch("linear model input width mismatch");
        return weights.leftCols(input_width()) * features + weights.col(input_width());
    }
};

inline constexpr double kRidgeJitter = 1e-8;

/// Least squares of Y on X via normal equations; X carries its own intercept
/// column if one is wanted. Returns W with Y ~ X W^T.
inline Matrix solve_normal_equations(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) throw ShapeMismatch("fit: X and Y row counts differ");
    if (x.rows() < x.cols()) throw UsageError("fit: fewer rows than columns");
    Matrix gram = x.transpose() * x;
    gram.diagonal().array() += kRidgeJitter;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw SingularGram();
    Matrix w = llt.solve(Eigen::MatrixXd(x.transpose() * y)).transpose();
    if (!w.allFinite()) throw SingularGram();
    return w;
}

/// Fits y = W [x; 1] on the rows of X (features) and Y (outcomes).
inline LinearModel fit_linear(const Matrix& x, const Matrix& y) {
    Matrix design(x.rows(), x.cols() + 1);
    design.leftCols(x.cols()) = x;
    design.col(x.cols()).setOnes();
    return LinearModel{solve_normal_equations(design, y)};
}

/// Bootstrap ensemble with per-member in-bag flags for out-of-bag averaging.
struct Ensemble {
    std::vector<LinearModel> members;
    std::vector<std::vector<std::size_t>> samples;  // bootstrap indices, with replacement
    std::vector<std::vector<bool>> in_bag;          // in_bag[b][i]: row i drawn by member b

    Eigen::Index input_width() const { return members.front().input_width(); }
    std::size_t training_size() const { return in_bag.empty() ? 0 : in_bag.front().size(); }
};

/// One model per given index set (rows of X and Y, repeats allowed).
inline Ensemble fit_on_samples(const Matrix& x, const Matrix& y, std::vector<std::vector<std::size_t>> samples) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (static_cast<std::size_t>(y.rows()) != n) throw ShapeMismatch("fit: X and Y row counts differ");
    if (samples.empty()) throw UsageError("ensemble size must be >= 1");
    Ensemble ens;
    for (auto& idx : samples) {
        std::vector<bool> bag(n, false);
        for (std::size_t i : idx) {
            if (i >= n) throw UsageError("bootstrap index out of range");
            bag[i] = true;
        }
        Matrix xs(static_cast<Eigen::Index>(idx.size()), x.cols());
        Matrix ys(static_cast<Eigen::Index>(idx.size()), y.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            xs.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
            ys.row(static_cast<Eigen::Index>(r)) = y.row(static_cast<Eigen::Index>(idx[r]));
        }
        ens.members.push_back(fit_linear(xs, ys));
        ens.samples.push_back(std::move(idx));
        ens.in_bag.push_back(std::move(bag));
    }
    return ens;
}

/// B bootstrap resamples of the rows of (X, Y), one least-squares model each.
template <class Rng>
Ensemble fit_loo_bootstrap(Rng& rng, const Matrix& x, const Matrix& y, int b = 15) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (n < 2) throw UsageError("bootstrap ensemble needs >= 2 training rows");
    if (b < 1) throw UsageError("ensemble size must be >= 1");
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::vector<std::size_t>> samples(static_cast<std::size_t>(b), std::vector<std::size_t>(n));
    for (auto& idx : samples)
        for (auto& i : idx) i = pick(rng);
    return fit_on_samples(x, y, std::move(samples));
}

/// Average of members; for a training row only the members that left it out
/// of their bootstrap sample, or all members when none did.
inline Vector predict(const Ensemble& ens, const Vector& features, std::optional<std::size_t> at_index = {}) {
    if (ens.members.empty()) throw UsageError("empty ensemble");
    Vector sum = Vector::Zero(ens.members.front().weights.rows());
    std::size_t used = 0;
    if (at_index && *at_index < ens.training_size()) {
        for (std::size_t m = 0; m < ens.members.size(); ++m) {
            if (ens.in_bag[m][*at_index]) continue;
            sum += ens.members[m].predict(features);
            ++used;
        }
    }
    if (used == 0) {
        for (const auto& mem : ens.members) sum += mem.predict(features);
        used = ens.members.size();
    }
    return sum / static_cast<double>(used);
}

}  // namespace fcp::predictor
