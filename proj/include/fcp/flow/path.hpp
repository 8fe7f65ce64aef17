#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

namespace fcp::flow {

/// Gaussian path with alpha(t) = t, sigma(t) = 1 - t.
struct PathScheduler {
    static constexpr double alpha(double t) noexcept { return t; }
    static constexpr double sigma(double t) noexcept { return 1.0 - t; }
    static constexpr double alpha_dot(double) noexcept { return 1.0; }
    static constexpr double sigma_dot(double) noexcept { return -1.0; }
};

/// x_t = alpha(t) eps_hat + sigma(t) x0.
inline Vector sample_path_point(const Vector& eps_hat, const Vector& x0, double t) {
    if (eps_hat.size() != x0.size()) throw ShapeMismatch("sample_path_point: dimension mismatch");
    return PathScheduler::alpha(t) * eps_hat + PathScheduler::sigma(t) * x0;
}

/// Conditional velocity alpha'(t) eps_hat + sigma'(t) x0 = eps_hat - x0 (t-independent).
inline Vector target_velocity(const Vector& eps_hat, const Vector& x0) {
    if (eps_hat.size() != x0.size()) throw ShapeMismatch("target_velocity: dimension mismatch");
    return PathScheduler::alpha_dot(0.0) * eps_hat + PathScheduler::sigma_dot(0.0) * x0;
}

}  // namespace fcp::flow
