#pragma once

#include <fcp/conformal/chi.hpp>
#include <fcp/encoder/transformer.hpp>
#include <fcp/flow/field.hpp>
#include <fcp/flow/transport.hpp>

#include "fd.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fcp::testing {

/// A randomly initialized guided MLP field with a random guidance vector.
/// `weight_scale` multiplies every initialized parameter.
struct RandomFlow {
    flow::GuidedVectorField spec;
    ParamStore params;
    Vector h;

    RandomFlow(Eigen::Index d_y, std::uint64_t seed, double weight_scale = 1.0, Eigen::Index d_h = 4,
               int layers = 4, int hidden = 32)
        : spec(d_y, d_h, layers, hidden) {
        std::mt19937_64 rng(seed);
        spec.init(params, rng);
        for (auto& [name, m] : params) m *= weight_scale;
        params.add(encoder::kNullGuidanceName, uniform_matrix(rng, 1, d_h));
        h = uniform_matrix(rng, d_h, 1);
    }

    flow::MlpGuidedField guided() const { return flow::MlpGuidedField(spec, params); }
};

/// |det J| of x -> psi(x | h) at `points` by central differences of the
/// transported batch. All perturbed copies travel in one batch so that they
/// share a step sequence.
template <flow::GuidedField G>
Vector fd_determinants(const G& g, const Matrix& points, const Vector& h, double w, double step = 1e-4,
                       double tol = 1e-9) {
    const Eigen::Index n = points.rows(), d = points.cols();
    Matrix stacked(2 * d * n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        stacked.middleRows(2 * j * n, n) = points;
        stacked.middleRows(2 * j * n, n).col(j).array() += step;
        stacked.middleRows((2 * j + 1) * n, n) = points;
        stacked.middleRows((2 * j + 1) * n, n).col(j).array() -= step;
    }
    ode::OdeConfig cfg;
    cfg.abs_tol = cfg.rel_tol = tol;
    const Matrix moved = flow::flow_forward_batch(g, stacked, h, w, cfg);
    Vector dets(n);
    Matrix jac(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j)
            jac.col(j) = (moved.row(2 * j * n + i) - moved.row((2 * j + 1) * n + i)).transpose() / (2.0 * step);
        dets[i] = std::abs(jac.determinant());
    }
    return dets;
}

/// Midpoint-rule polar quadrature of |det J| over the disk of radius r
/// (rings x sectors cells).
template <flow::GuidedField G>
double polar_quadrature_size(const G& g, const Vector& h, double w, double r, int rings = 200, int sectors = 200) {
    const double dr = r / rings, dt = 2.0 * std::numbers::pi / sectors;
    Matrix pts(static_cast<Eigen::Index>(rings) * sectors, 2);
    Vector weight(pts.rows());
    for (int i = 0; i < rings; ++i)
        for (int j = 0; j < sectors; ++j) {
            const double rho = (i + 0.5) * dr, th = (j + 0.5) * dt;
            const Eigen::Index k = static_cast<Eigen::Index>(i) * sectors + j;
            pts(k, 0) = rho * std::cos(th);
            pts(k, 1) = rho * std::sin(th);
            weight[k] = rho * dr * dt;
        }
    return weight.dot(fd_determinants(g, pts, h, w));
}

}  // namespace fcp::testing
