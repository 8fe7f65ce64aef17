#pragma once

#include <fcp/conformal/chi.hpp>
#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>
#include <fcp/flow/field.hpp>
#include <fcp/flow/transport.hpp>
#include <fcp/ode/dopri5.hpp>
#include <fcp/qmc/ball.hpp>
#include <fcp/qmc/sample_size.hpp>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <span>

namespace fcp::conformal {

/// Inference settings shared by score, membership, size and boundary.
struct FlowQuery {
    double w = 1.0;
    ode::OdeConfig ode{};
};

/// ||psi^{-1}(y - y_hat | h)||.
template <flow::GuidedField G>
double score(const G& g, const Vector& y, const Vector& y_hat, const Vector& h, const FlowQuery& q = {}) {
    if (y.size() != y_hat.size()) throw ShapeMismatch("score: y and y_hat differ in dimension");
    return flow::flow_inverse(g, Vector(y - y_hat), h, q.w, q.ode).norm();
}

/// The set {y : score(y) <= r} for one index.
template <flow::GuidedField G>
struct PredictionSetHandle {
    const G* field = nullptr;
    Vector h;
    Vector y_hat;
    Radius radius;
    FlowQuery query;

    double score(const Vector& y) const { return conformal::score(*field, y, y_hat, h, query); }
    bool contains(const Vector& y) const { return score(y) <= radius.value; }
};

template <flow::GuidedField G>
bool contains(const PredictionSetHandle<G>& set, const Vector& y) {
    return set.contains(y);
}

/// |det J| of psi_{1|h} at each row of `points`.
template <flow::GuidedField G>
Vector jacobian_determinants(const G& g, const Matrix& points, const Vector& h, const FlowQuery& q = {}) {
    const flow::LogdetBatch b = flow::flow_forward_logdet_batch(g, points, h, q.w, q.ode);
    Vector dets = b.logdet.array().exp();
    if (!dets.allFinite()) throw NonFiniteDeterminant();
    return dets;
}

/// |det J| at the first n QMC points of the ball of radius r.
template <flow::GuidedField G>
Vector ball_determinants(const G& g, const Vector& h, double r, std::size_t n, const FlowQuery& q = {}) {
    if (n < 1) throw UsageError("set size needs N >= 1");
    qmc::BallSampler sampler(static_cast<int>(g.bind(h).dimension()), r);
    return jacobian_determinants(g, sampler.take(n), h, q);
}

struct SetSize {
    double size = 0.0;
    double relative_se = 0.0;  // of the determinant sample; 0 when N = 1
    std::size_t n = 0;
};

/// Size(B_r) * mean |det J| over N ball points.
inline SetSize set_size_from_determinants(int d, double r, const Vector& dets) {
    SetSize s;
    s.n = static_cast<std::size_t>(dets.size());
    s.size = ball_volume(d, r) * dets.mean();
    if (dets.size() >= 2) s.relative_se = qmc::relative_se(std::span<const double>(dets.data(), s.n));
    return s;
}

template <flow::GuidedField G>
SetSize set_size(const G& g, const Vector& h, const Radius& radius, std::size_t n, const FlowQuery& q = {}) {
    const Vector dets = ball_determinants(g, h, radius.value, n, q);
    return set_size_from_determinants(radius.d, radius.value, dets);
}

template <flow::GuidedField G>
SetSize set_size(const G& g, const Vector& h, double alpha, double gamma, std::size_t n, const FlowQuery& q = {}) {
    const int d = static_cast<int>(g.bind(h).dimension());
    return set_size(g, h, make_radius(alpha, d, gamma), n, q);
}

/// K points tracing the boundary of the 2-D set: the circle of radius r pushed
/// through psi_{1|h}, shifted by y_hat.
template <flow::GuidedField G>
Matrix region_boundary_2d(const G& g, const Vector& h, const Vector& y_hat, const Radius& radius, std::size_t k,
                          const FlowQuery& q = {}) {
    if (y_hat.size() != 2 || radius.d != 2) throw NotTwoDimensional();
    if (k < 1) throw UsageError("boundary needs K >= 1");
    Matrix circle(static_cast<Eigen::Index>(k), 2);
    for (std::size_t i = 0; i < k; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
        circle(static_cast<Eigen::Index>(i), 0) = radius.value * std::cos(a);
        circle(static_cast<Eigen::Index>(i), 1) = radius.value * std::sin(a);
    }
    Matrix out = flow::flow_forward_batch(g, circle, h, q.w, q.ode);
    out.rowwise() += y_hat.transpose();
    return out;
}

inline void write_boundary_csv(std::ostream& os, const Matrix& boundary) {
    os << "x,y\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < boundary.rows(); ++i) os << boundary(i, 0) << ',' << boundary(i, 1) << '\n';
}

}  // namespace fcp::conformal
