#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>
#include <fcp/flow/field.hpp>
#include <fcp/ode/dopri5.hpp>

#include <utility>

namespace fcp::flow {

/// Endpoints and per-row log|det J| of a batched forward transport.
struct LogdetBatch {
    Matrix x;
    Vector logdet;
};

namespace detail {

inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

template <ConditionalField F>
Matrix transport(const F& field, const Matrix& x, double t0, double t1, const ode::OdeConfig& cfg,
                 ode::OdeStats* stats) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (d != field.dimension()) throw ShapeMismatch("flow: point dimension does not match field");
    auto rhs = [&](double t, const Vector& s) -> Vector {
        const Eigen::Map<const Matrix> pts(s.data(), n, d);
        const Matrix v = field.velocity(t, pts);
        return flatten(v);
    };
    const Vector end = ode::integrate(rhs, flatten(x), t0, t1, cfg, stats);
    return Eigen::Map<const Matrix>(end.data(), n, d);
}

}  // namespace detail

// All points of a batch share one adaptive step sequence; the error norm
// is taken over the whole batch.

template <ConditionalField F>
Matrix push_forward(const F& field, const Matrix& x0, const ode::OdeConfig& cfg = {}, ode::OdeStats* stats = nullptr) {
    return detail::transport(field, x0, 0.0, 1.0, cfg, stats);
}

template <ConditionalField F>
Matrix pull_back(const F& field, const Matrix& eps, const ode::OdeConfig& cfg = {}, ode::OdeStats* stats = nullptr) {
    return detail::transport(field, eps, 1.0, 0.0, cfg, stats);
}

/// Forward transport with the augmented log-determinant ODE, one logdet per row.
template <ConditionalField F>
LogdetBatch push_forward_logdet(const F& field, const Matrix& x0, const ode::OdeConfig& cfg = {},
                                ode::OdeStats* stats = nullptr) {
    const Eigen::Index n = x0.rows();
    const Eigen::Index d = x0.cols();
    if (d != field.dimension()) throw ShapeMismatch("flow: point dimension does not match field");
    Vector state(n * d + n);
    state.head(n * d) = detail::flatten(x0);
    state.tail(n).setZero();
    auto rhs = [&](double t, const Vector& s) -> Vector {
        const Eigen::Map<const Matrix> pts(s.data(), n, d);
        Vector div;
        const Matrix v = field.velocity_div(t, pts, div);
        Vector out(n * d + n);
        out.head(n * d) = detail::flatten(v);
        out.tail(n) = div;
        return out;
    };
    const Vector end = ode::integrate(rhs, std::move(state), 0.0, 1.0, cfg, stats);
    return {Eigen::Map<const Matrix>(end.data(), n, d), end.tail(n)};
}

// ---------------------------------------------------------------------------
// Guided transports: CFG-combined field under guidance h and scale w.

template <GuidedField G>
Matrix flow_forward_batch(const G& g, const Matrix& x0, const Vector& h, double w, const ode::OdeConfig& cfg = {},
                          ode::OdeStats* stats = nullptr) {
    return push_forward(cfg_field(g, h, w), x0, cfg, stats);
}

template <GuidedField G>
Matrix flow_inverse_batch(const G& g, const Matrix& eps, const Vector& h, double w, const ode::OdeConfig& cfg = {},
                          ode::OdeStats* stats = nullptr) {
    return pull_back(cfg_field(g, h, w), eps, cfg, stats);
}

template <GuidedField G>
LogdetBatch flow_forward_logdet_batch(const G& g, const Matrix& x0, const Vector& h, double w,
                                      const ode::OdeConfig& cfg = {}, ode::OdeStats* stats = nullptr) {
    return push_forward_logdet(cfg_field(g, h, w), x0, cfg, stats);
}

/// psi_{1|h}(x0): integrates the guided ODE from t = 0 to t = 1.
template <GuidedField G>
Vector flow_forward(const G& g, const Vector& x0, const Vector& h, double w, const ode::OdeConfig& cfg = {}) {
    return flow_forward_batch(g, Matrix(x0.transpose()), h, w, cfg).row(0).transpose();
}

/// psi^{-1}_{1|h}(eps): integrates the guided ODE from t = 1 back to t = 0.
template <GuidedField G>
Vector flow_inverse(const G& g, const Vector& eps, const Vector& h, double w, const ode::OdeConfig& cfg = {}) {
    return flow_inverse_batch(g, Matrix(eps.transpose()), h, w, cfg).row(0).transpose();
}

template <GuidedField G>
ode::AugmentedResult flow_forward_logdet(const G& g, const Vector& x0, const Vector& h, double w,
                                         const ode::OdeConfig& cfg = {}) {
    LogdetBatch b = flow_forward_logdet_batch(g, Matrix(x0.transpose()), h, w, cfg);
    return {b.x.row(0).transpose(), b.logdet[0]};
}

}  // namespace fcp::flow
