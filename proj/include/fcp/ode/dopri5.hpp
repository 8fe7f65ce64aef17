#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

namespace fcp::ode {

struct OdeConfig {
    double abs_tol = 1e-5;
    double rel_tol = 1e-5;
    double initial_step = 1e-2;  // fraction of |t1 - t0|
    std::size_t max_steps = 100000;
    double safety = 0.9;

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw UsageError("ODE tolerances must be positive");
        if (max_steps < 1) throw UsageError("max_steps must be >= 1");
        if (!(initial_step > 0.0)) throw UsageError("initial_step must be positive");
    }
};

struct OdeStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
// error weights: 5th order minus embedded 4th order
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

inline constexpr double kOrder = 5.0;
inline constexpr double kAlpha = 0.7 / kOrder;
inline constexpr double kBeta = 0.4 / kOrder;
inline constexpr double kMinFactor = 0.2;
inline constexpr double kMaxFactor = 5.0;

}  // namespace detail

/// Integrates dx/dt = f(t, x) from t0 to t1 (either direction) with adaptive
/// Dormand-Prince 5(4) steps and a PI step-size controller.
///
/// `f` is any callable `(double t, const Vector& x) -> Vector`. Backward
/// integration uses negative steps on the same field.
template <class F>
Vector integrate(F&& f, Vector x0, double t0, double t1, const OdeConfig& cfg = {}, OdeStats* stats = nullptr) {
    using namespace detail;
    cfg.validate();
    if (!x0.allFinite()) throw NonFiniteState(t0);
    OdeStats local;
    OdeStats& st = stats ? *stats : local;
    if (t0 == t1 || x0.size() == 0) return x0;

    const double span = t1 - t0;
    const double dir = span > 0 ? 1.0 : -1.0;
    double h = dir * std::abs(span) * cfg.initial_step;
    double t = t0;
    Vector x = std::move(x0);

    auto eval = [&](double tt, const Vector& xx) -> Vector {
        ++st.evaluations;
        Vector k = f(tt, xx);
        if (k.size() != xx.size()) throw ShapeMismatch("vector field returned wrong dimension");
        return k;
    };

    Vector k1 = eval(t, x);
    Vector k2, k3, k4, k5, k6, k7, xs, xn, err;
    double err_prev = 1.0;
    bool last_rejected = false;
    std::size_t steps = 0;

    while (dir * (t1 - t) > 0.0) {
        if (steps >= cfg.max_steps) throw MaxStepsExceeded(cfg.max_steps);
        ++steps;
        bool final_step = false;
        if (dir * (t + h - t1) >= 0.0) {
            h = t1 - t;
            final_step = true;
        }

        xs = x + h * a21 * k1;
        k2 = eval(t + c2 * h, xs);
        xs = x + h * (a31 * k1 + a32 * k2);
        k3 = eval(t + c3 * h, xs);
        xs = x + h * (a41 * k1 + a42 * k2 + a43 * k3);
        k4 = eval(t + c4 * h, xs);
        xs = x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        k5 = eval(t + c5 * h, xs);
        xs = x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        k6 = eval(t + h, xs);
        xn = x + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        k7 = eval(t + h, xn);
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        // RMS of component errors scaled by abs_tol + rel_tol * max(|x|, |x_new|)
        const auto scale_vec = cfg.abs_tol + cfg.rel_tol * x.cwiseAbs().cwiseMax(xn.cwiseAbs()).array();
        const double en = std::sqrt((err.array() / scale_vec).square().mean());

        if (!std::isfinite(en) || !xn.allFinite()) {
            if (!xn.allFinite() && std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) throw NonFiniteState(t);
            h *= kMinFactor;
            last_rejected = true;
            ++st.rejected;
            continue;
        }

        if (en <= 1.0) {
            double fac = en == 0.0 ? kMaxFactor
                                   : cfg.safety * std::pow(en, -kAlpha) * std::pow(err_prev, kBeta);
            fac = std::clamp(fac, kMinFactor, kMaxFactor);
            if (last_rejected) fac = std::min(fac, 1.0);
            t = final_step ? t1 : t + h;
            x.swap(xn);
            k1.swap(k7);
            err_prev = std::max(en, 1e-4);
            last_rejected = false;
            ++st.accepted;
            h *= fac;
        } else {
            const double fac = std::max(kMinFactor, cfg.safety * std::pow(en, -kAlpha));
            h *= fac;
            last_rejected = true;
            ++st.rejected;
        }
        if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) throw NonFiniteState(t);
    }
    if (!x.allFinite()) throw NonFiniteState(t);
    return x;
}

/// State and accumulated log|det J| from integrate_augmented.
struct AugmentedResult {
    Vector x;
    double logdet = 0.0;
};

/// Jointly integrates dx/dt = f(t, x) and d(logdet)/dt = div_f(t, x) from (x0, 0).
template <class F, class Div>
AugmentedResult integrate_augmented(F&& f, Div&& div_f, const Vector& x0, double t0, double t1,
                                    const OdeConfig& cfg = {}, OdeStats* stats = nullptr) {
    const Eigen::Index d = x0.size();
    Vector z(d + 1);
    z.head(d) = x0;
    z[d] = 0.0;
    auto g = [&](double t, const Vector& s) -> Vector {
        const Vector xs = s.head(d);
        Vector out(d + 1);
        out.head(d) = f(t, xs);
        out[d] = div_f(t, xs);
        return out;
    };
    Vector zf = integrate(g, std::move(z), t0, t1, cfg, stats);
    return {zf.head(d), zf[d]};
}

}  // namespace fcp::ode
