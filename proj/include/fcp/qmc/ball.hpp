#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>
#include <fcp/qmc/sobol.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcp::qmc {

/// Standard normal quantile (Wichura, AS 241 PPND16; ~1e-16 relative accuracy).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw UsageError("normal_quantile: p outside [0,1]");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

/// Maps u in [0,1)^(d+1) to a point of the closed d-ball of radius r.
///
/// The first d coordinates give a Gaussian direction z/||z||; the last gives
/// the radius r * u^(1/d). Uniform u yields a uniform point in the ball.
inline Vector ball_point(const Vector& u, int d, double r) {
    if (d < 1 || u.size() != d + 1) throw ShapeMismatch("ball_point expects d+1 coordinates");
    constexpr double kClamp = 1e-12;
    Vector z(d);
    for (int k = 0; k < d; ++k) z[k] = normal_quantile(std::clamp(u[k], kClamp, 1.0 - kClamp));
    const double zn = z.norm();
    const double u_r = std::clamp(u[d], 0.0, 1.0);
    if (zn == 0.0 || u_r == 0.0) return Vector::Zero(d);
    const double radius = r * std::pow(u_r, 1.0 / d);
    Vector p = (radius / zn) * z;
    // keep ||p|| <= r exactly in floating point
    const double pn = p.norm();
    if (pn > r) p *= r / pn;
    return p;
}

/// Emits low-discrepancy points in the d-ball of radius r from a (d+1)-dim Sobol stream.
class BallSampler {
public:
    BallSampler(int d, double r) : d_(d), r_(r), stream_(d + 1) {
        if (!(r >= 0.0)) throw UsageError("ball radius must be non-negative");
    }

    int dimension() const noexcept { return d_; }
    double radius() const noexcept { return r_; }

    Vector next() { return ball_point(stream_.next(), d_, r_); }

    /// n x d matrix of the next n points.
    Matrix take(std::size_t n) {
        Matrix out(static_cast<Eigen::Index>(n), d_);
        for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = next().transpose();
        return out;
    }

private:
    int d_;
    double r_;
    SobolStream stream_;
};

}  // namespace fcp::qmc
