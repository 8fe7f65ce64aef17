#pragma once

#include <fcp/errors.hpp>
#include <fcp/qmc/ball.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace fcp::conformal {

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw UsageError("gamma_p: requires a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        // power series
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 10000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-17) break;
        }
        return std::min(1.0, sum * std::exp(log_prefix));
    }
    // continued fraction for Q(a, x), modified Lentz
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

inline double chi_square_cdf(double x, double dof) { return x <= 0.0 ? 0.0 : gamma_p(0.5 * dof, 0.5 * x); }

inline double chi_square_pdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    const double k = 0.5 * dof;
    return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::numbers::ln2 - std::lgamma(k));
}

/// Chi-square quantile: Newton on the incomplete gamma, Wilson-Hilferty start,
/// with a bisection bracket guarding every step.
inline double chi_square_quantile(double p, int dof) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("chi quantile: p must lie in (0,1), got " + std::to_string(p));
    if (dof < 1) throw UsageError("chi quantile: degrees of freedom must be >= 1");
    const double k = dof;
    const double z = qmc::normal_quantile(p);
    const double c = 2.0 / (9.0 * k);
    double x = k * std::pow(std::max(1.0 - c + z * std::sqrt(c), 1e-3), 3.0);

    double lo = 0.0;
    double hi = std::max(2.0 * x, 1.0);
    while (chi_square_cdf(hi, k) < p) hi *= 2.0;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

    for (int it = 0; it < 200; ++it) {
        const double f = chi_square_cdf(x, k) - p;
        if (f == 0.0) return x;
        if (f < 0.0)
            lo = x;
        else
            hi = x;
        const double pdf = chi_square_pdf(x, k);
        double next = pdf > 0.0 ? x - f / pdf : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        if (step <= 1e-15 * std::max(1.0, x) || hi - lo <= 1e-15 * std::max(1.0, x)) break;
    }
    return x;
}

/// Quantile of the chi distribution with d degrees of freedom.
inline double chi_quantile(double p, int d) { return std::sqrt(chi_square_quantile(p, d)); }

/// Radius of the centered ball holding mass 1 - alpha under N(0, gamma I_d).
struct Radius {
    double alpha = 0.0;
    int d = 0;
    double gamma = 1.0;
    double value = 0.0;
};

inline Radius make_radius(double alpha, int d, double gamma) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
    if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
    return Radius{alpha, d, gamma, std::sqrt(gamma) * chi_quantile(1.0 - alpha, d)};
}

/// Lebesgue volume of the d-ball of radius r.
inline double ball_volume(int d, double r) {
    if (r < 0.0) throw UsageError("ball_volume: negative radius");
    if (d < 1) throw UsageError("ball_volume: dimension must be >= 1");
    const double hd = 0.5 * d;
    return std::exp(hd * std::log(std::numbers::pi) - std::lgamma(hd + 1.0)) * std::pow(r, d);
}

}  // namespace fcp::conformal
