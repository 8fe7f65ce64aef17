#pragma once

#include <fcp/errors.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace fcp::qmc {

/// (sample std / sqrt(N)) / |mean|.
inline double relative_se(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw UsageError("relative_se needs at least two values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    if (mean == 0.0) throw ZeroMean();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return sd / std::sqrt(static_cast<double>(n)) / std::abs(mean);
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Doubles N from `start` until `se_of(N) < gate`; throws GateUnreachable if
/// the gate still fails at `max_n`.
template <class SeFn>
std::size_t select_sample_size_by(SeFn&& se_of, std::size_t start, double gate, std::size_t max_n) {
    if (!is_power_of_two(start)) throw UsageError("sample size start must be a power of two");
    if (max_n < start) throw UsageError("max sample size below start");
    for (std::size_t n = start;; n *= 2) {
        if (n > max_n) n = max_n;
        if (se_of(n) < gate) return n;
        if (n >= max_n) throw GateUnreachable(max_n);
    }
}

/// Smallest doubling of `start` whose determinant sample has relative SE below `gate`.
/// `evaluator(N)` returns N determinants.
template <class Evaluator>
std::size_t select_sample_size(Evaluator&& evaluator, std::size_t start, double gate = 0.01,
                               std::size_t max_n = std::size_t{1} << 20) {
    return select_sample_size_by(
        [&](std::size_t n) {
            const std::vector<double> dets = evaluator(n);
            return relative_se(dets);
        },
        start, gate, max_n);
}

}  // namespace fcp::qmc
