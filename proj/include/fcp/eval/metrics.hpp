#pragma once

#include <fcp/errors.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace fcp::eval {

inline double empirical_coverage(const std::vector<bool>& covered) {
    if (covered.empty()) throw EmptyInput("coverage of an empty sequence");
    const auto hits = std::count(covered.begin(), covered.end(), true);
    return static_cast<double>(hits) / static_cast<double>(covered.size());
}

/// Trailing-window means: value k is the mean of positions k..k+m-1, i.e. the
/// window ending at index k+m-1.
inline std::vector<double> rolling_coverage(const std::vector<bool>& covered, std::size_t m = 20) {
    if (m < 1) throw UsageError("rolling window must be >= 1");
    if (covered.size() < m) throw TooShort("rolling coverage needs at least m indicators");
    std::vector<double> out;
    out.reserve(covered.size() - m + 1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < covered.size(); ++i) {
        hits += covered[i] ? 1 : 0;
        if (i >= m) hits -= covered[i - m] ? 1 : 0;
        if (i + 1 >= m) out.push_back(static_cast<double>(hits) / static_cast<double>(m));
    }
    return out;
}

struct EvalReport {
    double empirical_coverage = 0.0;
    double average_size = 0.0;
    double size_std = 0.0;  // sample standard deviation
    std::vector<double> rolling_coverage;
    std::vector<bool> covered;
    std::vector<double> sizes;
};

inline EvalReport summarize(const std::vector<bool>& covered, std::span<const double> sizes, std::size_t m = 20) {
    if (covered.size() != sizes.size()) throw LengthMismatch("indicators and sizes differ in length");
    EvalReport r;
    r.empirical_coverage = empirical_coverage(covered);
    const auto n = static_cast<double>(sizes.size());
    r.average_size = std::accumulate(sizes.begin(), sizes.end(), 0.0) / n;
    if (sizes.size() >= 2) {
        double ss = 0.0;
        for (double s : sizes) ss += (s - r.average_size) * (s - r.average_size);
        r.size_std = std::sqrt(ss / (n - 1.0));
    }
    if (covered.size() >= m) r.rolling_coverage = rolling_coverage(covered, m);
    r.covered.assign(covered.begin(), covered.end());
    r.sizes.assign(sizes.begin(), sizes.end());
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    return {{"empirical_coverage", r.empirical_coverage},
            {"average_size", r.average_size},
            {"size_std", r.size_std},
            {"rolling_coverage", r.rolling_coverage},
            {"count", r.covered.size()}};
}

}  // namespace fcp::eval
