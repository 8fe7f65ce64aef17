#pragma once

#include <fcp/data/dataset.hpp>
#include <fcp/errors.hpp>

#include <cstddef>
#include <vector>

namespace fcp::data {

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
};

/// Chronological train / validation / test ranges.
struct SplitPlan {
    IndexRange train;
    IndexRange validation;
    IndexRange test;
};

/// First floor(0.8 T) for training, next ceil(0.1 T) for validation, rest for test.
inline SplitPlan make_splits(std::size_t t) {
    if (t < 10) throw TooShort("splits need at least 10 observations");
    const std::size_t n_train = (8 * t) / 10;
    const std::size_t n_val = (t + 9) / 10;
    SplitPlan p;
    p.train = {0, n_train};
    p.validation = {n_train, n_train + n_val};
    p.test = {n_train + n_val, t};
    return p;
}

/// Lagged feature window x_{i-k..i-1} (oldest first) with its outcome.
struct SlidingWindow {
    Matrix window;  // k x d_x
    Vector y;
    std::size_t index = 0;
};

inline std::vector<SlidingWindow> sliding_windows(const SeriesDataset& ds, std::size_t k) {
    const auto t = static_cast<std::size_t>(ds.length());
    if (k < 1 || k >= t) throw UsageError("sliding window needs 1 <= k < T");
    std::vector<SlidingWindow> out;
    out.reserve(t - k);
    for (std::size_t i = k; i < t; ++i)
        out.push_back({ds.x.middleRows(static_cast<Eigen::Index>(i - k), static_cast<Eigen::Index>(k)),
                       ds.y.row(static_cast<Eigen::Index>(i)).transpose(), i});
    return out;
}

}  // namespace fcp::data
