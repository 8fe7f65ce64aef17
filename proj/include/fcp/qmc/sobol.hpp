#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>
#include <fcp/qmc/sobol_table.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace fcp::qmc {

/// Unscrambled Sobol sequence with Joe-Kuo direction numbers (Gray-code order).
///
/// The stream is fully determined by (dimension, index). The all-zeros point
/// at index 0 is never emitted: a fresh stream starts at index 1.
class SobolStream {
public:
    static constexpr int kBits = 32;

    explicit SobolStream(int dimension, std::uint64_t index = 1) : dimension_(dimension) {
        if (dimension < 1 || dimension > detail::kMaxSobolDimension)
            throw UsageError("Sobol dimension " + std::to_string(dimension) + " unsupported (1.." +
                             std::to_string(detail::kMaxSobolDimension) + ")");
        directions_.resize(static_cast<std::size_t>(dimension));
        for (int j = 0; j < dimension; ++j) directions_[static_cast<std::size_t>(j)] = make_directions(j);
        state_.assign(static_cast<std::size_t>(dimension), 0u);
        seek(index == 0 ? 1 : index);
    }

    int dimension() const noexcept { return dimension_; }
    /// Index of the point the next call to next() returns.
    std::uint64_t index() const noexcept { return index_; }

    /// Positions the stream so that next() returns the point with this index.
    void seek(std::uint64_t index) {
        if (index >= (std::uint64_t{1} << kBits)) throw UsageError("Sobol index exceeds 2^32");
        index_ = index;
        const std::uint64_t gray = index ^ (index >> 1);
        for (std::size_t j = 0; j < state_.size(); ++j) {
            std::uint32_t x = 0;
            for (int b = 0; b < kBits; ++b)
                if ((gray >> b) & 1u) x ^= directions_[j][static_cast<std::size_t>(b)];
            state_[j] = x;
        }
    }

    /// Returns the next point in [0,1)^dimension.
    Vector next() {
        Vector p(dimension_);
        for (int j = 0; j < dimension_; ++j) p[j] = static_cast<double>(state_[static_cast<std::size_t>(j)]) * kScale;
        advance();
        return p;
    }

    /// Rows are the next n points.
    Matrix take(std::size_t n) {
        Matrix out(static_cast<Eigen::Index>(n), dimension_);
        for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = next().transpose();
        return out;
    }

private:
    static constexpr double kScale = 1.0 / 4294967296.0;

    static std::array<std::uint32_t, kBits> make_directions(int dim) {
        const auto& e = detail::kJoeKuo[static_cast<std::size_t>(dim)];
        std::array<std::uint32_t, kBits> v{};
        if (e.degree == 0) {
            for (int i = 0; i < kBits; ++i) v[static_cast<std::size_t>(i)] = 1u << (kBits - 1 - i);
            return v;
        }
        const int s = e.degree;
        const std::uint32_t a = (e.poly >> 1) & ((1u << (s - 1)) - 1u);
        for (int i = 0; i < s && i < kBits; ++i)
            v[static_cast<std::size_t>(i)] = e.m[static_cast<std::size_t>(i)] << (kBits - 1 - i);
        for (int i = s; i < kBits; ++i) {
            std::uint32_t x = v[static_cast<std::size_t>(i - s)] ^ (v[static_cast<std::size_t>(i - s)] >> s);
            for (int k = 1; k < s; ++k)
                if ((a >> (s - 1 - k)) & 1u) x ^= v[static_cast<std::size_t>(i - k)];
            v[static_cast<std::size_t>(i)] = x;
        }
        return v;
    }

    void advance() {
        // Gray-code update: flip the direction number of the lowest zero bit of the current index.
        const int c = std::countr_one(index_);
        if (c >= kBits) throw UsageError("Sobol sequence exhausted");
        for (std::size_t j = 0; j < state_.size(); ++j) state_[j] ^= directions_[j][static_cast<std::size_t>(c)];
        ++index_;
    }

    int dimension_;
    std::uint64_t index_ = 0;
    std::vector<std::array<std::uint32_t, kBits>> directions_;
    std::vector<std::uint32_t> state_;
};

inline Vector sobol_next(SobolStream& stream) { return stream.next(); }

}  // namespace fcp::qmc
