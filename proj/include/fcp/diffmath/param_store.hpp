#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fcp::diffmath {

/// Named parameter matrices with insertion-ordered, deterministic iteration.
class ParamStore {
public:
    using Entry = std::pair<std::string, Matrix>;

    void add(std::string name, Matrix value) {
        if (index_.contains(name)) throw UsageError("duplicate parameter name: " + name);
        index_.emplace(name, entries_.size());
        entries_.emplace_back(std::move(name), std::move(value));
    }

    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    const Matrix& at(std::string_view name) const { return entries_[slot(name)].second; }
    Matrix& at(std::string_view name) { return entries_[slot(name)].second; }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, m] : entries_) n += static_cast<std::size_t>(m.size());
        return n;
    }

    ParamStore zeros_like() const {
        ParamStore out;
        for (const auto& [name, m] : entries_) out.add(name, Matrix::Zero(m.rows(), m.cols()));
        return out;
    }

    /// Adds every entry of `other` into the same-named entry here (shapes must match).
    void accumulate(const ParamStore& other, double scale = 1.0) {
        for (const auto& [name, m] : other) {
            Matrix& dst = at(name);
            if (dst.rows() != m.rows() || dst.cols() != m.cols())
                throw ShapeMismatch("gradient shape mismatch for " + name);
            dst += scale * m;
        }
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& [name, m] : entries_) s += m.squaredNorm();
        return s;
    }

    /// Copies all entries whose names start with `prefix` from `other`.
    void merge(const ParamStore& other, std::string_view prefix = {}) {
        for (const auto& [name, m] : other)
            if (name.starts_with(prefix)) add(name, m);
    }

private:
    std::size_t slot(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw UsageError("unknown parameter: " + std::string(name));
        return it->second;
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    auto ib = b.begin();
    for (const auto& [name, m] : a) {
        if (name != ib->first || m.rows() != ib->second.rows() || m.cols() != ib->second.cols()) return false;
        if (std::memcmp(m.data(), ib->second.data(), sizeof(double) * static_cast<std::size_t>(m.size())) != 0)
            return false;
        ++ib;
    }
    return true;
}

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw UsageError("truncated parameter checkpoint");
    return v;
}

}  // namespace detail

inline constexpr char kParamMagic[8] = {'F', 'C', 'P', 'P', 'A', 'R', 'M', '\0'};
inline constexpr std::uint32_t kParamFormatVersion = 1;

// Layout: magic[8], u32 version, u64 count, then per entry
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major).
inline void save(std::ostream& os, const ParamStore& ps) {
    os.write(kParamMagic, sizeof(kParamMagic));
    detail::write_pod(os, kParamFormatVersion);
    detail::write_pod(os, static_cast<std::uint64_t>(ps.size()));
    for (const auto& [name, m] : ps) {
        detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod(os, static_cast<std::uint64_t>(m.rows()));
        detail::write_pod(os, static_cast<std::uint64_t>(m.cols()));
        os.write(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    }
    if (!os) throw UsageError("failed writing parameter checkpoint");
}

inline ParamStore load(std::istream& is) {
    char magic[sizeof(kParamMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kParamMagic, sizeof(magic)) != 0)
        throw UsageError("not a parameter checkpoint (bad magic)");
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != kParamFormatVersion)
        throw UsageError("unsupported parameter checkpoint version " + std::to_string(version));
    const auto count = detail::read_pod<std::uint64_t>(is);
    ParamStore ps;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = detail::read_pod<std::uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        const auto rows = detail::read_pod<std::uint64_t>(is);
        const auto cols = detail::read_pod<std::uint64_t>(is);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        is.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * rows * cols));
        if (!is) throw UsageError("truncated parameter checkpoint");
        if (!m.allFinite()) throw UsageError("non-finite value in checkpoint entry " + name);
        ps.add(std::move(name), std::move(m));
    }
    return ps;
}

}  // namespace fcp::diffmath

namespace fcp {
using diffmath::ParamStore;
}  // namespace fcp
