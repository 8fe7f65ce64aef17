#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/errors.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fcp::data {

/// Aligned observations: features x_i, outcomes y_i and optionally external predictions.
struct SeriesDataset {
    std::vector<double> timestamps;
    Matrix x;                     // T x d_x
    Matrix y;                     // T x d_y
    std::optional<Matrix> y_hat;  // T x d_y
    std::optional<Matrix> noise;  // true outcome noise, synthetic data only

    Eigen::Index length() const { return y.rows(); }
    Eigen::Index d_x() const { return x.cols(); }
    Eigen::Index d_y() const { return y.cols(); }

    void validate() const {
        const auto t = static_cast<Eigen::Index>(timestamps.size());
        if (x.rows() != t || y.rows() != t || (y_hat && y_hat->rows() != t))
            throw LengthMismatch("dataset columns differ in length");
        if (y_hat && y_hat->cols() != y.cols()) throw ShapeMismatch("prediction columns must match outcome width");
        for (std::size_t i = 1; i < timestamps.size(); ++i)
            if (!(timestamps[i] > timestamps[i - 1])) throw NonMonotoneTimestamp(i + 2);
        if (!x.allFinite() || !y.allFinite() || (y_hat && !y_hat->allFinite()))
            throw UsageError("dataset contains non-finite values");
    }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

}  // namespace detail

/// Column counts read from a header `timestamp,x_1..,y_1..[,yhat_1..]`.
struct CsvLayout {
    int d_x = 0;
    int d_y = 0;
    bool has_predictions = false;
};

inline CsvLayout infer_layout(std::string_view header) {
    CsvLayout l;
    int yhat = 0;
    const auto cols = detail::split_commas(header);
    for (std::size_t c = 1; c < cols.size(); ++c) {
        const auto name = detail::trim(cols[c]);
        if (detail::starts_with(name, "yhat"))
            ++yhat;
        else if (detail::starts_with(name, "x"))
            ++l.d_x;
        else if (detail::starts_with(name, "y"))
            ++l.d_y;
        else
            throw MalformedRow(1);
    }
    if (l.d_y < 1 || (yhat != 0 && yhat != l.d_y)) throw MalformedRow(1);
    l.has_predictions = yhat > 0;
    return l;
}

/// Parses CSV rows `timestamp, x_1..x_{d_x}, y_1..y_{d_y}[, yhat_1..yhat_{d_y}]`
/// after one header line. LF or CRLF line endings; blank lines are skipped.
inline SeriesDataset load_csv(std::istream& in, int d_x, int d_y) {
    if (d_x < 0 || d_y < 1) throw UsageError("load_csv: need d_x >= 0 and d_y >= 1");
    std::string line;
    if (!std::getline(in, line)) throw MalformedRow(1);
    const std::size_t base = 1 + static_cast<std::size_t>(d_x + d_y);
    const std::size_t with_pred = base + static_cast<std::size_t>(d_y);
    const std::size_t header_cols = detail::split_commas(detail::trim(line)).size();
    if (header_cols != base && header_cols != with_pred) throw MalformedRow(1);
    const bool has_pred = header_cols == with_pred;

    std::vector<double> ts;
    std::vector<double> vals;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto row = detail::trim(line);
        if (row.empty()) continue;
        const auto cells = detail::split_commas(row);
        if (cells.size() != header_cols) throw MalformedRow(lineno);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto cell = detail::trim(cells[c]);
            if (cell.empty()) throw MalformedRow(lineno);
            double v = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            if (*first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ptr != last) throw MalformedRow(lineno);
            if (ec == std::errc::result_out_of_range) throw NaNValue(lineno, c + 1);
            if (ec != std::errc()) throw MalformedRow(lineno);
            if (!std::isfinite(v)) throw NaNValue(lineno, c + 1);
            if (c == 0) {
                if (!ts.empty() && !(v > ts.back())) throw NonMonotoneTimestamp(lineno);
                ts.push_back(v);
            } else {
                vals.push_back(v);
            }
        }
    }

    const auto t = static_cast<Eigen::Index>(ts.size());
    const auto w = static_cast<Eigen::Index>(header_cols - 1);
    const Eigen::Map<const Matrix> all(vals.data(), t, w);
    SeriesDataset ds;
    ds.timestamps = std::move(ts);
    ds.x = all.leftCols(d_x);
    ds.y = all.middleCols(d_x, d_y);
    if (has_pred) ds.y_hat = all.rightCols(d_y);
    return ds;
}

inline SeriesDataset load_csv(const std::string& path, int d_x, int d_y) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open dataset " + path);
    return load_csv(in, d_x, d_y);
}

/// Loads with column counts taken from the header names.
inline SeriesDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open dataset " + path);
    std::string header;
    if (!std::getline(in, header)) throw MalformedRow(1);
    const CsvLayout l = infer_layout(detail::trim(header));
    in.clear();
    in.seekg(0);
    return load_csv(in, l.d_x, l.d_y);
}

inline void save_csv(std::ostream& os, const SeriesDataset& ds) {
    os << "timestamp";
    for (Eigen::Index j = 0; j < ds.d_x(); ++j) os << ",x_" << j + 1;
    for (Eigen::Index j = 0; j < ds.d_y(); ++j) os << ",y_" << j + 1;
    if (ds.y_hat)
        for (Eigen::Index j = 0; j < ds.d_y(); ++j) os << ",yhat_" << j + 1;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < ds.length(); ++i) {
        os << ds.timestamps[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < ds.d_x(); ++j) os << ',' << ds.x(i, j);
        for (Eigen::Index j = 0; j < ds.d_y(); ++j) os << ',' << ds.y(i, j);
        if (ds.y_hat)
            for (Eigen::Index j = 0; j < ds.d_y(); ++j) os << ',' << (*ds.y_hat)(i, j);
        os << '\n';
    }
}

inline void save_csv(const std::string& path, const SeriesDataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open " + path + " for writing");
    save_csv(os, ds);
    if (!os) throw Error("write failed: " + path);
}

}  // namespace fcp::data
