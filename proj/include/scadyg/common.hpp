#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scadyg {

// Error categories map onto CLI exit codes (usage 2, data 3, numeric 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

using NodeId = std::uint64_t;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data size does not match shape");
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void resize(std::size_t rows, std::size_t cols) {
        rows_ = rows;
        cols_ = cols;
        data_.assign(rows * cols, 0.0);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// y = x * m for a row vector x.
inline void row_times_matrix(std::span<const double> x, const Matrix& m, std::span<double> y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const auto mr = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += xi * mr[j];
    }
}

/// y = m * x for a column vector x.
inline void matrix_times_col(const Matrix& m, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto mr = m.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += mr[j] * x[j];
        y[i] = acc;
    }
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Max-norm relative deviation of `got` from `want`.
inline double max_rel_deviation(std::span<const double> got, std::span<const double> want) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        scale = std::max(scale, std::abs(want[i]));
        diff = std::max(diff, std::abs(got[i] - want[i]));
    }
    if (scale == 0.0) return diff;
    return diff / scale;
}

/// Shortest decimal form that round-trips a double (17 significant digits).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// SplitMix64 finalizer, used to derive independent RNG seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Little-endian binary containers. Every on-disk format is a 4-byte magic, a
// u32 version, then fixed-width little-endian fields.

class BinaryWriter {
public:
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void str(std::string_view s) {
        u64(s.size());
        bytes(s);
    }
    void f64s(std::span<const double> v) {
        for (double d : v) f64(d);
    }
    void u64s(std::span<const std::uint64_t> v) {
        for (auto x : v) u64(x);
    }

    const std::vector<char>& buffer() const noexcept { return buf_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + path);
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw DataError("write failed: " + path);
    }

private:
    template <typename T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }

    std::vector<char> buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::vector<char> data, std::string origin = "<memory>")
        : buf_(std::move(data)), origin_(std::move(origin)) {}

    static BinaryReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open: " + path);
        std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinaryReader(std::move(data), path);
    }

    /// Checks the magic and version; throws DataError on mismatch.
    void expect_header(std::string_view magic, std::uint32_t version) {
        need(magic.size());
        if (std::string_view(buf_.data() + pos_, magic.size()) != magic) {
            throw DataError(origin_ + ": bad magic, expected " + std::string(magic));
        }
        pos_ += magic.size();
        const auto v = u32();
        if (v != version) {
            throw DataError(origin_ + ": unsupported " + std::string(magic) + " version " +
                            std::to_string(v) + " (expected " + std::to_string(version) + ")");
        }
    }

    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string str() {
        const auto n = u64();
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> f64s(std::size_t n) {
        need_items(n, 8);
        std::vector<double> v(n);
        for (auto& d : v) d = f64();
        return v;
    }
    std::vector<std::uint64_t> u64s(std::size_t n) {
        need_items(n, 8);
        std::vector<std::uint64_t> v(n);
        for (auto& x : v) x = u64();
        return v;
    }

    bool at_end() const noexcept { return pos_ == buf_.size(); }
    const std::string& origin() const noexcept { return origin_; }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw DataError(origin_ + ": truncated container");
    }
    void need_items(std::size_t n, std::size_t width) const {
        if (n > (buf_.size() - pos_) / width) throw DataError(origin_ + ": truncated container");
    }

    template <typename T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }

    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::string origin_;
};

}  // namespace scadyg
