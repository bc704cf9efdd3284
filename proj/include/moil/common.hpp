#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moil {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag that the CLI prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct LoadError : Error {
    explicit LoadError(const std::string& what) : Error("load_error", what) {}
};
struct ValueError : Error {
    explicit ValueError(const std::string& what) : Error("value_error", what) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};
struct TrainingError : Error {
    explicit TrainingError(const std::string& what) : Error("training_error", what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& what) : Error("integrity_error", what) {}
};

/// Dense row-major 2-D container used for sensor values, symbols and
/// similarity series.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    std::vector<T> column(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    /// Copy of rows [first, first + count).
    Grid slice_rows(std::size_t first, std::size_t count) const {
        Grid out(count, cols_);
        std::copy(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                  data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_),
                  out.data_.begin());
        return out;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Rng = std::mt19937_64;

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
std::size_t uniform_index(Rng& rng, std::size_t n);
/// Uniform real in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);
double uniform_real(Rng& rng, double lo, double hi);
/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(rng, i)]);
    }
}

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::byte> bytes,
                    std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a(std::string_view text);
std::string hex64(std::uint64_t value);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);
/// Strict parse of a whole field; throws ValueError on garbage.
double parse_real(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string_view> split_csv_line(std::string_view line);

void log_warning(std::string_view message);

}  // namespace moil
