#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "moil/data_model.hpp"
#include "moil/motif_engine.hpp"
#include "moil/tensor.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("moil_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline moil::Tensor random_tensor(std::vector<std::size_t> shape, moil::Rng& rng, double scale = 1.0) {
    moil::Tensor t(std::move(shape));
    for (auto& v : t.data) v = scale * moil::uniform_real(rng, -1.0, 1.0);
    return t;
}

inline moil::SymbolicSeries random_symbols(std::size_t length, std::size_t axes, int alphabet,
                                           moil::Rng& rng) {
    moil::SymbolicSeries s;
    s.alphabet_size = alphabet;
    s.symbols = moil::Grid<moil::Symbol>(length, axes);
    for (auto& v : s.symbols.data()) {
        v = static_cast<moil::Symbol>(moil::uniform_index(rng, static_cast<std::size_t>(alphabet)));
    }
    return s;
}

inline moil::Motif motif_of(const moil::SymbolicSeries& source, std::size_t offset, std::size_t length) {
    moil::Motif m;
    m.symbols = source.symbols.slice_rows(offset, length);
    m.source_offset = offset;
    return m;
}

/// Naive sliding count: mismatches[j][a] for every offset j in [0, T - |m|).
inline std::vector<std::vector<long>> naive_mismatches(const moil::Motif& m, const moil::SymbolicSeries& s) {
    const std::size_t len = m.length();
    const std::size_t axes = s.axes();
    std::vector<std::vector<long>> out;
    for (std::size_t j = 0; j + len < s.length(); ++j) {
        std::vector<long> row(axes, 0);
        for (std::size_t a = 0; a < axes; ++a) {
            for (std::size_t i = 0; i < len; ++i) {
                if (m.symbols(i, a) != s.symbols(j + i, a)) ++row[a];
            }
        }
        out.push_back(row);
    }
    return out;
}

/// Axis-mean of negated mismatch counts, pooled min-max over all periods,
/// tail repeated to full length. A zero range yields 0.5 everywhere.
inline std::vector<std::vector<double>> naive_finalized(const moil::Motif& m,
                                                        const std::vector<moil::SymbolicSeries>& periods) {
    std::vector<std::vector<double>> averaged;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : periods) {
        std::vector<double> avg;
        for (const auto& row : naive_mismatches(m, s)) {
            long total = 0;
            for (long c : row) total += c;
            const double v = -static_cast<double>(total) / static_cast<double>(row.size());
            avg.push_back(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        averaged.push_back(avg);
    }
    std::vector<std::vector<double>> out;
    for (std::size_t p = 0; p < periods.size(); ++p) {
        std::vector<double> series;
        for (double v : averaged[p]) series.push_back(hi > lo ? (v - lo) / (hi - lo) : 0.5);
        const double last = series.back();
        while (series.size() < periods[p].length()) series.push_back(last);
        out.push_back(series);
    }
    return out;
}

}  // namespace testing
