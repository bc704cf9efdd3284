#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moil/common.hpp"

namespace moil {

using Symbol = std::uint8_t;

/// One work cycle of multi-axis sensor data.
struct Period {
    std::string worker_id;
    std::string period_id;
    Grid<double> values;  // [T x A]
    double sample_rate_hz = 30.0;
    std::optional<std::vector<int>> labels;  // length T when present

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t axes() const noexcept { return values.cols(); }
    bool labeled() const noexcept { return labels.has_value(); }

    /// Throws ValueError when an invariant is broken.
    void validate() const;
};

enum class Role : std::uint8_t { unlabeled, labeled, both };

struct Dataset {
    std::vector<Period> periods;
    std::vector<Role> roles;  // parallel to periods

    std::size_t size() const noexcept { return periods.size(); }
    std::size_t axes() const;
    double sample_rate_hz() const;

    /// Indices of periods in D_u / D_l.
    std::vector<std::size_t> unlabeled() const;
    std::vector<std::size_t> labeled() const;

    std::vector<std::string> worker_ids() const;  // in first-appearance order
    std::vector<std::size_t> periods_of(const std::string& worker_id) const;
    const Period* find(const std::string& period_id) const;

    /// Dataset made of the listed periods (roles carried over).
    Dataset subset(const std::vector<std::size_t>& indices) const;

    void validate() const;
};

/// How periods are split into D_u and D_l. The first
/// ceil(labeled_fraction * P) labelled periods form D_l; the rest form D_u,
/// or every period does when `overlap` is set.
struct RoleConfig {
    double labeled_fraction = 0.1;
    bool overlap = false;
};

void assign_roles(Dataset& dataset, const RoleConfig& config);

struct CsvSchema {
    std::string worker_column = "worker_id";
    std::string period_column = "period_id";
    std::string time_column = "t";
    std::string label_column = "label";
    /// Empty means every column that is not one of the above.
    std::vector<std::string> axis_columns;
    double sample_rate_hz = 30.0;
    RoleConfig roles;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::vector<std::string>& axis_names = {});

/// Per-axis min-max scaling of one period to [0, 1]. Constant axes map to 0.
Period minmax_normalize(const Period& period);

struct SymbolicSeries {
    Grid<Symbol> symbols;  // [T x A]
    int alphabet_size = 5;

    std::size_t length() const noexcept { return symbols.rows(); }
    std::size_t axes() const noexcept { return symbols.cols(); }
};

/// Equal-width binning of [0, 1] into K symbols, per axis.
SymbolicSeries symbolize(const Period& normalized, int alphabet_size);
Symbol symbol_of(double value, int alphabet_size);

struct WindowSpan {
    std::size_t start = 0;
    std::size_t length = 0;
    friend bool operator==(const WindowSpan&, const WindowSpan&) = default;
};

/// Sliding windows of `length` every `step` samples; trailing remainder dropped.
std::vector<WindowSpan> window_segments(std::size_t series_length, std::size_t length,
                                        std::size_t step);

/// A window of one period. `targets` rows align with `values` rows.
struct Window {
    std::string period_id;
    std::size_t start = 0;
    Grid<double> values;                       // [l x A]
    std::optional<std::vector<int>> labels;    // length l
    std::optional<Grid<double>> targets;       // [l x n]
};

Window cut_window(const Period& period, WindowSpan span,
                  const Grid<double>* targets = nullptr);

}  // namespace moil
