#include "moil/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace moil {

void Period::validate() const {
    if (values.rows() < 1) throw ValueError("period '" + period_id + "' is empty");
    if (values.cols() < 1) throw ValueError("period '" + period_id + "' has no axes");
    if (!(sample_rate_hz > 0.0)) throw ValueError("period '" + period_id + "': sample rate must be positive");
    for (double v : values.data()) {
        if (!std::isfinite(v)) throw ValueError("period '" + period_id + "' contains a non-finite value");
    }
    if (labels) {
        if (labels->size() != values.rows()) {
            throw ValueError("period '" + period_id + "': label count differs from length");
        }
        for (int c : *labels) {
            if (c < 0) throw ValueError("period '" + period_id + "': negative class id");
        }
    }
}

std::size_t Dataset::axes() const {
    if (periods.empty()) throw ValueError("dataset is empty");
    return periods.front().axes();
}

double Dataset::sample_rate_hz() const {
    if (periods.empty()) throw ValueError("dataset is empty");
    return periods.front().sample_rate_hz;
}

std::vector<std::size_t> Dataset::unlabeled() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const Role r = i < roles.size() ? roles[i] : Role::unlabeled;
        if (r != Role::labeled) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> Dataset::labeled() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const Role r = i < roles.size() ? roles[i] : Role::unlabeled;
        if (r != Role::unlabeled) out.push_back(i);
    }
    return out;
}

std::vector<std::string> Dataset::worker_ids() const {
    std::vector<std::string> out;
    for (const auto& p : periods) {
        if (std::find(out.begin(), out.end(), p.worker_id) == out.end()) out.push_back(p.worker_id);
    }
    return out;
}

std::vector<std::size_t> Dataset::periods_of(const std::string& worker_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        if (periods[i].worker_id == worker_id) out.push_back(i);
    }
    return out;
}

const Period* Dataset::find(const std::string& period_id) const {
    for (const auto& p : periods) {
        if (p.period_id == period_id) return &p;
    }
    return nullptr;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    for (std::size_t i : indices) {
        out.periods.push_back(periods.at(i));
        out.roles.push_back(i < roles.size() ? roles[i] : Role::unlabeled);
    }
    return out;
}

void Dataset::validate() const {
    if (periods.empty()) throw ValueError("dataset is empty");
    std::unordered_set<std::string> seen;
    for (const auto& p : periods) {
        p.validate();
        if (p.axes() != periods.front().axes()) {
            throw ValueError("period '" + p.period_id + "' has a different axis count");
        }
        if (p.sample_rate_hz != periods.front().sample_rate_hz) {
            throw ValueError("period '" + p.period_id + "' has a different sample rate");
        }
        if (!seen.insert(p.worker_id + '\x1f' + p.period_id).second) {
            throw ValueError("duplicate period '" + p.period_id + "'");
        }
    }
    if (!roles.empty() && roles.size() != periods.size()) {
        throw ValueError("role list does not match period count");
    }
}

void assign_roles(Dataset& dataset, const RoleConfig& config) {
    if (config.labeled_fraction < 0.0 || config.labeled_fraction > 1.0) {
        throw ConfigError("labeled_fraction must lie in [0, 1]");
    }
    std::vector<std::size_t> labelled;
    for (std::size_t i = 0; i < dataset.periods.size(); ++i) {
        if (dataset.periods[i].labeled()) labelled.push_back(i);
    }
    const auto wanted = static_cast<std::size_t>(
        std::ceil(config.labeled_fraction * static_cast<double>(dataset.periods.size()) - 1e-9));
    const std::size_t count = std::min(wanted, labelled.size());

    dataset.roles.assign(dataset.periods.size(), Role::unlabeled);
    for (std::size_t k = 0; k < count; ++k) {
        dataset.roles[labelled[k]] = config.overlap ? Role::both : Role::labeled;
    }
}

namespace {

std::string where(std::size_t line, const std::string& column) {
    return "row " + std::to_string(line) + ", column '" + column + "'";
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line) || line.empty() || line == "\r") {
        throw LoadError("'" + path.string() + "' is empty");
    }
    const auto header_fields = split_csv_line(line);
    std::vector<std::string> header(header_fields.begin(), header_fields.end());
    auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };

    const auto period_col = index_of(schema.period_column);
    if (!period_col) throw LoadError("missing column '" + schema.period_column + "'");
    const auto worker_col = index_of(schema.worker_column);
    const auto time_col = index_of(schema.time_column);
    const auto label_col = index_of(schema.label_column);

    std::vector<std::size_t> axis_cols;
    std::vector<std::string> axis_names;
    if (schema.axis_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == *period_col || (worker_col && c == *worker_col) ||
                (time_col && c == *time_col) || (label_col && c == *label_col)) {
                continue;
            }
            axis_cols.push_back(c);
            axis_names.push_back(header[c]);
        }
    } else {
        for (const auto& name : schema.axis_columns) {
            const auto c = index_of(name);
            if (!c) throw LoadError("missing column '" + name + "'");
            axis_cols.push_back(*c);
            axis_names.push_back(name);
        }
    }
    if (axis_cols.empty()) throw LoadError("no axis columns in '" + path.string() + "'");

    struct Builder {
        std::string worker, period;
        std::vector<double> values;
        std::vector<int> labels;
        std::size_t labelled_rows = 0;
        std::size_t rows = 0;
    };
    std::vector<Builder> builders;
    std::map<std::pair<std::string, std::string>, std::size_t> key_index;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw LoadError("row " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        std::string worker = worker_col ? std::string(fields[*worker_col]) : std::string("w0");
        std::string period(fields[*period_col]);
        if (period.empty()) throw LoadError(where(line_no, schema.period_column) + ": empty period id");

        auto key = std::make_pair(worker, period);
        auto found = key_index.find(key);
        if (found == key_index.end()) {
            key_index.emplace(key, builders.size());
            builders.push_back(Builder{worker, period, {}, {}, 0, 0});
        } else if (found->second != builders.size() - 1) {
            throw LoadError("row " + std::to_string(line_no) + ": period '" + period +
                            "' is not contiguous; rows must be sorted by (worker_id, period_id, t)");
        }
        Builder& b = builders.back();

        if (time_col) {
            long long t = 0;
            try {
                t = parse_integer(fields[*time_col]);
            } catch (const ValueError& e) {
                throw LoadError(where(line_no, schema.time_column) + ": " + e.what());
            }
            if (t != static_cast<long long>(b.rows)) {
                throw LoadError(where(line_no, schema.time_column) + ": expected t=" +
                                std::to_string(b.rows) + ", got " + std::to_string(t));
            }
        }
        for (std::size_t a = 0; a < axis_cols.size(); ++a) {
            double v = 0.0;
            try {
                v = parse_real(fields[axis_cols[a]]);
            } catch (const ValueError& e) {
                throw LoadError(where(line_no, axis_names[a]) + ": " + e.what());
            }
            if (!std::isfinite(v)) throw LoadError(where(line_no, axis_names[a]) + ": non-finite value");
            b.values.push_back(v);
        }
        if (label_col) {
            const auto cell = fields[*label_col];
            if (cell.empty()) {
                b.labels.push_back(-1);
            } else {
                long long c = 0;
                try {
                    c = parse_integer(cell);
                } catch (const ValueError& e) {
                    throw LoadError(where(line_no, schema.label_column) + ": " + e.what());
                }
                if (c < 0) throw LoadError(where(line_no, schema.label_column) + ": negative class id");
                b.labels.push_back(static_cast<int>(c));
                ++b.labelled_rows;
            }
        }
        ++b.rows;
    }
    if (builders.empty()) throw LoadError("'" + path.string() + "' has no data rows");

    Dataset ds;
    for (auto& b : builders) {
        Period p;
        p.worker_id = std::move(b.worker);
        p.period_id = std::move(b.period);
        p.sample_rate_hz = schema.sample_rate_hz;
        p.values = Grid<double>(b.rows, axis_cols.size());
        std::copy(b.values.begin(), b.values.end(), p.values.data().begin());
        if (b.labelled_rows == b.rows && b.rows > 0) {
            p.labels = std::move(b.labels);
        } else if (b.labelled_rows != 0) {
            throw LoadError("period '" + p.period_id + "' is only partially labelled");
        }
        ds.periods.push_back(std::move(p));
    }
    assign_roles(ds, schema.roles);
    ds.validate();
    return ds;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::vector<std::string>& axis_names) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    const std::size_t axes = dataset.axes();
    bool any_labels = false;
    for (const auto& p : dataset.periods) any_labels = any_labels || p.labeled();

    out << "worker_id,period_id,t";
    for (std::size_t a = 0; a < axes; ++a) {
        out << ',' << (a < axis_names.size() ? axis_names[a] : "axis_" + std::to_string(a));
    }
    if (any_labels) out << ",label";
    out << '\n';
    for (const auto& p : dataset.periods) {
        for (std::size_t t = 0; t < p.length(); ++t) {
            out << p.worker_id << ',' << p.period_id << ',' << t;
            for (std::size_t a = 0; a < axes; ++a) out << ',' << format_real(p.values(t, a));
            if (any_labels) {
                out << ',';
                if (p.labels) out << (*p.labels)[t];
            }
            out << '\n';
        }
    }
    if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

Period minmax_normalize(const Period& period) {
    if (period.length() < 1) throw ValueError("period '" + period.period_id + "' is empty");
    Period out = period;
    const std::size_t T = period.length();
    for (std::size_t a = 0; a < period.axes(); ++a) {
        double lo = period.values(0, a);
        double hi = lo;
        for (std::size_t t = 0; t < T; ++t) {
            const double v = period.values(t, a);
            if (!std::isfinite(v)) {
                throw ValueError("period '" + period.period_id + "' contains a non-finite value");
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double range = hi - lo;
        for (std::size_t t = 0; t < T; ++t) {
            out.values(t, a) = range > 0.0 ? (period.values(t, a) - lo) / range : 0.0;
        }
    }
    return out;
}

Symbol symbol_of(double value, int alphabet_size) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ValueError("symbolize: value " + format_real(value) + " outside [0, 1]; normalize first");
    }
    const auto bin = static_cast<int>(std::floor(value * alphabet_size));
    return static_cast<Symbol>(std::min(bin, alphabet_size - 1));
}

SymbolicSeries symbolize(const Period& normalized, int alphabet_size) {
    if (alphabet_size < 2 || alphabet_size > 256) {
        throw ValueError("alphabet size must lie in [2, 256]");
    }
    SymbolicSeries out;
    out.alphabet_size = alphabet_size;
    out.symbols = Grid<Symbol>(normalized.length(), normalized.axes());
    for (std::size_t i = 0; i < normalized.values.data().size(); ++i) {
        out.symbols.data()[i] = symbol_of(normalized.values.data()[i], alphabet_size);
    }
    return out;
}

std::vector<WindowSpan> window_segments(std::size_t series_length, std::size_t length,
                                        std::size_t step) {
    if (length < 1 || step < 1) throw ValueError("window length and step must be >= 1");
    std::vector<WindowSpan> out;
    for (std::size_t start = 0; start + length <= series_length; start += step) {
        out.push_back({start, length});
    }
    return out;
}

Window cut_window(const Period& period, WindowSpan span, const Grid<double>* targets) {
    if (span.start + span.length > period.length()) {
        throw ValueError("window exceeds period '" + period.period_id + "'");
    }
    Window w;
    w.period_id = period.period_id;
    w.start = span.start;
    w.values = period.values.slice_rows(span.start, span.length);
    if (period.labels) {
        w.labels = std::vector<int>(period.labels->begin() + static_cast<std::ptrdiff_t>(span.start),
                                    period.labels->begin() +
                                        static_cast<std::ptrdiff_t>(span.start + span.length));
    }
    if (targets) {
        if (targets->rows() != period.length()) {
            throw ShapeError("targets for '" + period.period_id + "' do not match its length");
        }
        w.targets = targets->slice_rows(span.start, span.length);
    }
    return w;
}

}  // namespace moil
