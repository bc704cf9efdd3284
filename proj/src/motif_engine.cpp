#include "moil/motif_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace moil {

using nlohmann::json;

CandidateConfig default_candidate_config(double sample_rate_hz, std::size_t groups) {
    auto samples = [&](double seconds) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(seconds * sample_rate_hz)));
    };
    return CandidateConfig{{samples(1.0), samples(2.0), samples(4.0)}, samples(0.5), groups};
}

std::vector<Motif> generate_candidates(const SymbolicSeries& initial, const std::string& period_id,
                                       const CandidateConfig& config) {
    if (config.window_sizes.empty()) throw ValueError("generate_candidates: no window sizes given");
    if (config.step < 1) throw ValueError("generate_candidates: step must be >= 1");
    if (config.groups < 1) throw ValueError("generate_candidates: group count must be >= 1");
    const std::size_t T = initial.length();
    std::vector<Motif> out;
    for (std::size_t w : config.window_sizes) {
        if (w < 1 || w > T) {
            throw ValueError("generate_candidates: window size " + std::to_string(w) +
                             " does not fit initial period of length " + std::to_string(T));
        }
        for (std::size_t offset = 0; offset + w <= T; offset += config.step) {
            Motif m;
            m.symbols = initial.symbols.slice_rows(offset, w);
            m.source_period_id = period_id;
            m.source_offset = offset;
            m.segment_group = std::min(offset * config.groups / T, config.groups - 1);
            out.push_back(std::move(m));
        }
    }
    return out;
}

std::size_t symbol_distance(const Grid<Symbol>& a, const Grid<Symbol>& b, std::size_t axis) {
    if (a.rows() != b.rows()) throw ShapeError("symbol_distance: blocks differ in length");
    if (axis >= a.cols() || axis >= b.cols()) throw ShapeError("symbol_distance: axis out of range");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) d += a(i, axis) != b(i, axis) ? 1 : 0;
    return d;
}

namespace {

// Per-axis contiguous symbol columns of one period.
std::vector<std::vector<Symbol>> columns_of(const Grid<Symbol>& symbols) {
    std::vector<std::vector<Symbol>> cols(symbols.cols());
    for (std::size_t a = 0; a < symbols.cols(); ++a) cols[a] = symbols.column(a);
    return cols;
}

// Mismatch counts accumulated motif-row by motif-row so the inner loop runs
// over contiguous offsets.
Grid<double> sweep(const Motif& motif, const std::vector<std::vector<Symbol>>& columns,
                   std::size_t T, const std::string& period_id) {
    const std::size_t m = motif.length();
    if (T < m + 1) {
        throw ValueError("period '" + period_id + "' (length " + std::to_string(T) +
                         ") is shorter than motif length + 1 (" + std::to_string(m + 1) + ")");
    }
    if (columns.size() != motif.symbols.cols()) {
        throw ShapeError("motif and period '" + period_id + "' differ in axis count");
    }
    const std::size_t R = T - m;
    Grid<double> out(R, columns.size());
    std::vector<std::uint32_t> dist(R);
    for (std::size_t a = 0; a < columns.size(); ++a) {
        std::fill(dist.begin(), dist.end(), 0U);
        const Symbol* col = columns[a].data();
        for (std::size_t i = 0; i < m; ++i) {
            const Symbol s = motif.symbols(i, a);
            const Symbol* shifted = col + i;
            for (std::size_t j = 0; j < R; ++j) dist[j] += shifted[j] != s ? 1U : 0U;
        }
        for (std::size_t j = 0; j < R; ++j) out(j, a) = 0.0 - static_cast<double>(dist[j]);
    }
    return out;
}

}  // namespace

Grid<double> similarity_series_raw(const Motif& motif, const SymbolicSeries& period,
                                   const std::string& period_id) {
    return sweep(motif, columns_of(period.symbols), period.length(), period_id);
}

FinalizedSimilarity finalize_similarity(const std::vector<Grid<double>>& raw,
                                        std::size_t motif_length) {
    if (raw.empty()) throw ValueError("finalize_similarity: no periods");
    FinalizedSimilarity out;
    std::vector<std::vector<double>> averaged(raw.size());
    bool first = true;
    for (std::size_t p = 0; p < raw.size(); ++p) {
        const auto& r = raw[p];
        if (r.rows() == 0 || r.cols() == 0) throw ValueError("finalize_similarity: empty raw series");
        auto& avg = averaged[p];
        avg.resize(r.rows());
        for (std::size_t j = 0; j < r.rows(); ++j) {
            double sum = 0.0;
            for (std::size_t a = 0; a < r.cols(); ++a) sum += r(j, a);
            avg[j] = sum / static_cast<double>(r.cols());
            if (first) {
                out.pooled_min = out.pooled_max = avg[j];
                first = false;
            }
            out.pooled_min = std::min(out.pooled_min, avg[j]);
            out.pooled_max = std::max(out.pooled_max, avg[j]);
        }
    }
    const double range = out.pooled_max - out.pooled_min;
    out.uninformative = !(range > 0.0);
    out.series.resize(raw.size());
    for (std::size_t p = 0; p < raw.size(); ++p) {
        const auto& avg = averaged[p];
        auto& s = out.series[p];
        s.resize(avg.size() + motif_length);
        for (std::size_t j = 0; j < avg.size(); ++j) {
            s[j] = out.uninformative ? 0.5 : (avg[j] - out.pooled_min) / range;
        }
        std::fill(s.begin() + static_cast<std::ptrdiff_t>(avg.size()), s.end(), s[avg.size() - 1]);
    }
    return out;
}

std::vector<Motif> select_key_motifs(const std::vector<Motif>& candidates, std::size_t n,
                                     std::uint64_t seed) {
    if (n < 1) throw ValueError("select_key_motifs: n must be >= 1");
    std::vector<std::vector<const Motif*>> groups(n);
    for (const auto& m : candidates) {
        if (m.segment_group >= n) throw ValueError("select_key_motifs: candidate group out of range");
        groups[m.segment_group].push_back(&m);
    }
    Rng rng(seed);
    std::vector<Motif> out;
    out.reserve(n);
    for (std::size_t g = 0; g < n; ++g) {
        if (groups[g].empty()) {
            throw ValueError("segment group " + std::to_string(g) +
                             " has no candidate motif; reduce n or the candidate window sizes");
        }
        out.push_back(*groups[g][uniform_index(rng, groups[g].size())]);
    }
    return out;
}

std::size_t choose_initial_period(std::size_t count, std::uint64_t seed) {
    if (count == 0) throw ValueError("no unlabeled periods to choose the initial period from");
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    return uniform_index(rng, count);
}

TargetBuildReport build_ssl_targets(const std::vector<SymbolicSeries>& periods,
                                    const std::vector<std::string>& period_ids,
                                    const std::vector<Motif>& key_motifs, unsigned threads) {
    if (periods.size() != period_ids.size()) throw ShapeError("build_ssl_targets: id count mismatch");
    if (periods.empty()) throw ValueError("build_ssl_targets: no periods");
    if (key_motifs.empty()) throw ValueError("build_ssl_targets: no key motifs");

    std::vector<std::vector<std::vector<Symbol>>> columns(periods.size());
    for (std::size_t p = 0; p < periods.size(); ++p) columns[p] = columns_of(periods[p].symbols);

    const std::size_t n = key_motifs.size();
    std::vector<FinalizedSimilarity> finalized(n);
    std::vector<std::exception_ptr> failures(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                std::vector<Grid<double>> raw;
                raw.reserve(periods.size());
                for (std::size_t p = 0; p < periods.size(); ++p) {
                    raw.push_back(sweep(key_motifs[k], columns[p], periods[p].length(), period_ids[p]));
                }
                finalized[k] = finalize_similarity(raw, key_motifs[k].length());
            } catch (...) {
                failures[k] = std::current_exception();
            }
        }
    };
    const unsigned count = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < count; ++i) pool.emplace_back(worker);
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    TargetBuildReport report;
    for (std::size_t k = 0; k < n; ++k) {
        if (finalized[k].uninformative) {
            report.uninformative_channels.push_back(k);
            log_warning("key motif " + std::to_string(k) +
                        " is equally distant everywhere; its channel is constant 0.5");
        }
    }
    for (std::size_t p = 0; p < periods.size(); ++p) {
        SimilarityTarget target;
        target.period_id = period_ids[p];
        target.values = Grid<double>(periods[p].length(), n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& s = finalized[k].series[p];
            for (std::size_t t = 0; t < s.size(); ++t) target.values(t, k) = s[t];
        }
        report.targets.push_back(std::move(target));
    }
    return report;
}

MotifSet mine_key_motifs(const std::vector<const Period*>& normalized_unlabeled,
                         const MotifMiningConfig& config) {
    const std::size_t pick = choose_initial_period(normalized_unlabeled.size(), config.seed);
    const Period& initial = *normalized_unlabeled[pick];
    const auto symbols = symbolize(initial, config.alphabet_size);
    const auto candidates = generate_candidates(symbols, initial.period_id, config.candidates);

    MotifSet set;
    set.alphabet_size = config.alphabet_size;
    set.seed = config.seed;
    set.initial_period_id = initial.period_id;
    set.motifs = select_key_motifs(candidates, config.candidates.groups, config.seed);
    return set;
}

namespace {

json content_json(const MotifSet& set) {
    json motifs = json::array();
    for (const auto& m : set.motifs) {
        json rows = json::array();
        for (std::size_t i = 0; i < m.length(); ++i) {
            json row = json::array();
            for (Symbol s : m.symbols.row(i)) row.push_back(static_cast<int>(s));
            rows.push_back(std::move(row));
        }
        motifs.push_back({{"segment_group", m.segment_group},
                          {"source_period_id", m.source_period_id},
                          {"source_offset", m.source_offset},
                          {"length", m.length()},
                          {"symbols", std::move(rows)}});
    }
    return {{"format", "moil-motifs/1"},
            {"alphabet_size", set.alphabet_size},
            {"seed", set.seed},
            {"initial_period_id", set.initial_period_id},
            {"n", set.motifs.size()},
            {"motifs", std::move(motifs)}};
}

}  // namespace

std::string MotifSet::hash() const { return hex64(fnv1a(content_json(*this).dump())); }

std::string motifs_to_json(const MotifSet& set) {
    json doc = content_json(set);
    doc["hash"] = set.hash();
    return doc.dump(1) + "\n";
}

MotifSet motifs_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("motif file is not valid JSON: ") + e.what());
    }
    MotifSet set;
    try {
        set.alphabet_size = doc.at("alphabet_size").get<int>();
        set.seed = doc.at("seed").get<std::uint64_t>();
        set.initial_period_id = doc.at("initial_period_id").get<std::string>();
        for (const auto& jm : doc.at("motifs")) {
            Motif m;
            m.segment_group = jm.at("segment_group").get<std::size_t>();
            m.source_period_id = jm.at("source_period_id").get<std::string>();
            m.source_offset = jm.at("source_offset").get<std::size_t>();
            const auto& rows = jm.at("symbols");
            const std::size_t axes = rows.empty() ? 0 : rows.front().size();
            m.symbols = Grid<Symbol>(rows.size(), axes);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != axes) throw LoadError("ragged motif symbol rows");
                for (std::size_t a = 0; a < axes; ++a) {
                    const int s = rows[i][a].get<int>();
                    if (s < 0 || s >= set.alphabet_size) throw LoadError("motif symbol outside alphabet");
                    m.symbols(i, a) = static_cast<Symbol>(s);
                }
            }
            if (m.length() != jm.at("length").get<std::size_t>()) {
                throw LoadError("motif length field disagrees with its symbols");
            }
            set.motifs.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed motif file: ") + e.what());
    }
    if (doc.contains("hash") && doc["hash"].get<std::string>() != set.hash()) {
        throw IntegrityError("motif file hash does not match its content");
    }
    return set;
}

void save_motifs(const MotifSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out << motifs_to_json(set);
}

MotifSet load_motifs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return motifs_from_json(buf.str());
}

void save_targets(const std::vector<SimilarityTarget>& targets, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    const std::size_t n = targets.empty() ? 0 : targets.front().values.cols();
    out << "period_id,t";
    for (std::size_t k = 0; k < n; ++k) out << ",s_" << k;
    out << '\n';
    for (const auto& target : targets) {
        for (std::size_t t = 0; t < target.values.rows(); ++t) {
            out << target.period_id << ',' << t;
            for (std::size_t k = 0; k < n; ++k) out << ',' << format_real(target.values(t, k));
            out << '\n';
        }
    }
}

std::vector<SimilarityTarget> load_targets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw LoadError("'" + path.string() + "' is empty");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "period_id" || header[1] != "t") {
        throw LoadError("target file header must start with period_id,t,s_0");
    }
    const std::size_t n = header.size() - 2;
    std::vector<SimilarityTarget> out;
    std::vector<double> buffer;
    std::size_t line_no = 1;
    auto flush = [&] {
        if (out.empty()) return;
        auto& last = out.back();
        last.values = Grid<double>(buffer.size() / n, n);
        std::copy(buffer.begin(), buffer.end(), last.values.data().begin());
        buffer.clear();
    };
    std::size_t expected_t = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw LoadError("row " + std::to_string(line_no) + ": wrong field count");
        }
        if (out.empty() || out.back().period_id != fields[0]) {
            flush();
            out.push_back(SimilarityTarget{std::string(fields[0]), {}});
            expected_t = 0;
        }
        try {
            if (parse_integer(fields[1]) != static_cast<long long>(expected_t)) {
                throw LoadError("row " + std::to_string(line_no) + ": t out of sequence");
            }
            for (std::size_t k = 0; k < n; ++k) buffer.push_back(parse_real(fields[2 + k]));
        } catch (const ValueError& e) {
            throw LoadError("row " + std::to_string(line_no) + ": " + e.what());
        }
        ++expected_t;
    }
    flush();
    return out;
}

}  // namespace moil
