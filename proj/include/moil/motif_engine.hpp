#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moil/data_model.hpp"

namespace moil {

/// A fixed-length symbolic sub-sequence of the initial period.
struct Motif {
    Grid<Symbol> symbols;  // [|m| x A]
    std::string source_period_id;
    std::size_t source_offset = 0;
    std::size_t segment_group = 0;

    std::size_t length() const noexcept { return symbols.rows(); }
    friend bool operator==(const Motif&, const Motif&) = default;
};

struct MotifSet {
    int alphabet_size = 5;
    std::uint64_t seed = 0;
    std::string initial_period_id;
    std::vector<Motif> motifs;

    /// Content hash (hex) used to tie checkpoints to the motifs they learned.
    std::string hash() const;
};

struct CandidateConfig {
    std::vector<std::size_t> window_sizes;
    std::size_t step = 15;
    std::size_t groups = 13;
};

/// Default candidate lengths of 1 s, 2 s and 4 s with a 0.5 s step.
CandidateConfig default_candidate_config(double sample_rate_hz, std::size_t groups = 13);

std::vector<Motif> generate_candidates(const SymbolicSeries& initial, const std::string& period_id,
                                       const CandidateConfig& config);

/// Number of rows where the two blocks disagree on `axis`.
std::size_t symbol_distance(const Grid<Symbol>& a, const Grid<Symbol>& b, std::size_t axis);

/// Negated per-axis distances of the motif against every offset
/// j in [0, T - |m|). Shape [(T - |m|) x A].
Grid<double> similarity_series_raw(const Motif& motif, const SymbolicSeries& period,
                                   const std::string& period_id = {});

struct FinalizedSimilarity {
    std::vector<std::vector<double>> series;  // one per period, length T
    double pooled_min = 0.0;
    double pooled_max = 0.0;
    bool uninformative = false;
};

/// Axis-average, pooled min-max over all periods, then tail-pad with the last
/// value up to each period's length (raw rows + motif_length).
FinalizedSimilarity finalize_similarity(const std::vector<Grid<double>>& raw,
                                        std::size_t motif_length);

std::vector<Motif> select_key_motifs(const std::vector<Motif>& candidates, std::size_t n,
                                     std::uint64_t seed);

/// Uniform choice of the initial period among `count` D_u periods.
std::size_t choose_initial_period(std::size_t count, std::uint64_t seed);

struct SimilarityTarget {
    std::string period_id;
    Grid<double> values;  // [T x n]
};

struct TargetBuildReport {
    std::vector<SimilarityTarget> targets;
    std::vector<std::size_t> uninformative_channels;
};

/// Similarity targets for every symbolized period. `threads` only changes
/// scheduling; output is identical for any value.
TargetBuildReport build_ssl_targets(const std::vector<SymbolicSeries>& periods,
                                    const std::vector<std::string>& period_ids,
                                    const std::vector<Motif>& key_motifs, unsigned threads = 1);

struct MotifMiningConfig {
    int alphabet_size = 5;
    CandidateConfig candidates;
    std::uint64_t seed = 0;
};

/// Full key-motif selection over normalized D_u periods: initial period,
/// candidates, per-group choice.
MotifSet mine_key_motifs(const std::vector<const Period*>& normalized_unlabeled,
                         const MotifMiningConfig& config);

std::string motifs_to_json(const MotifSet& set);
MotifSet motifs_from_json(const std::string& text);
void save_motifs(const MotifSet& set, const std::filesystem::path& path);
MotifSet load_motifs(const std::filesystem::path& path);

void save_targets(const std::vector<SimilarityTarget>& targets, const std::filesystem::path& path);
std::vector<SimilarityTarget> load_targets(const std::filesystem::path& path);

}  // namespace moil
