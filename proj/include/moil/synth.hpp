#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "moil/data_model.hpp"
#include "moil/motif_engine.hpp"

namespace moil {

/// A short characteristic movement.
struct ActionTemplate {
    std::size_t id = 0;
    std::vector<std::size_t> bursts;  // indices into the shared burst vocabulary
    Grid<double> waveform;            // [L_a x A]
    std::size_t nominal_length() const noexcept { return waveform.rows(); }
};

struct ActionSlot {
    std::size_t action = 0;
    bool optional = false;
};

/// One operation class: a sequence of actions. The class-specific action is
/// always mandatory; shared actions may be optional.
struct OperationTemplate {
    int label = 0;
    std::vector<ActionSlot> actions;
    std::size_t signature_action = 0;
};

struct SynthSpec {
    std::size_t workers = 4;
    std::size_t periods_per_worker = 20;
    std::size_t classes = 5;
    std::size_t operations_per_period = 5;
    std::size_t axes = 3;
    double sample_rate_hz = 30.0;

    std::size_t actions_per_operation = 3;
    std::size_t shared_actions = 4;
    std::size_t bursts = 4;  // shared burst vocabulary size
    std::size_t bursts_per_action = 4;
    std::size_t burst_length_min = 8;
    std::size_t burst_length_max = 14;
    std::size_t gap_min = 5;
    std::size_t gap_max = 20;

    double jitter_min = 0.8;
    double jitter_max = 1.3;
    double optional_probability = 0.5;  // chance a shared slot is optional
    double dropout = 0.3;               // chance an optional action is skipped
    double noise_sigma = 0.05;
    double drift_amplitude = 0.05;
    double worker_scale_spread = 0.2;
    bool shuffle_operations = false;

    /// Every period must hold at least one window of this length.
    std::size_t min_period_length = 300;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

/// Where one action instance landed.
struct ActionSpan {
    std::string period_id;
    std::size_t action = 0;
    int label = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    bool mandatory = false;
};

struct SynthDataset {
    Dataset dataset;
    std::vector<ActionTemplate> actions;
    std::vector<OperationTemplate> operations;
    std::vector<ActionSpan> spans;
    SynthSpec spec;
};

SynthDataset gen_dataset(const SynthSpec& spec);

/// Fraction of key motifs whose source span overlaps a mandatory-action span
/// of the period they were cut from.
double ground_truth_motif_audit(const std::vector<ActionSpan>& spans, const std::vector<Motif>& motifs);

/// Sidecar JSON: generation spec plus every action span.
std::string synth_sidecar_json(const SynthDataset& synth);
std::vector<ActionSpan> spans_from_sidecar(const std::string& text);

/// Linear-interpolation resampling of each column to `length` rows.
Grid<double> resample(const Grid<double>& source, std::size_t length);

}  // namespace moil
