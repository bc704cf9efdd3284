#include "moil/synth.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <numbers>

namespace moil {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

Grid<double> make_burst(const SynthSpec& spec, Rng& rng) {
    const std::size_t L =
        spec.burst_length_min + uniform_index(rng, spec.burst_length_max - spec.burst_length_min + 1);
    Grid<double> burst(L, spec.axes);
    for (std::size_t axis = 0; axis < spec.axes; ++axis) {
        const double amp = uniform_real(rng, -1.0, 1.0);
        const double cycles = uniform_real(rng, 0.5, 1.5);
        const double phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < L; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(L - 1);
            const double envelope = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u));
            burst(t, axis) = amp * envelope * std::sin(2.0 * std::numbers::pi * cycles * u + phase) + amp * envelope;
        }
    }
    return burst;
}

ActionTemplate make_action(std::size_t id, const std::vector<std::size_t>& sequence,
                           const std::vector<Grid<double>>& bursts, std::size_t axes) {
    std::size_t L = 0;
    for (std::size_t b : sequence) L += bursts[b].rows();
    ActionTemplate a;
    a.id = id;
    a.bursts = sequence;
    a.waveform = Grid<double>(L, axes);
    std::size_t row = 0;
    for (std::size_t b : sequence) {
        for (std::size_t t = 0; t < bursts[b].rows(); ++t, ++row) {
            for (std::size_t axis = 0; axis < axes; ++axis) a.waveform(row, axis) = bursts[b](t, axis);
        }
    }
    return a;
}

std::string two_digits(std::size_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%02zu", v);
    return buf;
}

}  // namespace

void SynthSpec::validate() const {
    if (workers < 1 || periods_per_worker < 1) throw ConfigError("synth: need at least one worker and period");
    if (classes < 2) throw ConfigError("synth: need at least two classes");
    if (operations_per_period < 1) throw ConfigError("synth: operations_per_period must be >= 1");
    if (axes < 1) throw ConfigError("synth: axes must be >= 1");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("synth: sample rate must be positive");
    if (actions_per_operation < 1) throw ConfigError("synth: actions_per_operation must be >= 1");
    if (actions_per_operation > 1 && shared_actions < 1) {
        throw ConfigError("synth: shared actions are needed for multi-action operations");
    }
    if (bursts < 2 || bursts_per_action < 1) throw ConfigError("synth: need >= 2 bursts and >= 1 burst per action");
    if (burst_length_min < 3 || burst_length_max < burst_length_min) {
        throw ConfigError("synth: burst lengths must satisfy 3 <= min <= max");
    }
    if (bursts_per_action * burst_length_min < 10) throw ConfigError("synth: actions must span at least 10 samples");
    double distinct = static_cast<double>(bursts);
    for (std::size_t i = 1; i < bursts_per_action; ++i) distinct *= static_cast<double>(bursts - 1);
    if (distinct < static_cast<double>(classes + shared_actions)) {
        throw ConfigError("synth: burst vocabulary too small for distinct action sequences");
    }
    if (gap_max < gap_min) throw ConfigError("synth: gap_max must be >= gap_min");
    if (!(jitter_min > 0.0) || jitter_max < jitter_min) throw ConfigError("synth: invalid jitter range");
    if (optional_probability < 0.0 || optional_probability > 1.0 || dropout < 0.0 || dropout > 1.0) {
        throw ConfigError("synth: probabilities must lie in [0, 1]");
    }
    if (noise_sigma < 0.0 || drift_amplitude < 0.0 || worker_scale_spread < 0.0 || worker_scale_spread >= 1.0) {
        throw ConfigError("synth: noise, drift and worker spread must be non-negative (spread < 1)");
    }
}

json SynthSpec::to_json() const {
    return {{"workers", workers},
            {"periods_per_worker", periods_per_worker},
            {"classes", classes},
            {"operations_per_period", operations_per_period},
            {"axes", axes},
            {"sample_rate_hz", sample_rate_hz},
            {"actions_per_operation", actions_per_operation},
            {"shared_actions", shared_actions},
            {"bursts", bursts},
            {"bursts_per_action", bursts_per_action},
            {"burst_length_min", burst_length_min},
            {"burst_length_max", burst_length_max},
            {"gap_min", gap_min},
            {"gap_max", gap_max},
            {"jitter_min", jitter_min},
            {"jitter_max", jitter_max},
            {"optional_probability", optional_probability},
            {"dropout", dropout},
            {"noise_sigma", noise_sigma},
            {"drift_amplitude", drift_amplitude},
            {"worker_scale_spread", worker_scale_spread},
            {"shuffle_operations", shuffle_operations},
            {"min_period_length", min_period_length},
            {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
    SynthSpec s;
    const json defaults = s.to_json();
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw ConfigError("synth: unknown key '" + key + "'");
    }
    json merged = defaults;
    merged.update(j);
    try {
        s.workers = merged["workers"].get<std::size_t>();
        s.periods_per_worker = merged["periods_per_worker"].get<std::size_t>();
        s.classes = merged["classes"].get<std::size_t>();
        s.operations_per_period = merged["operations_per_period"].get<std::size_t>();
        s.axes = merged["axes"].get<std::size_t>();
        s.sample_rate_hz = merged["sample_rate_hz"].get<double>();
        s.actions_per_operation = merged["actions_per_operation"].get<std::size_t>();
        s.shared_actions = merged["shared_actions"].get<std::size_t>();
        s.bursts = merged["bursts"].get<std::size_t>();
        s.bursts_per_action = merged["bursts_per_action"].get<std::size_t>();
        s.burst_length_min = merged["burst_length_min"].get<std::size_t>();
        s.burst_length_max = merged["burst_length_max"].get<std::size_t>();
        s.gap_min = merged["gap_min"].get<std::size_t>();
        s.gap_max = merged["gap_max"].get<std::size_t>();
        s.jitter_min = merged["jitter_min"].get<double>();
        s.jitter_max = merged["jitter_max"].get<double>();
        s.optional_probability = merged["optional_probability"].get<double>();
        s.dropout = merged["dropout"].get<double>();
        s.noise_sigma = merged["noise_sigma"].get<double>();
        s.drift_amplitude = merged["drift_amplitude"].get<double>();
        s.worker_scale_spread = merged["worker_scale_spread"].get<double>();
        s.shuffle_operations = merged["shuffle_operations"].get<bool>();
        s.min_period_length = merged["min_period_length"].get<std::size_t>();
        s.seed = merged["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synth: ") + e.what());
    }
    return s;
}

Grid<double> resample(const Grid<double>& source, std::size_t length) {
    if (source.rows() == 0 || length == 0) throw ValueError("resample: empty input or output");
    Grid<double> out(length, source.cols());
    const std::size_t n = source.rows();
    for (std::size_t t = 0; t < length; ++t) {
        const double pos = length > 1 ? static_cast<double>(t) * static_cast<double>(n - 1) /
                                            static_cast<double>(length - 1)
                                      : 0.0;
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double frac = pos - static_cast<double>(lo);
        for (std::size_t a = 0; a < source.cols(); ++a) {
            out(t, a) = (1.0 - frac) * source(lo, a) + frac * source(hi, a);
        }
    }
    return out;
}

SynthDataset gen_dataset(const SynthSpec& spec) {
    spec.validate();
    SynthDataset out;
    out.spec = spec;

    Rng template_rng(derive_seed(spec.seed, 0x7465));
    const std::size_t action_count = spec.classes + spec.shared_actions;
    std::vector<Grid<double>> bursts;
    for (std::size_t b = 0; b < spec.bursts; ++b) bursts.push_back(make_burst(spec, template_rng));
    std::vector<std::vector<std::size_t>> sequences;
    while (sequences.size() < action_count) {
        std::vector<std::size_t> seq(spec.bursts_per_action);
        for (auto& b : seq) b = uniform_index(template_rng, spec.bursts);
        bool repeated = false;
        for (std::size_t i = 1; i < seq.size(); ++i) repeated |= seq[i] == seq[i - 1];
        if (repeated || std::find(sequences.begin(), sequences.end(), seq) != sequences.end()) continue;
        sequences.push_back(std::move(seq));
    }
    for (std::size_t id = 0; id < action_count; ++id) {
        out.actions.push_back(make_action(id, sequences[id], bursts, spec.axes));
    }
    for (std::size_t c = 0; c < spec.classes; ++c) {
        OperationTemplate op;
        op.label = static_cast<int>(c);
        op.signature_action = c;
        const std::size_t signature_slot = uniform_index(template_rng, spec.actions_per_operation);
        for (std::size_t s = 0; s < spec.actions_per_operation; ++s) {
            if (s == signature_slot) {
                op.actions.push_back({c, false});
            } else {
                const std::size_t shared = spec.classes + uniform_index(template_rng, spec.shared_actions);
                const bool optional = uniform_unit(template_rng) < spec.optional_probability;
                op.actions.push_back({shared, optional});
            }
        }
        out.operations.push_back(std::move(op));
    }

    for (std::size_t w = 0; w < spec.workers; ++w) {
        Rng worker_rng(derive_seed(spec.seed, 0x776b, w));
        std::vector<double> scale(spec.axes);
        for (double& s : scale) s = uniform_real(worker_rng, 1.0 - spec.worker_scale_spread, 1.0 + spec.worker_scale_spread);

        for (std::size_t p = 0; p < spec.periods_per_worker; ++p) {
            Rng rng(derive_seed(spec.seed, 0x7064 + w, p));
            Period period;
            period.worker_id = "w" + std::to_string(w);
            period.period_id = period.worker_id + "_p" + two_digits(p);
            period.sample_rate_hz = spec.sample_rate_hz;

            std::vector<std::size_t> order(spec.classes);
            for (std::size_t c = 0; c < spec.classes; ++c) order[c] = c;
            std::vector<double> rows;
            std::vector<int> labels;
            for (std::size_t k = 0; k < spec.operations_per_period; ++k) {
                if (spec.shuffle_operations && k % spec.classes == 0) shuffle(order, rng);
                const auto& op = out.operations[order[k % spec.classes]];
                for (const auto& slot : op.actions) {
                    if (slot.optional && uniform_unit(rng) < spec.dropout) continue;
                    const auto& tmpl = out.actions[slot.action];
                    const double warp = spec.jitter_max > spec.jitter_min
                                            ? uniform_real(rng, spec.jitter_min, spec.jitter_max)
                                            : spec.jitter_min;
                    const auto length = std::max<std::size_t>(
                        2, static_cast<std::size_t>(std::lround(static_cast<double>(tmpl.nominal_length()) * warp)));
                    const Grid<double> wave = resample(tmpl.waveform, length);
                    out.spans.push_back({period.period_id, slot.action, op.label, labels.size(), length, !slot.optional});
                    for (std::size_t t = 0; t < length; ++t) {
                        for (std::size_t a = 0; a < spec.axes; ++a) rows.push_back(scale[a] * wave(t, a));
                        labels.push_back(op.label);
                    }
                    const std::size_t gap = spec.gap_min + uniform_index(rng, spec.gap_max - spec.gap_min + 1);
                    for (std::size_t t = 0; t < gap; ++t) {
                        for (std::size_t a = 0; a < spec.axes; ++a) rows.push_back(0.0);
                        labels.push_back(op.label);
                    }
                }
            }

            const std::size_t T = labels.size();
            if (T < spec.min_period_length) {
                throw ValueError("synth: period '" + period.period_id + "' has " + std::to_string(T) +
                                 " samples, fewer than one window (" + std::to_string(spec.min_period_length) +
                                 "); raise operations_per_period or action lengths");
            }
            for (std::size_t a = 0; a < spec.axes; ++a) {
                const double drift_period = uniform_real(rng, 0.5, 2.0) * static_cast<double>(T);
                const double drift_phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
                for (std::size_t t = 0; t < T; ++t) {
                    rows[t * spec.axes + a] += spec.drift_amplitude *
                        std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / drift_period + drift_phase);
                }
            }
            if (spec.noise_sigma > 0.0) {
                for (double& v : rows) v += spec.noise_sigma * standard_normal(rng);
            }
            period.values = Grid<double>(T, spec.axes);
            std::copy(rows.begin(), rows.end(), period.values.data().begin());
            period.labels = std::move(labels);
            out.dataset.periods.push_back(std::move(period));
        }
    }
    out.dataset.roles.assign(out.dataset.periods.size(), Role::both);
    out.dataset.validate();
    return out;
}

double ground_truth_motif_audit(const std::vector<ActionSpan>& spans, const std::vector<Motif>& motifs) {
    if (motifs.empty()) throw ValueError("motif audit: no motifs");
    std::size_t hits = 0;
    for (const auto& m : motifs) {
        const std::size_t begin = m.source_offset, end = m.source_offset + m.length();
        for (const auto& s : spans) {
            if (!s.mandatory || s.period_id != m.source_period_id) continue;
            if (begin < s.start + s.length && s.start < end) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(motifs.size());
}

std::string synth_sidecar_json(const SynthDataset& synth) {
    json spans = json::array();
    for (const auto& s : synth.spans) {
        spans.push_back({{"period_id", s.period_id}, {"action", s.action}, {"label", s.label},
                         {"start", s.start},         {"length", s.length}, {"mandatory", s.mandatory}});
    }
    json operations = json::array();
    for (const auto& op : synth.operations) {
        json slots = json::array();
        for (const auto& slot : op.actions) slots.push_back({{"action", slot.action}, {"optional", slot.optional}});
        operations.push_back({{"label", op.label}, {"signature_action", op.signature_action}, {"actions", slots}});
    }
    json doc = {{"format", "moil-synth/1"},
                {"spec", synth.spec.to_json()},
                {"operations", operations},
                {"spans", spans}};
    return doc.dump(1) + "\n";
}

std::vector<ActionSpan> spans_from_sidecar(const std::string& text) {
    std::vector<ActionSpan> out;
    try {
        const json doc = json::parse(text);
        for (const auto& s : doc.at("spans")) {
            out.push_back({s.at("period_id").get<std::string>(), s.at("action").get<std::size_t>(),
                           s.at("label").get<int>(), s.at("start").get<std::size_t>(),
                           s.at("length").get<std::size_t>(), s.at("mandatory").get<bool>()});
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed synth sidecar: ") + e.what());
    }
    return out;
}

}  // namespace moil
