#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moil/downstream.hpp"
#include "moil/moil_net.hpp"

namespace moil {

struct ExperimentConfig {
    int alphabet_size = 5;
    std::vector<double> motif_window_seconds{1.0, 2.0, 4.0};
    double motif_step_seconds = 0.5;
    std::size_t motifs = 13;  // n

    EncoderConfig encoder;
    PretrainRun pretrain;  // seed is overridden per experiment seed
    ClassifierConfig classifier;

    double label_fraction = 0.1;
    double train_fraction = 0.8;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<std::size_t> eval_epochs{1, 10, 20, 30, 40, 50};
    bool control_arm = true;
    unsigned threads = 1;

    CandidateConfig candidates(double sample_rate_hz) const;
    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Motif mining, target construction and pretraining on one set of
/// normalized unlabeled periods.
struct SslPipelineResult {
    MotifSet motifs;
    std::vector<std::size_t> uninformative_channels;
    SslWindows windows;
    PretrainResult pretrain;
};

SslPipelineResult run_ssl_pipeline(const std::vector<const Period*>& normalized_unlabeled,
                                   const ExperimentConfig& config, std::uint64_t seed,
                                   MoilModel* model_out = nullptr);

/// Train/test partition of one worker's periods in recorded order.
struct SplitRecord {
    std::string worker_id;
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> labeled;
};

/// First floor(fraction * P) periods train, the rest test.
SplitRecord split_worker_periods(const std::vector<const Period*>& worker_periods, double train_fraction);

/// First ceil(fraction * count) entries (at least one).
std::size_t labeled_prefix(std::size_t count, double fraction);

struct ArmSummary {
    std::string name;
    std::vector<double> f1;  // one per seed
    double mean = 0.0;
    double stddev = 0.0;     // population
    std::vector<std::vector<std::size_t>> confusion;  // pooled over seeds
};

/// F1 at each recorded classifier epoch for one held-out worker and seed.
struct FoldRecord {
    std::string held_out;
    std::uint64_t seed = 0;
    std::string arm;
    std::vector<std::size_t> epochs;
    std::vector<double> f1;
    std::vector<std::string> train_periods;
    std::size_t leakage = 0;
};

struct FreezeCheck {
    std::string context;
    std::string before;
    std::string after;
    bool ok() const noexcept { return before == after; }
};

struct ExperimentReport {
    std::string protocol;
    double label_fraction = 0.0;
    std::vector<std::uint64_t> seeds;
    std::vector<ArmSummary> arms;
    std::vector<SplitRecord> splits;
    std::vector<FoldRecord> folds;
    std::vector<FreezeCheck> freeze_checks;
    std::size_t leakage = 0;
    nlohmann::json config;

    bool frozen() const;
    const ArmSummary& arm(const std::string& name) const;
    nlohmann::json to_json() const;
};

using ExperimentLog = std::function<void(const std::string&)>;

/// Per worker: ordered 80/20 split, pretraining on the training periods,
/// classifier on the labelled prefix, micro-F1 on the test periods. One
/// pooled F1 per seed and arm.
ExperimentReport run_worker_dependent(const Dataset& dataset, const ExperimentConfig& config,
                                      const ExperimentLog& log = {});

/// Leave-one-worker-out, F1 recorded at each of config.eval_epochs.
ExperimentReport run_worker_independent(const Dataset& dataset, const ExperimentConfig& config,
                                        const ExperimentLog& log = {});

double mean_of(const std::vector<double>& values);
double population_stddev(const std::vector<double>& values);

}  // namespace moil
