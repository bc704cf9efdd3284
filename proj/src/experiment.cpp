#include "moil/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace moil {

using nlohmann::json;

CandidateConfig ExperimentConfig::candidates(double sample_rate_hz) const {
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    CandidateConfig c;
    for (double s : motif_window_seconds) {
        c.window_sizes.push_back(static_cast<std::size_t>(std::max(1L, std::lround(s * sample_rate_hz))));
    }
    c.step = static_cast<std::size_t>(std::max(1L, std::lround(motif_step_seconds * sample_rate_hz)));
    c.groups = motifs;
    return c;
}

void ExperimentConfig::validate() const {
    if (alphabet_size < 2 || alphabet_size > 256) throw ConfigError("alphabet_size must lie in [2, 256]");
    if (motif_window_seconds.empty()) throw ConfigError("motif_window_seconds must not be empty");
    for (double s : motif_window_seconds) {
        if (!(s > 0.0)) throw ConfigError("motif window lengths must be positive");
    }
    if (!(motif_step_seconds > 0.0)) throw ConfigError("motif_step_seconds must be positive");
    if (motifs < 1) throw ConfigError("motifs (n) must be >= 1");
    encoder.validate();
    pretrain.validate();
    classifier.validate();
    if (!(label_fraction > 0.0) || label_fraction > 1.0) throw ConfigError("label_fraction must lie in (0, 1]");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    for (std::size_t e : eval_epochs) {
        if (e < 1 || e > classifier.epochs) {
            throw ConfigError("eval epoch " + std::to_string(e) + " is outside 1.." +
                              std::to_string(classifier.epochs));
        }
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

json ExperimentConfig::to_json() const {
    return {{"alphabet_size", alphabet_size},
            {"motif_window_seconds", motif_window_seconds},
            {"motif_step_seconds", motif_step_seconds},
            {"motifs", motifs},
            {"encoder", encoder.to_json()},
            {"pretrain", pretrain.to_json()},
            {"classifier", classifier.to_json()},
            {"label_fraction", label_fraction},
            {"train_fraction", train_fraction},
            {"seeds", seeds},
            {"eval_epochs", eval_epochs},
            {"control_arm", control_arm},
            {"threads", threads}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    try {
        c.alphabet_size = j.at("alphabet_size").get<int>();
        c.motif_window_seconds = j.at("motif_window_seconds").get<std::vector<double>>();
        c.motif_step_seconds = j.at("motif_step_seconds").get<double>();
        c.motifs = j.at("motifs").get<std::size_t>();
        c.encoder = EncoderConfig::from_json(j.at("encoder"));
        c.pretrain = PretrainRun::from_json(j.at("pretrain"));
        c.classifier = ClassifierConfig::from_json(j.at("classifier"));
        c.label_fraction = j.at("label_fraction").get<double>();
        c.train_fraction = j.at("train_fraction").get<double>();
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.eval_epochs = j.at("eval_epochs").get<std::vector<std::size_t>>();
        c.control_arm = j.at("control_arm").get<bool>();
        c.threads = j.at("threads").get<unsigned>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    return c;
}

SslPipelineResult run_ssl_pipeline(const std::vector<const Period*>& normalized_unlabeled,
                                   const ExperimentConfig& config, std::uint64_t seed, MoilModel* model_out) {
    if (normalized_unlabeled.empty()) throw ValueError("no unlabeled periods to pretrain on");
    const double rate = normalized_unlabeled.front()->sample_rate_hz;
    SslPipelineResult out;

    MotifMiningConfig mining{config.alphabet_size, config.candidates(rate), seed};
    out.motifs = mine_key_motifs(normalized_unlabeled, mining);

    std::vector<SymbolicSeries> symbolic;
    std::vector<std::string> ids;
    for (const Period* p : normalized_unlabeled) {
        symbolic.push_back(symbolize(*p, config.alphabet_size));
        ids.push_back(p->period_id);
    }
    TargetBuildReport targets = build_ssl_targets(symbolic, ids, out.motifs.motifs, config.threads);
    out.uninformative_channels = targets.uninformative_channels;

    out.windows = make_ssl_windows(normalized_unlabeled, targets.targets, config.pretrain.window,
                                   config.pretrain.step);
    if (out.windows.count() == 0) throw ValueError("no pretraining windows: periods are shorter than l");

    PretrainRun run = config.pretrain;
    run.seed = seed;
    MoilModel model(config.encoder, normalized_unlabeled.front()->axes(), config.motifs, seed);
    out.pretrain = pretrain(model, out.windows, run);
    if (model_out) *model_out = std::move(model);
    return out;
}

std::size_t labeled_prefix(std::size_t count, double fraction) {
    if (count == 0) return 0;
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count) - 1e-9));
    return std::clamp<std::size_t>(k, 1, count);
}

SplitRecord split_worker_periods(const std::vector<const Period*>& worker_periods, double train_fraction) {
    const std::size_t P = worker_periods.size();
    if (P < 2) {
        throw ValueError("worker '" + (P ? worker_periods.front()->worker_id : std::string("?")) +
                         "' has fewer than 2 periods; cannot split into train and test");
    }
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(P) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, P - 1);
    SplitRecord s;
    s.worker_id = worker_periods.front()->worker_id;
    for (std::size_t i = 0; i < P; ++i) {
        (i < n_train ? s.train : s.test).push_back(worker_periods[i]->period_id);
    }
    return s;
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double population_stddev(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double m = mean_of(values);
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size()));
}

bool ExperimentReport::frozen() const {
    return std::all_of(freeze_checks.begin(), freeze_checks.end(), [](const FreezeCheck& c) { return c.ok(); });
}

const ArmSummary& ExperimentReport::arm(const std::string& name) const {
    for (const auto& a : arms) {
        if (a.name == name) return a;
    }
    throw ValueError("report has no arm '" + name + "'");
}

json ExperimentReport::to_json() const {
    json arms_json = json::array();
    for (const auto& a : arms) {
        arms_json.push_back({{"name", a.name}, {"f1", a.f1}, {"mean", a.mean}, {"std", a.stddev},
                             {"confusion", a.confusion}});
    }
    json splits_json = json::array();
    for (const auto& s : splits) {
        splits_json.push_back({{"worker_id", s.worker_id}, {"train", s.train}, {"test", s.test},
                               {"labeled", s.labeled}});
    }
    json folds_json = json::array();
    for (const auto& f : folds) {
        folds_json.push_back({{"held_out", f.held_out}, {"seed", f.seed}, {"arm", f.arm}, {"epochs", f.epochs},
                              {"f1", f.f1}, {"train_periods", f.train_periods}, {"leakage", f.leakage}});
    }
    json freeze_json = json::array();
    for (const auto& c : freeze_checks) {
        freeze_json.push_back({{"context", c.context}, {"before", c.before}, {"after", c.after}, {"ok", c.ok()}});
    }
    return {{"protocol", protocol},
            {"label_fraction", label_fraction},
            {"seeds", seeds},
            {"arms", arms_json},
            {"splits", splits_json},
            {"folds", folds_json},
            {"freeze_checks", freeze_json},
            {"encoder_frozen", frozen()},
            {"leakage", leakage},
            {"config", config}};
}

namespace {

std::vector<Period> normalize_all(const Dataset& dataset) {
    std::vector<Period> out;
    out.reserve(dataset.periods.size());
    for (const auto& p : dataset.periods) {
        if (!p.labeled()) throw ValueError("period '" + p.period_id + "' has no labels; evaluation needs labels");
        out.push_back(minmax_normalize(p));
    }
    return out;
}

std::vector<const Period*> by_ids(const std::vector<Period>& periods, const std::vector<std::string>& ids) {
    std::vector<const Period*> out;
    for (const auto& id : ids) {
        auto it = std::find_if(periods.begin(), periods.end(), [&](const Period& p) { return p.period_id == id; });
        if (it == periods.end()) throw ValueError("unknown period id '" + id + "'");
        out.push_back(&*it);
    }
    return out;
}

std::vector<const Period*> periods_of_worker(const std::vector<Period>& periods, const std::string& worker) {
    std::vector<const Period*> out;
    for (const auto& p : periods) {
        if (p.worker_id == worker) out.push_back(&p);
    }
    return out;
}

std::vector<std::string> worker_order(const std::vector<Period>& periods) {
    std::vector<std::string> out;
    for (const auto& p : periods) {
        if (std::find(out.begin(), out.end(), p.worker_id) == out.end()) out.push_back(p.worker_id);
    }
    return out;
}

template <class Origins>
std::size_t count_leaks(const Origins& origins, const std::set<std::string>& forbidden) {
    std::size_t n = 0;
    for (const auto& [id, start] : origins) n += forbidden.count(id);
    return n;
}

struct Predictions {
    std::vector<std::vector<int>> pred;
    std::vector<std::vector<int>> truth;

    void add(std::vector<int> p, const Period& period) {
        pred.push_back(std::move(p));
        truth.push_back(*period.labels);
    }
};

void summarize(ArmSummary& arm, const std::vector<Predictions>& per_seed, std::size_t classes) {
    arm.f1.clear();
    arm.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    for (const auto& s : per_seed) {
        arm.f1.push_back(micro_f1(s.pred, s.truth));
        const auto cm = confusion_matrix(s.pred, s.truth, classes);
        for (std::size_t i = 0; i < classes; ++i) {
            for (std::size_t j = 0; j < classes; ++j) arm.confusion[i][j] += cm[i][j];
        }
    }
    arm.mean = mean_of(arm.f1);
    arm.stddev = population_stddev(arm.f1);
}

std::string seed_tag(std::uint64_t seed) { return "seed " + std::to_string(seed); }

}  // namespace

ExperimentReport run_worker_dependent(const Dataset& dataset, const ExperimentConfig& config,
                                      const ExperimentLog& log) {
    config.validate();
    dataset.validate();
    const std::vector<Period> periods = normalize_all(dataset);
    const auto workers = worker_order(periods);

    ExperimentReport report;
    report.protocol = "worker-dependent";
    report.label_fraction = config.label_fraction;
    report.seeds = config.seeds;
    report.config = config.to_json();
    for (const auto& w : workers) {
        SplitRecord split = split_worker_periods(periods_of_worker(periods, w), config.train_fraction);
        const std::size_t k = labeled_prefix(split.train.size(), config.label_fraction);
        split.labeled.assign(split.train.begin(), split.train.begin() + static_cast<std::ptrdiff_t>(k));
        report.splits.push_back(std::move(split));
    }

    std::vector<Predictions> moil_preds, random_preds;
    for (std::uint64_t seed : config.seeds) {
        Predictions moil_seed, random_seed;
        for (const auto& split : report.splits) {
            const std::string ctx = seed_tag(seed) + ", worker " + split.worker_id;
            if (log) log(ctx + ": pretraining on " + std::to_string(split.train.size()) + " periods");
            const auto train = by_ids(periods, split.train);
            const auto labeled = by_ids(periods, split.labeled);
            const auto test = by_ids(periods, split.test);
            const std::set<std::string> test_ids(split.test.begin(), split.test.end());

            SslPipelineResult ssl = run_ssl_pipeline(train, config, seed);
            const LabeledWindows lw = make_labeled_windows(labeled, config.pretrain.window, config.pretrain.step);
            report.leakage += count_leaks(ssl.windows.origin, test_ids) + count_leaks(lw.origin, test_ids);

            auto evaluate_arm = [&](const Encoder& encoder, const std::string& arm, Predictions& sink) {
                ClassifierTrainResult trained = train_classifier(encoder, lw, config.classifier, seed);
                report.freeze_checks.push_back({ctx + ", " + arm, trained.encoder_hash_before,
                                                trained.encoder_hash_after});
                for (const Period* p : test) sink.add(predict(encoder, trained.classifier, *p, config.pretrain.window), *p);
            };
            evaluate_arm(ssl.pretrain.best_encoder, "moil", moil_seed);
            if (config.control_arm) {
                Encoder random(config.encoder, train.front()->axes(), seed);
                random.calibrate_batchnorm(ssl.windows.inputs);
                evaluate_arm(random, "random", random_seed);
            }
        }
        moil_preds.push_back(std::move(moil_seed));
        if (config.control_arm) random_preds.push_back(std::move(random_seed));
        if (log) {
            std::ostringstream msg;
            msg << seed_tag(seed) << ": moil F1 " << micro_f1(moil_preds.back().pred, moil_preds.back().truth);
            if (config.control_arm) {
                msg << ", random F1 " << micro_f1(random_preds.back().pred, random_preds.back().truth);
            }
            log(msg.str());
        }
    }

    ArmSummary moil_arm{"moil", {}, 0.0, 0.0, {}};
    summarize(moil_arm, moil_preds, config.classifier.classes);
    report.arms.push_back(std::move(moil_arm));
    if (config.control_arm) {
        ArmSummary random_arm{"random", {}, 0.0, 0.0, {}};
        summarize(random_arm, random_preds, config.classifier.classes);
        report.arms.push_back(std::move(random_arm));
    }
    return report;
}

ExperimentReport run_worker_independent(const Dataset& dataset, const ExperimentConfig& config,
                                        const ExperimentLog& log) {
    config.validate();
    dataset.validate();
    const std::vector<Period> periods = normalize_all(dataset);
    const auto workers = worker_order(periods);
    if (workers.size() < 2) throw ValueError("worker-independent protocol needs at least two workers");

    ExperimentReport report;
    report.protocol = "worker-independent";
    report.label_fraction = config.label_fraction;
    report.seeds = config.seeds;
    report.config = config.to_json();

    const std::size_t final_epoch = config.classifier.epochs;
    std::vector<Predictions> moil_preds, random_preds;
    for (std::uint64_t seed : config.seeds) {
        Predictions moil_seed, random_seed;
        for (const auto& held_out : workers) {
            const std::string ctx = seed_tag(seed) + ", held-out " + held_out;
            std::vector<const Period*> train, labeled, test;
            for (const auto& w : workers) {
                auto mine = periods_of_worker(periods, w);
                if (w == held_out) {
                    test = mine;
                    continue;
                }
                train.insert(train.end(), mine.begin(), mine.end());
                const std::size_t k = labeled_prefix(mine.size(), config.label_fraction);
                labeled.insert(labeled.end(), mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(k));
            }
            std::set<std::string> test_ids;
            for (const Period* p : test) test_ids.insert(p->period_id);
            if (log) log(ctx + ": pretraining on " + std::to_string(train.size()) + " periods");

            SslPipelineResult ssl = run_ssl_pipeline(train, config, seed);
            const LabeledWindows lw = make_labeled_windows(labeled, config.pretrain.window, config.pretrain.step);
            const std::size_t leaks = count_leaks(ssl.windows.origin, test_ids) + count_leaks(lw.origin, test_ids);
            report.leakage += leaks;

            std::vector<std::string> train_ids;
            for (const Period* p : train) train_ids.push_back(p->period_id);

            auto evaluate_arm = [&](const Encoder& encoder, const std::string& arm, Predictions& sink) {
                FoldRecord fold;
                fold.held_out = held_out;
                fold.seed = seed;
                fold.arm = arm;
                fold.train_periods = train_ids;
                fold.leakage = leaks;
                auto hook = [&](std::size_t epoch, double, Classifier& clf) {
                    const bool recorded =
                        std::find(config.eval_epochs.begin(), config.eval_epochs.end(), epoch) !=
                        config.eval_epochs.end();
                    if (!recorded && epoch != final_epoch) return;
                    Predictions p;
                    for (const Period* t : test) p.add(predict(encoder, clf, *t, config.pretrain.window), *t);
                    if (recorded) {
                        fold.epochs.push_back(epoch);
                        fold.f1.push_back(micro_f1(p.pred, p.truth));
                    }
                    if (epoch == final_epoch) {
                        for (std::size_t i = 0; i < p.pred.size(); ++i) {
                            sink.pred.push_back(std::move(p.pred[i]));
                            sink.truth.push_back(std::move(p.truth[i]));
                        }
                    }
                };
                ClassifierTrainResult trained = train_classifier(encoder, lw, config.classifier, seed, hook);
                report.freeze_checks.push_back({ctx + ", " + arm, trained.encoder_hash_before,
                                                trained.encoder_hash_after});
                report.folds.push_back(std::move(fold));
            };
            evaluate_arm(ssl.pretrain.best_encoder, "moil", moil_seed);
            if (config.control_arm) {
                Encoder random(config.encoder, train.front()->axes(), seed);
                random.calibrate_batchnorm(ssl.windows.inputs);
                evaluate_arm(random, "random", random_seed);
            }
        }
        moil_preds.push_back(std::move(moil_seed));
        if (config.control_arm) random_preds.push_back(std::move(random_seed));
        if (log) log(seed_tag(seed) + ": moil F1 " + format_real(micro_f1(moil_preds.back().pred, moil_preds.back().truth)));
    }

    ArmSummary moil_arm{"moil", {}, 0.0, 0.0, {}};
    summarize(moil_arm, moil_preds, config.classifier.classes);
    report.arms.push_back(std::move(moil_arm));
    if (config.control_arm) {
        ArmSummary random_arm{"random", {}, 0.0, 0.0, {}};
        summarize(random_arm, random_preds, config.classifier.classes);
        report.arms.push_back(std::move(random_arm));
    }
    return report;
}

}  // namespace moil
