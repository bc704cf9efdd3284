#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "moil/config.hpp"
#include "moil/downstream.hpp"
#include "moil/experiment.hpp"
#include "moil/moil_net.hpp"
#include "moil/motif_engine.hpp"
#include "moil/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moil;

namespace {

struct Common {
    std::optional<std::string> config;
    std::optional<std::string> preset;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON run config overriding the preset")->check(CLI::ExistingFile);
    cmd->add_option("--preset", c.preset, "Base preset: desk (default) or paper");
    cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
    cmd->add_option("--out", c.out, "Output directory (default: $MOIL_OUT)");
}

RunConfig resolve_config(const Common& c) {
    std::optional<fs::path> path;
    if (c.config) path = *c.config;
    RunConfig cfg = load_run_config(path, c.preset);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

fs::path output_dir(const Common& c) {
    std::string dir = c.out;
    if (dir.empty()) {
        if (const char* env = std::getenv("MOIL_OUT")) dir = env;
    }
    if (dir.empty()) throw ConfigError("no output directory: pass --out or set MOIL_OUT");
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out << text;
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_file(path))); }

/// Refuses an input whose sibling manifest records a different content hash.
void verify_against_manifest(const fs::path& path) {
    const fs::path manifest = path.parent_path().empty() ? fs::path("manifest.json")
                                                         : path.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) return;
    const json m = json::parse(read_file(manifest));
    const std::string name = path.filename().string();
    if (!m.contains("outputs") || !m["outputs"].contains(name)) return;
    if (m["outputs"][name].get<std::string>() != file_hash(path)) {
        throw IntegrityError("'" + path.string() + "' does not match the hash recorded in " + manifest.string());
    }
}

std::optional<json> sibling_manifest(const fs::path& path) {
    const fs::path manifest = path.parent_path().empty() ? fs::path("manifest.json")
                                                         : path.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) return std::nullopt;
    return json::parse(read_file(manifest));
}

class Manifest {
public:
    Manifest(std::string command, const RunConfig& cfg) {
        doc_ = {{"format", "moil-manifest/1"},
                {"command", std::move(command)},
                {"seed", cfg.seed},
                {"config_hash", cfg.hash()},
                {"config", cfg.to_json()},
                {"inputs", json::object()},
                {"outputs", json::object()}};
    }
    void input(const std::string& role, const fs::path& path) {
        verify_against_manifest(path);
        doc_["inputs"][role] = {{"path", path.string()}, {"hash", file_hash(path)}};
    }
    void output(const fs::path& path) { doc_["outputs"][path.filename().string()] = file_hash(path); }
    json& extra() { return doc_; }
    void write(const fs::path& dir) const { write_file(dir / "manifest.json", doc_.dump(1) + "\n"); }

private:
    json doc_;
};

std::string loss_curve_csv(const std::vector<double>& curve) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) out += std::to_string(i + 1) + "," + format_real(curve[i]) + "\n";
    return out;
}

Dataset load_data(const std::string& path, const RunConfig& cfg, Manifest& manifest) {
    manifest.input("data", path);
    return load_csv(path, cfg.data);
}

std::vector<Period> normalized(const Dataset& ds, const std::vector<std::size_t>& indices) {
    std::vector<Period> out;
    for (std::size_t i : indices) out.push_back(minmax_normalize(ds.periods[i]));
    return out;
}

std::vector<const Period*> pointers(const std::vector<Period>& periods) {
    std::vector<const Period*> out;
    for (const auto& p : periods) out.push_back(&p);
    return out;
}

void save_json(const fs::path& path, const json& doc) { write_file(path, doc.dump(1) + "\n"); }

json checkpoint_meta(const RunConfig& cfg, const MotifSet& motifs) {
    return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"motif_hash", motifs.hash()}};
}

MotifSet load_verified_motifs(const std::string& path, Manifest& manifest) {
    manifest.input("motifs", path);
    return load_motifs(path);
}

// ---------------------------------------------------------------- commands

void cmd_gen_synth(const Common& c) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("gen-synth", cfg);
    SynthSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    const SynthDataset synth = gen_dataset(spec);
    write_csv(synth.dataset, dir / "data.csv");
    write_file(dir / "synth.json", synth_sidecar_json(synth));
    manifest.output(dir / "data.csv");
    manifest.output(dir / "synth.json");
    manifest.write(dir);
}

void cmd_prep(const Common& c, const std::string& data) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("prep", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    Dataset norm;
    std::string symbols = "period_id,t";
    for (std::size_t a = 0; a < ds.axes(); ++a) symbols += ",s_" + std::to_string(a);
    symbols += "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        norm.periods.push_back(minmax_normalize(ds.periods[i]));
        norm.roles.push_back(ds.roles[i]);
        const SymbolicSeries s = symbolize(norm.periods.back(), cfg.experiment.alphabet_size);
        for (std::size_t t = 0; t < s.length(); ++t) {
            symbols += ds.periods[i].period_id + "," + std::to_string(t);
            for (std::size_t a = 0; a < s.axes(); ++a) symbols += "," + std::to_string(s.symbols(t, a));
            symbols += "\n";
        }
    }
    write_csv(norm, dir / "normalized.csv");
    write_file(dir / "symbols.csv", symbols);
    manifest.output(dir / "normalized.csv");
    manifest.output(dir / "symbols.csv");
    manifest.write(dir);
}

void cmd_mine(const Common& c, const std::string& data) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("mine-motifs", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    const auto unlabeled = normalized(ds, ds.unlabeled());
    MotifMiningConfig mining{cfg.experiment.alphabet_size, cfg.experiment.candidates(ds.sample_rate_hz()), cfg.seed};
    const MotifSet motifs = mine_key_motifs(pointers(unlabeled), mining);
    save_motifs(motifs, dir / "motifs.json");
    manifest.output(dir / "motifs.json");
    manifest.extra()["motif_hash"] = motifs.hash();
    manifest.write(dir);
}

void cmd_build_targets(const Common& c, const std::string& data, const std::string& motifs_path) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("build-targets", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    const MotifSet motifs = load_verified_motifs(motifs_path, manifest);
    const auto unlabeled = normalized(ds, ds.unlabeled());
    std::vector<SymbolicSeries> symbolic;
    std::vector<std::string> ids;
    for (const auto& p : unlabeled) {
        symbolic.push_back(symbolize(p, motifs.alphabet_size));
        ids.push_back(p.period_id);
    }
    const TargetBuildReport report = build_ssl_targets(symbolic, ids, motifs.motifs, cfg.experiment.threads);
    save_targets(report.targets, dir / "targets.csv");
    manifest.output(dir / "targets.csv");
    manifest.extra()["motif_hash"] = motifs.hash();
    manifest.extra()["uninformative_channels"] = report.uninformative_channels;
    manifest.write(dir);
}

void cmd_pretrain(const Common& c, const std::string& data, const std::string& motifs_path,
                  const std::string& targets_path) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("pretrain", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    const MotifSet motifs = load_verified_motifs(motifs_path, manifest);
    manifest.input("targets", targets_path);
    if (auto upstream = sibling_manifest(targets_path); upstream && upstream->contains("motif_hash")) {
        if ((*upstream)["motif_hash"].get<std::string>() != motifs.hash()) {
            throw IntegrityError("targets were built from motif set " + (*upstream)["motif_hash"].get<std::string>() +
                                 " but --motifs has hash " + motifs.hash());
        }
    }
    const auto targets = load_targets(targets_path);
    for (const auto& t : targets) {
        if (t.values.cols() != motifs.motifs.size()) {
            throw IntegrityError("targets have " + std::to_string(t.values.cols()) + " channels but the motif set has " +
                                 std::to_string(motifs.motifs.size()));
        }
    }
    const auto unlabeled = normalized(ds, ds.unlabeled());
    PretrainRun run = cfg.experiment.pretrain;
    run.seed = cfg.seed;
    const SslWindows windows = make_ssl_windows(pointers(unlabeled), targets, run.window, run.step);
    MoilModel model(cfg.experiment.encoder, ds.axes(), motifs.motifs.size(), cfg.seed);
    PretrainResult result = pretrain(model, windows, run, [](std::size_t epoch, double loss) {
        std::cerr << "epoch " << epoch << " loss " << format_real(loss) << "\n";
    });

    json meta = checkpoint_meta(cfg, motifs);
    meta["best_epoch"] = result.best_epoch;
    meta["best_loss"] = result.best_loss;
    save_checkpoint(model_checkpoint(model, meta), dir / "model.ckpt");
    save_checkpoint(encoder_checkpoint(result.best_encoder, meta), dir / "encoder.ckpt");
    write_file(dir / "loss_curve.csv", loss_curve_csv(result.loss_curve));
    for (const char* f : {"model.ckpt", "encoder.ckpt", "loss_curve.csv"}) manifest.output(dir / f);
    manifest.extra()["motif_hash"] = motifs.hash();
    manifest.extra()["encoder_hash"] = result.best_encoder.parameter_hash();
    manifest.extra()["best_epoch"] = result.best_epoch;
    manifest.write(dir);
}

Encoder load_encoder_checked(const std::string& path, const MotifSet* motifs, Manifest& manifest) {
    manifest.input("encoder", path);
    const Checkpoint cp = load_checkpoint(path);
    if (cp.meta.value("kind", "") != "encoder") throw IntegrityError("'" + path + "' is not an encoder checkpoint");
    if (motifs) {
        const std::string trained_on = cp.meta.value("motif_hash", "");
        if (trained_on != motifs->hash()) {
            throw IntegrityError("encoder was pretrained against motif set '" + trained_on +
                                 "' but the given motif set has hash '" + motifs->hash() + "'");
        }
    }
    return encoder_from_checkpoint(cp);
}

void cmd_train(const Common& c, const std::string& data, const std::string& encoder_path,
               const std::string& motifs_path) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("train", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    const MotifSet motifs = load_verified_motifs(motifs_path, manifest);
    const Encoder encoder = load_encoder_checked(encoder_path, &motifs, manifest);
    const auto labeled = normalized(ds, ds.labeled());
    if (labeled.empty()) throw ValueError("no labelled periods (D_l is empty)");
    const auto& pre = cfg.experiment.pretrain;
    const LabeledWindows windows = make_labeled_windows(pointers(labeled), pre.window, pre.step);
    ClassifierTrainResult result = train_classifier(encoder, windows, cfg.experiment.classifier, cfg.seed);
    if (result.encoder_hash_before != result.encoder_hash_after) {
        throw IntegrityError("encoder parameters changed during classifier training");
    }
    json meta = checkpoint_meta(cfg, motifs);
    meta["encoder_hash"] = result.encoder_hash_after;
    save_checkpoint(classifier_checkpoint(result.classifier, meta), dir / "classifier.ckpt");
    write_file(dir / "loss_curve.csv", loss_curve_csv(result.loss_curve));
    manifest.output(dir / "classifier.ckpt");
    manifest.output(dir / "loss_curve.csv");
    manifest.extra()["motif_hash"] = motifs.hash();
    manifest.extra()["encoder_hash_before"] = result.encoder_hash_before;
    manifest.extra()["encoder_hash_after"] = result.encoder_hash_after;
    manifest.write(dir);
}

void cmd_evaluate(const Common& c, const std::string& data, const std::string& encoder_path,
                  const std::string& classifier_path, const std::optional<std::string>& motifs_path) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = output_dir(c);
    Manifest manifest("evaluate", cfg);
    const Dataset ds = load_data(data, cfg, manifest);
    std::optional<MotifSet> motifs;
    if (motifs_path) motifs = load_verified_motifs(*motifs_path, manifest);
    const Encoder encoder = load_encoder_checked(encoder_path, motifs ? &*motifs : nullptr, manifest);
    manifest.input("classifier", classifier_path);
    const Checkpoint cp = load_checkpoint(classifier_path);
    if (cp.meta.value("encoder_hash", "") != encoder.parameter_hash()) {
        throw IntegrityError("classifier was trained on encoder '" + cp.meta.value("encoder_hash", "") +
                             "' but the given encoder has hash '" + encoder.parameter_hash() + "'");
    }
    if (motifs && cp.meta.value("motif_hash", "") != motifs->hash()) {
        throw IntegrityError("classifier was trained against a different motif set than the one given");
    }
    Classifier classifier = classifier_from_checkpoint(cp);

    std::vector<std::vector<int>> preds, truths;
    std::string csv = "period_id,t,true,pred\n";
    for (const auto& period : ds.periods) {
        if (!period.labeled()) continue;
        const Period norm = minmax_normalize(period);
        preds.push_back(predict(encoder, classifier, norm, cfg.experiment.pretrain.window));
        truths.push_back(*period.labels);
        for (std::size_t t = 0; t < period.length(); ++t) {
            csv += period.period_id + "," + std::to_string(t) + "," + std::to_string(truths.back()[t]) + "," +
                   std::to_string(preds.back()[t]) + "\n";
        }
    }
    if (preds.empty()) throw ValueError("no labelled periods to evaluate");
    write_file(dir / "predictions.csv", csv);
    const json report = {{"micro_f1", micro_f1(preds, truths)},
                         {"confusion", confusion_matrix(preds, truths, classifier.config().classes)},
                         {"periods", preds.size()},
                         {"encoder_hash", encoder.parameter_hash()},
                         {"config_hash", cfg.hash()},
                         {"seed", cfg.seed}};
    save_json(dir / "report.json", report);
    manifest.output(dir / "predictions.csv");
    manifest.output(dir / "report.json");
    manifest.write(dir);
}

void cmd_experiment(const Common& c, const std::string& protocol, const std::optional<std::string>& data,
                    const std::optional<double>& labels, const std::optional<std::size_t>& seeds) {
    RunConfig cfg = resolve_config(c);
    if (labels) cfg.experiment.label_fraction = *labels;
    if (seeds || c.seed) {
        const std::size_t count = seeds ? *seeds : cfg.experiment.seeds.size();
        cfg.experiment.seeds.clear();
        for (std::size_t i = 0; i < count; ++i) cfg.experiment.seeds.push_back(cfg.seed + i);
    }
    cfg.validate();
    const fs::path dir = output_dir(c);
    Manifest manifest("experiment", cfg);
    Dataset ds;
    if (data) {
        ds = load_data(*data, cfg, manifest);
    } else {
        SynthSpec spec = cfg.synth;
        spec.seed = cfg.seed;
        ds = gen_dataset(spec).dataset;
    }
    auto log = [](const std::string& line) { std::cerr << line << "\n"; };
    ExperimentReport report;
    if (protocol == "worker-dependent") {
        report = run_worker_dependent(ds, cfg.experiment, log);
    } else if (protocol == "worker-independent") {
        report = run_worker_independent(ds, cfg.experiment, log);
    } else {
        throw ConfigError("unknown protocol '" + protocol + "'");
    }
    if (!report.frozen()) throw IntegrityError("encoder parameters changed during downstream training");
    if (report.leakage != 0) throw IntegrityError("held-out periods leaked into training");
    json doc = report.to_json();
    doc["config_hash"] = cfg.hash();
    doc["seed"] = cfg.seed;
    doc["run_config"] = cfg.to_json();
    save_json(dir / "report.json", doc);
    manifest.output(dir / "report.json");
    manifest.write(dir);
    for (const auto& arm : report.arms) {
        std::cerr << arm.name << ": micro-F1 " << format_real(arm.mean) << " +- " << format_real(arm.stddev) << "\n";
    }
}

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motif-based self-supervised pretraining for activity recognition"};
    app.require_subcommand(1);

    Common common;
    std::string data, motifs, targets, encoder, classifier, protocol = "worker-dependent";
    std::optional<std::string> motifs_opt, data_opt;
    std::optional<double> labels;
    std::optional<std::size_t> seeds;

    auto* gen = app.add_subcommand("gen-synth", "Generate the synthetic labelled dataset and its sidecar");
    add_common(gen, common);

    auto* prep = app.add_subcommand("prep", "Normalize and symbolize every period");
    add_common(prep, common);
    prep->add_option("--data", data, "Dataset CSV")->required();

    auto* mine = app.add_subcommand("mine-motifs", "Select key motifs from the unlabeled periods");
    add_common(mine, common);
    mine->add_option("--data", data, "Dataset CSV")->required();

    auto* build = app.add_subcommand("build-targets", "Similarity targets for the unlabeled periods");
    add_common(build, common);
    build->add_option("--data", data, "Dataset CSV")->required();
    build->add_option("--motifs", motifs, "motifs.json from mine-motifs")->required();

    auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining of encoder and projector");
    add_common(pre, common);
    pre->add_option("--data", data, "Dataset CSV")->required();
    pre->add_option("--motifs", motifs, "motifs.json from mine-motifs")->required();
    pre->add_option("--targets", targets, "targets.csv from build-targets")->required();

    auto* train = app.add_subcommand("train", "Train the classifier on the frozen encoder");
    add_common(train, common);
    train->add_option("--data", data, "Dataset CSV")->required();
    train->add_option("--encoder", encoder, "encoder.ckpt from pretrain")->required();
    train->add_option("--motifs", motifs, "motifs.json the encoder was pretrained with")->required();

    auto* eval = app.add_subcommand("evaluate", "Per-step predictions and micro-F1 on labelled periods");
    add_common(eval, common);
    eval->add_option("--data", data, "Dataset CSV")->required();
    eval->add_option("--encoder", encoder, "encoder.ckpt from pretrain")->required();
    eval->add_option("--classifier", classifier, "classifier.ckpt from train")->required();
    eval->add_option("--motifs", motifs_opt, "motifs.json, checked against both checkpoints");

    auto* exp = app.add_subcommand("experiment", "End-to-end evaluation protocol");
    add_common(exp, common);
    exp->add_option("--protocol", protocol, "worker-dependent or worker-independent")
        ->check(CLI::IsMember({"worker-dependent", "worker-independent"}));
    exp->add_option("--data", data_opt, "Dataset CSV (default: generate the synthetic dataset)");
    exp->add_option("--labels", labels, "Fraction of training periods whose labels are used");
    exp->add_option("--seeds", seeds, "Number of seeds, starting at --seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage_error", e.what());
        return 2;
    }

    try {
        if (*gen) cmd_gen_synth(common);
        else if (*prep) cmd_prep(common, data);
        else if (*mine) cmd_mine(common, data);
        else if (*build) cmd_build_targets(common, data, motifs);
        else if (*pre) cmd_pretrain(common, data, motifs, targets);
        else if (*train) cmd_train(common, data, encoder, motifs);
        else if (*eval) cmd_evaluate(common, data, encoder, classifier, motifs_opt);
        else if (*exp) cmd_experiment(common, protocol, data_opt, labels, seeds);
    } catch (const moil::Error& e) {
        print_error(e.kind(), e.what());
        return 1;
    } catch (const json::exception& e) {
        print_error("load_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal_error", e.what());
        return 1;
    }
    return 0;
}
