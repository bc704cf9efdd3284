#include "moil/config.hpp"

#include <fstream>
#include <sstream>

namespace moil {

using nlohmann::json;

namespace {

json schema_to_json(const CsvSchema& s) {
    return {{"worker_column", s.worker_column},
            {"period_column", s.period_column},
            {"time_column", s.time_column},
            {"label_column", s.label_column},
            {"axis_columns", s.axis_columns},
            {"sample_rate_hz", s.sample_rate_hz},
            {"labeled_fraction", s.roles.labeled_fraction},
            {"overlap", s.roles.overlap}};
}

CsvSchema schema_from_json(const json& j) {
    CsvSchema s;
    s.worker_column = j.at("worker_column").get<std::string>();
    s.period_column = j.at("period_column").get<std::string>();
    s.time_column = j.at("time_column").get<std::string>();
    s.label_column = j.at("label_column").get<std::string>();
    s.axis_columns = j.at("axis_columns").get<std::vector<std::string>>();
    s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    s.roles.labeled_fraction = j.at("labeled_fraction").get<double>();
    s.roles.overlap = j.at("overlap").get<bool>();
    return s;
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "paper") {
        c.experiment.encoder = EncoderConfig::paper();
        c.experiment.pretrain = PretrainRun{};
        c.synth.operations_per_period = 2 * c.synth.operations_per_period;
    } else if (name == "desk") {
        c.experiment.encoder = EncoderConfig::desk();
        c.experiment.pretrain.lr = 1e-3;
        c.experiment.pretrain.epochs = 50;
        c.experiment.pretrain.batch_size = 16;
        c.experiment.pretrain.window = 300;
        c.experiment.pretrain.step = 150;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected 'paper' or 'desk')");
    }
    c.experiment.classifier.classes = c.synth.classes;
    c.synth.min_period_length = c.experiment.pretrain.window;
    return c;
}

void RunConfig::validate() const {
    if (preset != "paper" && preset != "desk") throw ConfigError("unknown preset '" + preset + "'");
    if (!(data.sample_rate_hz > 0.0)) throw ConfigError("data.sample_rate_hz must be positive");
    if (data.roles.labeled_fraction < 0.0 || data.roles.labeled_fraction > 1.0) {
        throw ConfigError("data.labeled_fraction must lie in [0, 1]");
    }
    synth.validate();
    experiment.validate();
}

json RunConfig::to_json() const {
    return {{"preset", preset},
            {"seed", seed},
            {"data", schema_to_json(data)},
            {"synth", synth.to_json()},
            {"experiment", experiment.to_json()}};
}

std::string RunConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

void merge_strict(json& base, const json& overlay, const std::string& where) {
    if (!overlay.is_object()) throw ConfigError("config" + (where.empty() ? "" : " '" + where + "'") + " must be an object");
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        json& target = base[key];
        if (target.is_object()) {
            merge_strict(target, value, path);
            continue;
        }
        const bool numeric_ok = target.is_number() && value.is_number();
        if (!numeric_ok && target.type() != value.type() && !(target.is_array() && value.is_array())) {
            throw ConfigError("config key '" + path + "' has type " + value.type_name() + ", expected " +
                              target.type_name());
        }
        if (target.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
            throw ConfigError("config key '" + path + "' must not be negative");
        }
        if (target.is_number_integer() && value.is_number_float()) {
            throw ConfigError("config key '" + path + "' must be an integer");
        }
        target = value;
    }
}

RunConfig make_run_config(const std::string& preset, const json& overlay) {
    const RunConfig base = RunConfig::from_preset(preset);
    json merged = base.to_json();
    json rest = overlay;
    if (rest.is_object()) rest.erase("preset");
    merge_strict(merged, rest);
    RunConfig c;
    try {
        c.preset = preset;
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.data = schema_from_json(merged.at("data"));
        c.synth = SynthSpec::from_json(merged.at("synth"));
        c.experiment = ExperimentConfig::from_json(merged.at("experiment"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::optional<std::string>& preset) {
    json overlay = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw LoadError("cannot open config file '" + path->string() + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        try {
            overlay = json::parse(buffer.str());
        } catch (const json::exception& e) {
            throw ConfigError("config file '" + path->string() + "' is not valid JSON: " + e.what());
        }
    }
    std::string name = "desk";
    if (overlay.is_object() && overlay.contains("preset")) name = overlay["preset"].get<std::string>();
    if (preset) name = *preset;
    return make_run_config(name, overlay);
}

}  // namespace moil
