#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "moil/data_model.hpp"
#include "moil/experiment.hpp"
#include "moil/synth.hpp"

namespace moil {

/// Every tunable of the pipeline in one document. Files override a preset
/// key by key; unknown keys are rejected.
struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;
    CsvSchema data;
    SynthSpec synth;
    ExperimentConfig experiment;

    /// "paper": full-size network, l = 900, full-length optimizer schedule.
    /// "desk": small network and l = 300 for a laptop CPU.
    static RunConfig from_preset(const std::string& name);

    void validate() const;
    nlohmann::json to_json() const;
    /// Hash of the canonical JSON form.
    std::string hash() const;
};

/// Preset defaults overlaid with `overlay`. Throws ConfigError on unknown
/// keys or wrongly typed values.
RunConfig make_run_config(const std::string& preset, const nlohmann::json& overlay = nlohmann::json::object());

/// Reads a JSON config file; its optional "preset" key selects the base
/// unless `preset` is given explicitly.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::optional<std::string>& preset = std::nullopt);

/// Recursively overlays `overlay` onto `base`; every overlay key must exist in
/// `base`. `where` prefixes error messages.
void merge_strict(nlohmann::json& base, const nlohmann::json& overlay, const std::string& where = "");

}  // namespace moil
