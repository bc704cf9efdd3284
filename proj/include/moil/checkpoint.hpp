#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "moil/tensor.hpp"

namespace moil {

/// Versioned binary container: magic, format version, a JSON header
/// (metadata plus the name and shape of every tensor) and then the raw
/// little-endian doubles of each tensor in header order.
struct Checkpoint {
    static constexpr std::uint32_t format_version = 1;

    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    void put(const std::string& name, const Tensor& tensor);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;

    /// Copy every entry in; names must be unique.
    void store(const std::vector<StateEntry>& entries);
    /// Copy every entry out; missing names or shape mismatches throw.
    void restore(const std::vector<StateEntry>& entries) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Param value plus its Adam moments as three state entries.
void append_param_state(std::vector<StateEntry>& out, Param& param);

}  // namespace moil
