#include "moil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace moil {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'M', 'O', 'I', 'L', 'C', 'K', 'P', 'T'};
}

void Checkpoint::put(const std::string& name, const Tensor& tensor) {
    for (auto& [n, t] : tensors) {
        if (n == name) {
            t = tensor;
            return;
        }
    }
    tensors.emplace_back(name, tensor);
}

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw LoadError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& entry : tensors) {
        if (entry.first == name) return true;
    }
    return false;
}

void Checkpoint::store(const std::vector<StateEntry>& entries) {
    for (const auto& e : entries) {
        if (has(e.name)) throw ValueError("duplicate checkpoint entry '" + e.name + "'");
        tensors.emplace_back(e.name, *e.tensor);
    }
}

void Checkpoint::restore(const std::vector<StateEntry>& entries) const {
    for (const auto& e : entries) {
        const Tensor& src = get(e.name);
        if (src.shape != e.tensor->shape) {
            throw ShapeError("checkpoint tensor '" + e.name + "' has shape " + src.shape_string() +
                             ", model expects " + e.tensor->shape_string());
        }
        *e.tensor = src;
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    nlohmann::json header = checkpoint.meta;
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, t] : checkpoint.tensors) index.push_back({{"name", name}, {"shape", t.shape}});
    header["tensors"] = index;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = Checkpoint::format_version;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& entry : checkpoint.tensors) {
        const auto& data = entry.second.data;
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw LoadError("'" + path.string() + "' is not a checkpoint");
    }
    std::uint32_t version = 0;
    std::uint64_t length = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&length), sizeof length);
    if (!in || version != Checkpoint::format_version) {
        throw LoadError("unsupported checkpoint version in '" + path.string() + "'");
    }
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) throw LoadError("truncated checkpoint header");

    Checkpoint cp;
    try {
        cp.meta = nlohmann::json::parse(text);
        for (const auto& entry : cp.meta.at("tensors")) {
            Tensor t(entry.at("shape").get<std::vector<std::size_t>>());
            in.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
            if (!in) throw LoadError("truncated checkpoint data");
            cp.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed checkpoint header: ") + e.what());
    }
    cp.meta.erase("tensors");
    return cp;
}

void append_param_state(std::vector<StateEntry>& out, Param& param) {
    out.push_back({param.name, &param.value});
    out.push_back({param.name + ".adam_m", &param.adam_m});
    out.push_back({param.name + ".adam_v", &param.adam_v});
}

}  // namespace moil
