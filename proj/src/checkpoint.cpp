#include "clrkit/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <stdexcept>

namespace clrkit {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'K', 'P', 'T', '1', '\n'};

std::string dtype_code(const torch::Tensor& t) {
    switch (t.scalar_type()) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kInt64: return "i64";
        case torch::kUInt8: return "u8";
        default: throw std::runtime_error("unsupported checkpoint dtype");
    }
}

torch::ScalarType dtype_from_code(const std::string& code) {
    if (code == "f32") return torch::kFloat32;
    if (code == "f64") return torch::kFloat64;
    if (code == "i64") return torch::kInt64;
    if (code == "u8") return torch::kUInt8;
    throw std::runtime_error("unknown checkpoint dtype: " + code);
}

std::map<std::string, torch::Tensor> collect_tensors(const ModuleMap& modules) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& [prefix, module] : modules) {
        for (const auto& p : module->named_parameters(/*recurse=*/true))
            out[prefix + "." + p.key()] = p.value();
        for (const auto& b : module->named_buffers(/*recurse=*/true))
            out[prefix + "." + b.key()] = b.value();
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModuleMap& modules,
                     const std::string& config_text, std::int64_t step) {
    auto tensors = collect_tensors(modules);

    nlohmann::json index = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, tensor] : tensors) {
        auto t = tensor.detach().contiguous().cpu();
        const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        nlohmann::json entry;
        entry["name"] = name;
        entry["dtype"] = dtype_code(t);
        entry["shape"] = t.sizes().vec();
        entry["offset"] = payload.size();
        entry["nbytes"] = nbytes;
        index.push_back(entry);
        payload.append(static_cast<const char*>(t.data_ptr()), nbytes);
    }

    nlohmann::json header;
    header["version"] = 1;
    header["step"] = step;
    header["config"] = config_text;
    header["arrays"] = std::move(index);
    const std::string header_text = header.dump();

    std::string bytes(kMagic, sizeof(kMagic));
    std::uint64_t len = header_text.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    bytes.append(lenbuf, 8);
    bytes += header_text;
    bytes += payload;
    atomic_write(path, bytes);
}

CheckpointData load_checkpoint_data(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a clrkit checkpoint: " + path.string());
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    if (bytes.size() < 16 + len) throw std::runtime_error("truncated checkpoint header");
    auto header = nlohmann::json::parse(bytes.substr(16, len));

    CheckpointData data;
    data.version = header.at("version").get<int>();
    data.step = header.at("step").get<std::int64_t>();
    data.config_text = header.at("config").get<std::string>();
    const std::size_t payload_start = 16 + len;
    for (const auto& entry : header.at("arrays")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto nbytes = entry.at("nbytes").get<std::size_t>();
        if (payload_start + offset + nbytes > bytes.size())
            throw std::runtime_error("truncated checkpoint payload at " + name);
        auto t = torch::empty(shape, dtype_from_code(entry.at("dtype").get<std::string>()));
        TORCH_CHECK(static_cast<std::size_t>(t.numel()) * t.element_size() == nbytes,
                    "size mismatch for ", name);
        std::memcpy(t.data_ptr(), bytes.data() + payload_start + offset, nbytes);
        data.arrays[name] = t;
    }
    return data;
}

void load_into_modules(const CheckpointData& data, const ModuleMap& modules, bool require_all) {
    auto targets = collect_tensors(modules);
    torch::NoGradGuard ng;
    for (auto& [name, target] : targets) {
        auto it = data.arrays.find(name);
        if (it == data.arrays.end()) {
            if (require_all) throw std::runtime_error("checkpoint missing array: " + name);
            continue;
        }
        TORCH_CHECK(it->second.sizes() == target.sizes(), "shape mismatch loading ", name, ": ",
                    it->second.sizes(), " vs ", target.sizes());
        target.copy_(it->second.to(target.scalar_type()));
    }
}

std::uint64_t checkpoint_file_hash(const std::filesystem::path& path) {
    return fnv1a(read_file(path));
}

}  // namespace clrkit
