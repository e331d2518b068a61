#pragma once

#include <set>

#include <json.hpp>

#include "sino/io/tnsr.hpp"
#include "sino/nn/model.hpp"

namespace sino::nn {

/// Checkpoints are a TNSR container: the tensor magic and version, a bundle
/// marker byte, a JSON header naming each parameter by layer path, then one
/// plain TNSR record per parameter in header order.
inline constexpr std::uint8_t kBundleMarker = 0xB0;

template <class T>
void save_weights(Model<T>& model, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["params"] = nlohmann::json::array();
    std::vector<const Tensor<T>*> tensors;
    model.for_each_param([&](const std::string& name, Tensor<T>& p) {
        header["params"].push_back(name);
        tensors.push_back(&p);
    });
    const std::string header_str = header.dump();

    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw io::FormatError("checkpoint: cannot open " + tmp.string());
        os.write("TNSR", 4);
        io::detail::put<std::uint32_t>(os, 1);
        io::detail::put<std::uint8_t>(os, kBundleMarker);
        io::detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(header_str.size()));
        os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const Tensor<T>* t : tensors) {
            io::TnsrArray arr;
            arr.f64 = sizeof(T) == 8;
            for (int d : t->dims) arr.dims.push_back(static_cast<std::uint32_t>(d));
            arr.data.assign(t->data.begin(), t->data.end());
            io::detail::write_stream(os, arr);
        }
        if (!os) throw io::FormatError("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

struct NamedArrays {
    std::vector<std::pair<std::string, io::TnsrArray>> params;
};

inline NamedArrays load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io::FormatError("checkpoint: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TNSR", 4) != 0) throw io::FormatError("checkpoint: bad magic");
    const auto version = io::detail::get<std::uint32_t>(is);
    if (version != 1) throw io::UnsupportedVersion("checkpoint: unsupported version " + std::to_string(version));
    const auto marker = io::detail::get<std::uint8_t>(is);
    if (marker != kBundleMarker) throw io::FormatError("checkpoint: not a weight bundle");
    const auto header_len = io::detail::get<std::uint32_t>(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), header_len);
    if (!is) throw io::FormatError("checkpoint: truncated header");

    nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
    if (header.is_discarded() || !header.contains("params"))
        throw io::FormatError("checkpoint: malformed header");

    NamedArrays out;
    for (const auto& name : header["params"])
        out.params.emplace_back(name.get<std::string>(), io::detail::read_stream(is));
    return out;
}

/// Installs named arrays into a model; every parameter must match by name
/// and shape.
template <class T>
void apply_weights(Model<T>& model, const NamedArrays& arrays) {
    std::size_t i = 0;
    model.for_each_param([&](const std::string& name, Tensor<T>& p) {
        if (i >= arrays.params.size() || arrays.params[i].first != name)
            throw std::invalid_argument("apply_weights: parameter list mismatch at " + name);
        const io::TnsrArray& arr = arrays.params[i].second;
        if (arr.numel() != p.numel()) throw std::invalid_argument("apply_weights: shape mismatch at " + name);
        for (std::size_t j = 0; j < p.numel(); ++j) p.data[j] = static_cast<T>(arr.data[j]);
        ++i;
    });
    if (i != arrays.params.size()) throw std::invalid_argument("apply_weights: extra parameters in file");
}

/// Copies every parameter whose name and shape match; a head (final fully
/// connected layer) whose shape differs is He-initialized instead. Any other
/// mismatch is structural and rejected.
template <class T>
void transfer_init(Model<T>& target, const NamedArrays& source, std::uint64_t head_seed) {
    // locate the final fully connected node's parameter names
    std::string head_prefix;
    for (const auto& node : target.graph().nodes)
        if (node.kind == LayerKind::FullyConnected) head_prefix = node.name;
    std::map<std::string, const io::TnsrArray*> by_name;
    for (const auto& [name, arr] : source.params) by_name[name] = &arr;

    bool head_mismatch = false;
    target.for_each_param([&](const std::string& name, Tensor<T>& p) {
        auto it = by_name.find(name);
        const bool is_head = !head_prefix.empty() && name.rfind(head_prefix + "/", 0) == 0;
        if (it == by_name.end()) {
            if (!is_head) throw std::invalid_argument("transfer_init: missing parameter " + name);
            head_mismatch = true;
            return;
        }
        const io::TnsrArray& arr = *it->second;
        if (arr.numel() != p.numel()) {
            if (!is_head) throw std::invalid_argument("transfer_init: shape mismatch at " + name);
            head_mismatch = true;
            return;
        }
        for (std::size_t j = 0; j < p.numel(); ++j) p.data[j] = static_cast<T>(arr.data[j]);
    });
    // reject sources with non-head parameters the target lacks
    std::set<std::string> target_names;
    target.for_each_param([&](const std::string& name, Tensor<T>&) { target_names.insert(name); });
    for (const auto& [name, arr] : source.params) {
        const bool is_head = !head_prefix.empty() && name.rfind(head_prefix + "/", 0) == 0;
        if (!target_names.count(name) && !is_head)
            throw std::invalid_argument("transfer_init: source has extra parameter " + name);
    }

    if (head_mismatch) {
        // reinitialize the whole head for the new class count
        const std::uint64_t stream = mix_seed(head_seed ^ 0x68656164ULL);
        int index = 0;
        target.for_each_param([&](const std::string& name, Tensor<T>& p) {
            if (head_prefix.empty() || name.rfind(head_prefix + "/", 0) != 0) return;
            if (name.ends_with("/bias")) {
                p.fill(T(0));
                return;
            }
            std::size_t fan_in = 1;
            for (std::size_t j = 1; j < p.dims.size(); ++j) fan_in *= static_cast<std::size_t>(p.dims[j]);
            Rng rng(mix_seed(stream + static_cast<std::uint64_t>(index++)));
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : p.data) v = static_cast<T>(rng.normal(0.0, stddev));
        });
    }
}

}  // namespace sino::nn
