#pragma once

// Model file format: NAME.json manifest + NAME.bin blob of little-endian
// 32-bit floats, parameters concatenated in layer order, weights before
// bias within each layer, row-major. load(save(m)) is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "routekit/network.hpp"

namespace routekit {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void append_f32_le(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<unsigned char>(bits & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline nlohmann::json layer_to_json(const LayerSpec& spec) {
    nlohmann::json j;
    if (const Conv* c = std::get_if<Conv>(&spec)) {
        j["kind"] = "conv";
        j["out"] = c->out_channels;
        j["in"] = c->in_channels;
        j["kh"] = c->kh;
        j["kw"] = c->kw;
        j["stride"] = c->stride;
        j["pad"] = c->pad;
    } else if (const Linear* l = std::get_if<Linear>(&spec)) {
        j["kind"] = "linear";
        j["out"] = l->out;
        j["in"] = l->in;
    } else if (std::holds_alternative<ReLU>(spec)) {
        j["kind"] = "relu";
    } else if (const MaxPool* p = std::get_if<MaxPool>(&spec)) {
        j["kind"] = "maxpool";
        j["k"] = p->k;
        j["stride"] = p->stride;
    } else {
        j["kind"] = "flatten";
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv") {
        return Conv{j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>(),
                    j.at("kh").get<std::size_t>(), j.at("kw").get<std::size_t>(),
                    j.at("stride").get<std::size_t>(), j.at("pad").get<std::size_t>()};
    }
    if (kind == "linear") {
        return Linear{j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>()};
    }
    if (kind == "relu") return ReLU{};
    if (kind == "maxpool") {
        return MaxPool{j.at("k").get<std::size_t>(), j.at("stride").get<std::size_t>()};
    }
    if (kind == "flatten") return Flatten{};
    throw Error("model load: unknown layer kind '" + kind + "'");
}

inline Provenance provenance_from_str(const std::string& s) {
    if (s == "original") return Provenance::original;
    if (s == "disassembled") return Provenance::disassembled;
    if (s == "assembled") return Provenance::assembled;
    throw Error("model load: unknown provenance '" + s + "'");
}

}  // namespace detail

// Writes PREFIX.json and PREFIX.bin.
inline void save_model(const Model<float>& model, const std::filesystem::path& prefix) {
    validate_model(model);
    std::vector<unsigned char> blob;
    blob.reserve(model.parameter_count() * 4);
    for (std::size_t p = 0; p < model.weights.size(); ++p) {
        for (float v : model.weights[p].data()) detail::append_f32_le(blob, v);
        for (float v : model.biases[p].data()) detail::append_f32_le(blob, v);
    }

    nlohmann::json manifest;
    manifest["format_version"] = kModelFormatVersion;
    manifest["flatten_order"] = "channel_major";
    manifest["layers"] = nlohmann::json::array();
    for (const LayerSpec& spec : model.layers) {
        manifest["layers"].push_back(detail::layer_to_json(spec));
    }
    manifest["class_map"] = model.class_map;
    manifest["meta"] = {{"name", model.meta.name},
                        {"seed", model.meta.seed},
                        {"provenance", provenance_str(model.meta.provenance)}};
    manifest["blob_bytes"] = blob.size();

    std::filesystem::path json_path = prefix;
    json_path += ".json";
    std::ofstream jf(json_path);
    if (!jf) throw Error("model save: cannot write " + json_path.string());
    jf << manifest.dump(2) << "\n";
    jf.close();

    std::filesystem::path bin_path = prefix;
    bin_path += ".bin";
    std::ofstream bf(bin_path, std::ios::binary);
    if (!bf) throw Error("model save: cannot write " + bin_path.string());
    bf.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size()));
}

inline Model<float> load_model(const std::filesystem::path& prefix) {
    std::filesystem::path json_path = prefix;
    json_path += ".json";
    std::ifstream jf(json_path);
    if (!jf) throw Error("model load: cannot open " + json_path.string());
    nlohmann::json manifest;
    try {
        jf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error("model load: malformed manifest " + json_path.string() + ": " + e.what());
    }

    Model<float> model;
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error("model load: unsupported format version " + std::to_string(version));
        }
        const std::string order = manifest.at("flatten_order").get<std::string>();
        if (order != "channel_major") {
            throw Error("model load: unsupported flatten order '" + order + "'");
        }
        for (const nlohmann::json& j : manifest.at("layers")) {
            model.layers.push_back(detail::layer_from_json(j));
        }
        model.class_map = manifest.at("class_map").get<std::vector<int>>();
        const nlohmann::json& meta = manifest.at("meta");
        model.meta.name = meta.at("name").get<std::string>();
        model.meta.seed = meta.at("seed").get<std::uint64_t>();
        model.meta.provenance = detail::provenance_from_str(meta.at("provenance").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error("model load: malformed manifest " + json_path.string() + ": " + e.what());
    }
    validate_layers(model.layers);

    std::filesystem::path bin_path = prefix;
    bin_path += ".bin";
    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw Error("model load: cannot open " + bin_path.string());
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());
    const std::size_t declared = manifest.at("blob_bytes").get<std::size_t>();
    if (blob.size() != declared) {
        throw Error("model load: blob " + bin_path.string() + " holds " +
                    std::to_string(blob.size()) + " bytes but the manifest declares " +
                    std::to_string(declared));
    }

    std::size_t offset = 0;
    auto take = [&](const Shape& shape) {
        const std::size_t n = shape_volume(shape);
        if (offset + 4 * n > blob.size()) {
            throw Error("model load: blob too short at byte " + std::to_string(offset) +
                        " (needs " + std::to_string(4 * n) + " more bytes)");
        }
        Tensor<float> t(shape);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = detail::read_f32_le(blob.data() + offset);
            offset += 4;
        }
        return t;
    };
    for (const LayerSpec& spec : model.layers) {
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            model.weights.push_back(take({c->out_channels, c->in_channels, c->kh, c->kw}));
            model.biases.push_back(take({c->out_channels}));
        } else if (const Linear* l = std::get_if<Linear>(&spec)) {
            model.weights.push_back(take({l->out, l->in}));
            model.biases.push_back(take({l->out}));
        }
    }
    if (offset != blob.size()) {
        throw Error("model load: blob has " + std::to_string(blob.size() - offset) +
                    " trailing bytes past offset " + std::to_string(offset));
    }
    validate_model(model);
    return model;
}

}  // namespace routekit
