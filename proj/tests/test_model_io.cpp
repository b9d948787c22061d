#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "routekit/model_io.hpp"
#include "support/oracles.hpp"

using namespace routekit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("routekit_io_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Model<float> sample_model(std::uint64_t seed) {
    std::vector<LayerSpec> layers{Conv{3, 1, 3, 3, 1, 1}, ReLU{}, MaxPool{2, 2}, Flatten{},
                                  Linear{5, 27}, ReLU{}, Linear{2, 5}};
    Model<float> m = build<float>(layers, seed, {4, 9});
    m.meta.name = "sample";
    return m;
}

}  // namespace

TEST_CASE("save/load round-trips bit-exactly") {
    const fs::path dir = temp_dir("roundtrip");
    Model<float> m = sample_model(31);
    detail::Rng rng(2);
    for (std::size_t p = 0; p < m.biases.size(); ++p) {
        for (std::size_t k = 0; k < m.biases[p].size(); ++k) {
            m.biases[p][k] = static_cast<float>(rng.uniform(-1, 1));
        }
    }
    save_model(m, dir / "m");
    const Model<float> loaded = load_model(dir / "m");
    REQUIRE(loaded.class_map == m.class_map);
    REQUIRE(loaded.meta.name == m.meta.name);
    REQUIRE(loaded.meta.seed == m.meta.seed);
    REQUIRE(loaded.meta.provenance == m.meta.provenance);
    REQUIRE(loaded.layers.size() == m.layers.size());
    for (std::size_t p = 0; p < m.weights.size(); ++p) {
        REQUIRE(loaded.weights[p].data() == m.weights[p].data());
        REQUIRE(loaded.biases[p].data() == m.biases[p].data());
    }
    const Tensor<float> probe(Shape{1, 6, 6}, std::vector<float>(36, 0.5f));
    REQUIRE(forward_logits(loaded, probe).data() == forward_logits(m, probe).data());
}

TEST_CASE("truncated blob is rejected with a length error") {
    const fs::path dir = temp_dir("truncated");
    save_model(sample_model(7), dir / "m");
    const fs::path bin = dir / "m.bin";
    const auto size = fs::file_size(bin);
    fs::resize_file(bin, size - 8);
    try {
        load_model(dir / "m");
        FAIL("expected a blob-length error");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("bytes") != std::string::npos);
    }
}

TEST_CASE("unknown layer kind in the manifest is rejected") {
    const fs::path dir = temp_dir("unknown_kind");
    save_model(sample_model(7), dir / "m");
    std::ifstream in(dir / "m.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::size_t at = text.find("\"maxpool\"");
    REQUIRE(at != std::string::npos);
    text.replace(at, 9, "\"avgpool\"");
    std::ofstream out(dir / "m.json");
    out << text;
    out.close();
    try {
        load_model(dir / "m");
        FAIL("expected an unknown-kind error");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("avgpool") != std::string::npos);
    }
}

TEST_CASE("malformed manifest is rejected") {
    const fs::path dir = temp_dir("malformed");
    std::ofstream(dir / "m.json") << "{ not json";
    std::ofstream(dir / "m.bin").put(0);
    REQUIRE_THROWS_AS(load_model(dir / "m"), Error);
}

TEST_CASE("a hand-written manifest and blob load and compute") {
    const fs::path dir = temp_dir("handwritten");
    std::ofstream jf(dir / "tiny.json");
    jf << R"({
  "format_version": 1,
  "flatten_order": "channel_major",
  "layers": [ {"kind": "linear", "out": 2, "in": 2} ],
  "class_map": [0, 1],
  "meta": {"name": "tiny", "seed": 0, "provenance": "original"},
  "blob_bytes": 24
})";
    jf.close();
    // W = [[1,2],[3,4]] row-major then bias [0,0], little-endian float32
    std::ofstream bf(dir / "tiny.bin", std::ios::binary);
    const float values[6] = {1, 2, 3, 4, 0, 0};
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        for (int byte = 0; byte < 4; ++byte) {
            bf.put(static_cast<char>((bits >> (8 * byte)) & 0xff));
        }
    }
    bf.close();
    const Model<float> m = load_model(dir / "tiny");
    const Tensor<float> y = forward_logits(m, Tensor<float>(Shape{2}, {1, 1}));
    REQUIRE(y[0] == 3.0f);
    REQUIRE(y[1] == 7.0f);
}

TEST_CASE("manifest blob_bytes mismatch is rejected") {
    const fs::path dir = temp_dir("declared");
    save_model(sample_model(7), dir / "m");
    std::ifstream in(dir / "m.json");
    nlohmann::json manifest;
    in >> manifest;
    in.close();
    manifest["blob_bytes"] = manifest["blob_bytes"].get<std::size_t>() + 4;
    std::ofstream out(dir / "m.json");
    out << manifest.dump(2);
    out.close();
    REQUIRE_THROWS_AS(load_model(dir / "m"), Error);
}
