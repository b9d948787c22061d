#pragma once

// IDX ingestion (big-endian magic + dims, unsigned-byte payload) and
// class-subset splitting.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "routekit/tensor.hpp"

namespace routekit {

struct Dataset {
    std::vector<Tensor<float>> images;  // [C,H,W], values in [0,1]
    std::vector<int> labels;
    std::vector<int> label_universe;    // sorted

    std::size_t size() const { return images.size(); }
};

namespace detail {

inline std::uint32_t read_u32_be(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) {
        throw Error("idx parse: " + path + ": unexpected end of file at byte " +
                    std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_u32_be(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>(v & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw Error("idx parse: cannot open " + images_path.string());
    const std::uint32_t magic_i = detail::read_u32_be(fi, images_path.string(), 0);
    if (magic_i != kIdxImagesMagic) {
        throw Error("idx parse: " + images_path.string() + ": bad image magic at byte 0 (got 0x" +
                    [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof buf, "%08x", magic_i);
                        return std::string(buf);
                    }() +
                    ", want 0x00000803)");
    }
    const std::uint32_t count = detail::read_u32_be(fi, images_path.string(), 4);
    const std::uint32_t rows = detail::read_u32_be(fi, images_path.string(), 8);
    const std::uint32_t cols = detail::read_u32_be(fi, images_path.string(), 12);
    if (rows == 0 || cols == 0) {
        throw Error("idx parse: " + images_path.string() + ": zero image dimension in header");
    }
    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * rows * cols);
    fi.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (static_cast<std::size_t>(fi.gcount()) != pixels.size()) {
        throw Error("idx parse: " + images_path.string() + ": payload truncated at byte " +
                    std::to_string(16 + fi.gcount()) + " (expected " +
                    std::to_string(16 + pixels.size()) + " bytes total)");
    }

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw Error("idx parse: cannot open " + labels_path.string());
    const std::uint32_t magic_l = detail::read_u32_be(fl, labels_path.string(), 0);
    if (magic_l != kIdxLabelsMagic) {
        throw Error("idx parse: " + labels_path.string() +
                    ": bad label magic at byte 0 (want 0x00000801)");
    }
    const std::uint32_t label_count = detail::read_u32_be(fl, labels_path.string(), 4);
    if (label_count != count) {
        throw Error("idx parse: " + labels_path.string() + " holds " + std::to_string(label_count) +
                    " labels for " + std::to_string(count) + " images");
    }
    std::vector<unsigned char> raw_labels(label_count);
    fl.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(raw_labels.size()));
    if (static_cast<std::size_t>(fl.gcount()) != raw_labels.size()) {
        throw Error("idx parse: " + labels_path.string() + ": payload truncated at byte " +
                    std::to_string(8 + fl.gcount()));
    }

    Dataset data;
    data.images.reserve(count);
    data.labels.reserve(count);
    std::set<int> seen;
    for (std::size_t n = 0; n < count; ++n) {
        Tensor<float> img(Shape{1, rows, cols});
        const unsigned char* src = pixels.data() + n * rows * cols;
        for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
            img[i] = static_cast<float>(src[i]) / 255.0f;
        }
        data.images.push_back(std::move(img));
        data.labels.push_back(static_cast<int>(raw_labels[n]));
        seen.insert(static_cast<int>(raw_labels[n]));
    }
    data.label_universe.assign(seen.begin(), seen.end());
    return data;
}

// Writes the dataset back out as an IDX pair; pixels are quantized to bytes.
inline void save_idx(const Dataset& data, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    if (data.images.empty()) throw Error("idx write: empty dataset");
    const Shape& s = data.images.front().shape();
    if (s.size() != 3 || s[0] != 1) {
        throw Error("idx write: images must be [1,H,W], got " + shape_str(s));
    }
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw Error("idx write: cannot write " + images_path.string());
    detail::write_u32_be(fi, kIdxImagesMagic);
    detail::write_u32_be(fi, static_cast<std::uint32_t>(data.images.size()));
    detail::write_u32_be(fi, static_cast<std::uint32_t>(s[1]));
    detail::write_u32_be(fi, static_cast<std::uint32_t>(s[2]));
    for (const Tensor<float>& img : data.images) {
        if (img.shape() != s) throw Error("idx write: ragged image shapes");
        for (float v : img.data()) {
            const float clamped = std::min(1.0f, std::max(0.0f, v));
            fi.put(static_cast<char>(static_cast<unsigned char>(clamped * 255.0f + 0.5f)));
        }
    }
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw Error("idx write: cannot write " + labels_path.string());
    detail::write_u32_be(fl, kIdxLabelsMagic);
    detail::write_u32_be(fl, static_cast<std::uint32_t>(data.labels.size()));
    for (int label : data.labels) fl.put(static_cast<char>(static_cast<unsigned char>(label)));
}

inline Dataset subset(const Dataset& data, const std::vector<int>& classes) {
    std::set<int> wanted;
    for (int c : classes) {
        if (!std::binary_search(data.label_universe.begin(), data.label_universe.end(), c)) {
            throw Error("subset: class " + std::to_string(c) + " not present in dataset");
        }
        wanted.insert(c);
    }
    Dataset out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (wanted.count(data.labels[i])) {
            out.images.push_back(data.images[i]);
            out.labels.push_back(data.labels[i]);
        }
    }
    out.label_universe.assign(wanted.begin(), wanted.end());
    return out;
}

}  // namespace routekit
