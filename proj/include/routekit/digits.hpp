#pragma once

// Deterministic synthetic digit corpus: stroke glyphs for 0-9 rasterized to
// 28x28 grayscale with seeded affine jitter, stroke-width variation and
// pixel noise. Stands in for a downloaded handwritten-digit corpus on
// machines without one; images round-trip through the IDX format.

#include <cmath>
#include <cstdint>
#include <vector>

#include "routekit/dataset.hpp"
#include "routekit/network.hpp"

namespace routekit {
namespace detail {

struct Pt {
    double x = 0.0;
    double y = 0.0;
};

// Dense polylines per glyph, in a unit box with y growing downward.
inline std::vector<std::vector<Pt>> digit_strokes(int digit) {
    auto line = [](Pt a, Pt b) {
        std::vector<Pt> pts;
        for (int i = 0; i <= 24; ++i) {
            const double t = i / 24.0;
            pts.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
        return pts;
    };
    auto arc = [](Pt center, double rx, double ry, double deg0, double deg1) {
        std::vector<Pt> pts;
        for (int i = 0; i <= 48; ++i) {
            const double a = (deg0 + (deg1 - deg0) * i / 48.0) * M_PI / 180.0;
            pts.push_back({center.x + rx * std::cos(a), center.y + ry * std::sin(a)});
        }
        return pts;
    };
    switch (digit) {
        case 0: return {arc({0.50, 0.50}, 0.26, 0.36, 0, 360)};
        case 1: return {line({0.36, 0.30}, {0.54, 0.15}), line({0.54, 0.15}, {0.54, 0.85}),
                        line({0.38, 0.85}, {0.68, 0.85})};
        case 2: return {arc({0.50, 0.34}, 0.22, 0.20, 180, 350),
                        line({0.71, 0.40}, {0.30, 0.84}), line({0.30, 0.84}, {0.74, 0.84})};
        case 3: return {arc({0.47, 0.33}, 0.21, 0.18, 160, 400),
                        arc({0.47, 0.67}, 0.23, 0.20, -40, 200)};
        case 4: return {line({0.62, 0.15}, {0.30, 0.62}), line({0.30, 0.62}, {0.78, 0.62}),
                        line({0.62, 0.15}, {0.62, 0.86})};
        case 5: return {line({0.70, 0.16}, {0.35, 0.16}), line({0.35, 0.16}, {0.33, 0.46}),
                        arc({0.49, 0.64}, 0.23, 0.21, 200, 440)};
        case 6: return {arc({0.56, 0.30}, 0.28, 0.26, 200, 300),
                        arc({0.48, 0.65}, 0.22, 0.21, 0, 360)};
        case 7: return {line({0.28, 0.17}, {0.74, 0.17}), line({0.74, 0.17}, {0.44, 0.86})};
        case 8: return {arc({0.50, 0.32}, 0.19, 0.17, 0, 360),
                        arc({0.50, 0.67}, 0.23, 0.20, 0, 360)};
        case 9: return {arc({0.52, 0.36}, 0.21, 0.19, 0, 360),
                        line({0.72, 0.40}, {0.58, 0.86})};
        default: throw Error("digits: glyph " + std::to_string(digit) + " not defined");
    }
}

inline double segment_distance(Pt p, Pt a, Pt b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 == 0.0 ? 0.0 : ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = std::min(1.0, std::max(0.0, t));
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

}  // namespace detail

// One 28x28 rendering of `digit` under a seeded random distortion.
inline Tensor<float> render_digit(int digit, std::uint64_t seed) {
    constexpr std::size_t kSide = 28;
    detail::Rng rng(seed);
    const double angle = rng.uniform(-0.21, 0.21);
    const double sx = rng.uniform(0.80, 1.12);
    const double sy = rng.uniform(0.80, 1.12);
    const double shear = rng.uniform(-0.15, 0.15);
    const double tx = rng.uniform(-2.2, 2.2);
    const double ty = rng.uniform(-2.2, 2.2);
    const double thickness = rng.uniform(1.1, 1.9);
    const double noise_sigma = rng.uniform(0.02, 0.06);

    const double ca = std::cos(angle), sa = std::sin(angle);
    auto place = [&](detail::Pt p) {
        // unit box -> centered pixel coords -> rotate/scale/shear/translate
        const double cx = (p.x - 0.5) * kSide * sx;
        const double cy = (p.y - 0.5) * kSide * sy;
        const double rx = ca * cx - sa * cy + shear * cy;
        const double ry = sa * cx + ca * cy;
        return detail::Pt{rx + kSide / 2.0 + tx, ry + kSide / 2.0 + ty};
    };

    std::vector<std::vector<detail::Pt>> strokes;
    for (const std::vector<detail::Pt>& stroke : detail::digit_strokes(digit)) {
        std::vector<detail::Pt> placed;
        placed.reserve(stroke.size());
        for (detail::Pt p : stroke) placed.push_back(place(p));
        strokes.push_back(std::move(placed));
    }

    Tensor<float> img(Shape{1, kSide, kSide});
    for (std::size_t y = 0; y < kSide; ++y) {
        for (std::size_t x = 0; x < kSide; ++x) {
            const detail::Pt pixel{x + 0.5, y + 0.5};
            double dist = 1e9;
            for (const std::vector<detail::Pt>& stroke : strokes) {
                for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
                    dist = std::min(dist, detail::segment_distance(pixel, stroke[i], stroke[i + 1]));
                }
            }
            const double ink = std::min(1.0, std::max(0.0, (thickness - dist) / 0.7 + 0.5));
            img.at3(0, y, x) = static_cast<float>(ink);
        }
    }
    // Box-Muller pixel noise, quantized to the byte grid like file ingestion
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double u1 = std::max(rng.uniform(), 1e-12);
        const double u2 = rng.uniform();
        const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        double v = img[i] + noise_sigma * g;
        v = std::min(1.0, std::max(0.0, v));
        img[i] = static_cast<float>(static_cast<int>(v * 255.0 + 0.5)) / 255.0f;
    }
    return img;
}

// Round-robin class order, per-image seeds derived from (seed, class, index).
inline Dataset make_digit_dataset(const std::vector<int>& classes, std::size_t per_class,
                                  std::uint64_t seed) {
    if (classes.empty() || per_class == 0) throw Error("digits: empty dataset requested");
    Dataset data;
    data.images.reserve(classes.size() * per_class);
    for (std::size_t i = 0; i < per_class; ++i) {
        for (int c : classes) {
            const std::uint64_t image_seed =
                seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(c) * 0x100000001b3ull +
                i * 0x1000193ull + 1;
            data.images.push_back(render_digit(c, image_seed));
            data.labels.push_back(c);
        }
    }
    std::set<int> seen(classes.begin(), classes.end());
    data.label_universe.assign(seen.begin(), seen.end());
    return data;
}

}  // namespace routekit
