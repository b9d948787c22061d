#pragma once

// Per-class feature-route attribution: positive first-order derivatives of
// the predicted class probability w.r.t. every feature map, summed per unit
// over a set of high-confidence images, and threshold-based route masks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "routekit/dataset.hpp"
#include "routekit/network.hpp"
#include "routekit/parallel.hpp"
#include "routekit/trainer.hpp"

namespace routekit {

enum class SaliencyMode { positive, negative, absolute };

inline std::string saliency_mode_str(SaliencyMode m) {
    switch (m) {
        case SaliencyMode::positive: return "positive";
        case SaliencyMode::negative: return "negative";
        case SaliencyMode::absolute: return "absolute";
    }
    return "positive";
}

inline SaliencyMode saliency_mode_from_str(const std::string& s) {
    if (s == "positive") return SaliencyMode::positive;
    if (s == "negative") return SaliencyMode::negative;
    if (s == "absolute") return SaliencyMode::absolute;
    throw Error("unknown saliency mode '" + s + "'");
}

// Reduces one unit's gradient tensor to a nonnegative response: the sum of
// positive entries, of magnitudes of negative entries, or of all magnitudes.
template <typename S>
double feature_saliency(const Tensor<S>& grad, SaliencyMode mode) {
    double total = 0.0;
    switch (mode) {
        case SaliencyMode::positive:
            for (S v : grad.data()) {
                if (v > S(0)) total += static_cast<double>(v);
            }
            break;
        case SaliencyMode::negative:
            for (S v : grad.data()) {
                if (v < S(0)) total -= static_cast<double>(v);
            }
            break;
        case SaliencyMode::absolute:
            for (S v : grad.data()) total += std::abs(static_cast<double>(v));
            break;
    }
    return total;
}

struct SamplePolicy {
    std::size_t max_images = 100;
    double min_confidence = 0.90;
    bool require_correct = true;

    void validate() const {
        if (max_images < 1) throw Error("sample policy: max images must be >= 1");
        if (min_confidence <= 0.0 || min_confidence >= 1.0) {
            throw Error("sample policy: min confidence must be in (0,1)");
        }
    }
};

struct AttributionMap {
    int class_label = 0;
    SaliencyMode mode = SaliencyMode::positive;
    std::size_t image_count = 0;
    bool policy_relaxed = false;  // confidence bar dropped to fill the sample
    // scores[p][d] = summed saliency of unit d in parameter layer p
    std::vector<std::vector<double>> scores;
};

struct RouteMask {
    std::vector<int> classes;   // sorted labels this mask routes
    double multiplier = 1.0;    // -1 marks a union of masks with mixed multipliers
    // keep[p][d] = unit d of parameter layer p stays in the sub-model
    std::vector<std::vector<bool>> keep;

    std::size_t kept_in_layer(std::size_t p) const {
        return static_cast<std::size_t>(
            std::count(keep.at(p).begin(), keep.at(p).end(), true));
    }
};

namespace detail {

// Per-unit saliency slices of one recorded pass: channel planes for conv
// features, single elements for linear values.
template <typename S>
std::vector<std::vector<double>> per_unit_saliency(const TracedForward<S>& tf,
                                                   const GradientStore<S>& grads,
                                                   SaliencyMode mode) {
    std::vector<std::vector<double>> out;
    out.reserve(tf.feature_nodes.size());
    for (int node : tf.feature_nodes) {
        const Tensor<S>& g = grads.grad(node);
        std::vector<double> layer;
        if (g.rank() == 3) {
            const std::size_t c = g.extent(0), plane = g.extent(1) * g.extent(2);
            layer.reserve(c);
            for (std::size_t ch = 0; ch < c; ++ch) {
                Tensor<S> slice(Shape{g.extent(1), g.extent(2)},
                                std::vector<S>(g.data().begin() + ch * plane,
                                               g.data().begin() + (ch + 1) * plane));
                layer.push_back(feature_saliency(slice, mode));
            }
        } else {
            layer.reserve(g.size());
            for (std::size_t d = 0; d < g.size(); ++d) {
                layer.push_back(feature_saliency(
                    Tensor<S>(Shape{1}, std::vector<S>{g[d]}), mode));
            }
        }
        out.push_back(std::move(layer));
    }
    return out;
}

}  // namespace detail

// Selects up to max_images images of class n (deterministic dataset order)
// that are correctly classified above the confidence bar, then accumulates
// per-unit saliency sums over them. If nothing clears the bar, falls back to
// the most-confident correctly-classified images and flags the map.
template <typename S>
AttributionMap attribute_class(const Model<S>& model, const Dataset& data, int label,
                               const SamplePolicy& policy, SaliencyMode mode,
                               int threads = 1) {
    policy.validate();
    if (!std::binary_search(data.label_universe.begin(), data.label_universe.end(), label)) {
        throw Error("attribute: class " + std::to_string(label) + " not present in dataset");
    }
    const int out_index = model.output_index_of(label);
    if (out_index < 0) {
        throw Error("attribute: class " + std::to_string(label) +
                    " is outside the model's class map");
    }

    // Selection pass: confidence of the target class for every image of it.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] == label) candidates.push_back(i);
    }
    std::vector<double> confidence(candidates.size(), 0.0);
    std::vector<unsigned char> correct(candidates.size(), 0);
    parallel_for(candidates.size(), threads, [&](std::size_t k) {
        const Tensor<S> probs =
            softmax(forward_logits(model, data.images[candidates[k]].template cast<S>()));
        confidence[k] = static_cast<double>(probs[static_cast<std::size_t>(out_index)]);
        correct[k] = model.class_map[argmax_lowest(probs)] == label ? 1 : 0;
    });

    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < candidates.size() && chosen.size() < policy.max_images; ++k) {
        if (policy.require_correct && !correct[k]) continue;
        if (confidence[k] > policy.min_confidence) chosen.push_back(candidates[k]);
    }
    bool relaxed = false;
    if (chosen.empty()) {
        // stable most-confident-first fallback
        std::vector<std::size_t> pool;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            if (!policy.require_correct || correct[k]) pool.push_back(k);
        }
        if (pool.empty()) {
            throw Error("attribute: no image of class " + std::to_string(label) +
                        " qualifies (none correctly classified; the >" +
                        std::to_string(policy.min_confidence) +
                        " confidence fallback needs at least one correct prediction)");
        }
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
            return confidence[a] > confidence[b];
        });
        for (std::size_t k : pool) {
            if (chosen.size() >= policy.max_images) break;
            chosen.push_back(candidates[k]);
        }
        std::sort(chosen.begin(), chosen.end());
        relaxed = true;
    }

    // Accumulation pass: per-image saliencies computed (possibly in
    // parallel), summed in fixed image order for reproducible totals.
    std::vector<std::vector<std::vector<double>>> per_image(chosen.size());
    parallel_for(chosen.size(), threads, [&](std::size_t k) {
        const TracedForward<S> tf =
            record_forward(model, data.images[chosen[k]].template cast<S>());
        const GradientStore<S> grads =
            tf.tape.backward(static_cast<std::size_t>(out_index), GradTarget::probability);
        per_image[k] = detail::per_unit_saliency(tf, grads, mode);
    });

    AttributionMap map;
    map.class_label = label;
    map.mode = mode;
    map.image_count = chosen.size();
    map.policy_relaxed = relaxed;
    map.scores.assign(model.param_layer_count(), {});
    for (std::size_t p = 0; p < model.param_layer_count(); ++p) {
        map.scores[p].assign(per_image.empty() ? 0 : per_image[0][p].size(), 0.0);
    }
    for (const auto& image_scores : per_image) {
        for (std::size_t p = 0; p < image_scores.size(); ++p) {
            for (std::size_t d = 0; d < image_scores[p].size(); ++d) {
                map.scores[p][d] += image_scores[p][d];
            }
        }
    }
    return map;
}

// Threshold masks. `depth` counts parameter layers back from the output
// (0 = final linear); layers within `depth` of the output are thresholded at
// multiplier*mean of their scores, shallower layers keep every unit, and the
// final layer keeps exactly the target class rows. A layer that would come
// out empty keeps its single highest-scoring unit unless the fallback is
// disabled.
template <typename S>
RouteMask build_mask(const AttributionMap& attr, double multiplier, const Model<S>& model,
                     std::size_t depth = 1, bool empty_fallback = true) {
    if (multiplier < 0) throw Error("mask: multiplier must be nonnegative");
    const std::size_t layers = model.param_layer_count();
    if (attr.scores.size() != layers) {
        throw Error("mask: attribution covers " + std::to_string(attr.scores.size()) +
                    " layers but the model has " + std::to_string(layers));
    }
    RouteMask mask;
    mask.classes = {attr.class_label};
    mask.multiplier = multiplier;
    mask.keep.resize(layers);

    const std::vector<std::size_t> positions = model.param_layer_positions();
    for (std::size_t p = 0; p < layers; ++p) {
        std::size_t width = 0;
        if (const Conv* c = std::get_if<Conv>(&model.layers[positions[p]])) {
            width = c->out_channels;
        } else {
            width = std::get<Linear>(model.layers[positions[p]]).out;
        }
        if (attr.scores[p].size() != width) {
            throw Error("mask: layer " + std::to_string(p) + " has " + std::to_string(width) +
                        " units but the attribution scored " +
                        std::to_string(attr.scores[p].size()));
        }
        const std::size_t distance = layers - 1 - p;
        if (distance == 0) {
            std::vector<bool> keep(width, false);
            keep[static_cast<std::size_t>(model.output_index_of(attr.class_label))] = true;
            mask.keep[p] = std::move(keep);
        } else if (distance <= depth) {
            const std::vector<double>& scores = attr.scores[p];
            const double mean =
                std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(width);
            std::vector<bool> keep(width, false);
            bool any = false;
            for (std::size_t d = 0; d < width; ++d) {
                if (scores[d] >= multiplier * mean) {
                    keep[d] = true;
                    any = true;
                }
            }
            if (!any && empty_fallback) {
                const std::size_t top = static_cast<std::size_t>(
                    std::max_element(scores.begin(), scores.end()) - scores.begin());
                keep[top] = true;
            }
            mask.keep[p] = std::move(keep);
        } else {
            mask.keep[p] = std::vector<bool>(width, true);
        }
    }
    return mask;
}

inline RouteMask union_masks(const std::vector<RouteMask>& masks) {
    if (masks.empty()) throw Error("mask union: no masks given");
    RouteMask out = masks.front();
    for (std::size_t m = 1; m < masks.size(); ++m) {
        const RouteMask& other = masks[m];
        if (other.keep.size() != out.keep.size()) {
            throw Error("mask union: layer count mismatch (" + std::to_string(other.keep.size()) +
                        " vs " + std::to_string(out.keep.size()) + ")");
        }
        for (std::size_t p = 0; p < out.keep.size(); ++p) {
            if (other.keep[p].size() != out.keep[p].size()) {
                throw Error("mask union: layer " + std::to_string(p) + " width mismatch (" +
                            std::to_string(other.keep[p].size()) + " vs " +
                            std::to_string(out.keep[p].size()) + ")");
            }
            for (std::size_t d = 0; d < out.keep[p].size(); ++d) {
                out.keep[p][d] = out.keep[p][d] || other.keep[p][d];
            }
        }
        for (int c : other.classes) out.classes.push_back(c);
        if (other.multiplier != out.multiplier) out.multiplier = -1.0;
    }
    std::sort(out.classes.begin(), out.classes.end());
    out.classes.erase(std::unique(out.classes.begin(), out.classes.end()), out.classes.end());
    return out;
}

// ---- structured-text (JSON) round trips ------------------------------------

inline nlohmann::json to_json(const AttributionMap& attr) {
    nlohmann::json j;
    j["kind"] = "attribution";
    j["class"] = attr.class_label;
    j["mode"] = saliency_mode_str(attr.mode);
    j["image_count"] = attr.image_count;
    j["policy_relaxed"] = attr.policy_relaxed;
    j["layers"] = nlohmann::json::array();
    for (std::size_t p = 0; p < attr.scores.size(); ++p) {
        j["layers"].push_back({{"index", p}, {"scores", attr.scores[p]}});
    }
    return j;
}

inline AttributionMap attribution_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "attribution") {
            throw Error("attribution load: not an attribution artifact");
        }
        AttributionMap attr;
        attr.class_label = j.at("class").get<int>();
        attr.mode = saliency_mode_from_str(j.at("mode").get<std::string>());
        attr.image_count = j.at("image_count").get<std::size_t>();
        attr.policy_relaxed = j.at("policy_relaxed").get<bool>();
        attr.scores.resize(j.at("layers").size());
        for (const nlohmann::json& layer : j.at("layers")) {
            attr.scores.at(layer.at("index").get<std::size_t>()) =
                layer.at("scores").get<std::vector<double>>();
        }
        return attr;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("attribution load: malformed artifact: ") + e.what());
    }
}

inline nlohmann::json to_json(const RouteMask& mask) {
    nlohmann::json j;
    j["kind"] = "route_mask";
    j["classes"] = mask.classes;
    j["multiplier"] = mask.multiplier;
    j["layers"] = nlohmann::json::array();
    for (std::size_t p = 0; p < mask.keep.size(); ++p) {
        std::vector<int> bits(mask.keep[p].size());
        for (std::size_t d = 0; d < bits.size(); ++d) bits[d] = mask.keep[p][d] ? 1 : 0;
        j["layers"].push_back({{"index", p}, {"keep", bits}});
    }
    return j;
}

inline RouteMask mask_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "route_mask") {
            throw Error("mask load: not a route mask artifact");
        }
        RouteMask mask;
        mask.classes = j.at("classes").get<std::vector<int>>();
        mask.multiplier = j.at("multiplier").get<double>();
        mask.keep.resize(j.at("layers").size());
        for (const nlohmann::json& layer : j.at("layers")) {
            const std::vector<int> bits = layer.at("keep").get<std::vector<int>>();
            std::vector<bool> keep(bits.size());
            for (std::size_t d = 0; d < bits.size(); ++d) keep[d] = bits[d] != 0;
            mask.keep.at(layer.at("index").get<std::size_t>()) = std::move(keep);
        }
        return mask;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("mask load: malformed artifact: ") + e.what());
    }
}

inline void save_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace routekit
