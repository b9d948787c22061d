#pragma once

// Layer component bridging, class-aware disassembly, same-model and
// cross-model assembly with alignment zero padding, and compression
// statistics (parameter and multiply-accumulate counts).

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "routekit/attribution.hpp"
#include "routekit/network.hpp"

namespace routekit {

struct LayerSlice {
    std::vector<std::size_t> kept_outputs;  // filters / linear filters that stay
    std::vector<std::size_t> kept_inputs;   // kernels / input neurons that stay
};

struct SubModelPlan {
    std::vector<int> classes;
    std::string source_model;
    std::vector<LayerSlice> layers;  // one per parameter layer
    // conv->linear boundary: parameter-layer index of the last conv (-1 when
    // the model has no such boundary) and the h*w elements per channel that
    // one kept channel expands to in the following linear layer.
    int flatten_after = -1;
    std::size_t flatten_block = 1;
};

namespace detail {

inline std::vector<std::size_t> indices_of(const std::vector<bool>& keep) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) out.push_back(i);
    }
    return out;
}

inline std::vector<std::size_t> expand_channels(const std::vector<std::size_t>& channels,
                                                std::size_t block) {
    std::vector<std::size_t> out;
    out.reserve(channels.size() * block);
    for (std::size_t c : channels) {
        for (std::size_t k = 0; k < block; ++k) out.push_back(c * block + k);
    }
    return out;
}

}  // namespace detail

// Derives index-level surgery instructions from a route mask: kept outputs
// per layer come from the mask, kept inputs of layer r+1 are the kept
// outputs of layer r (expanded channel-major across the flatten boundary),
// and the first layer keeps all raw input channels.
template <typename S>
SubModelPlan bridge(const RouteMask& mask, const Model<S>& model) {
    const std::vector<std::size_t> positions = model.param_layer_positions();
    if (mask.keep.size() != positions.size()) {
        throw Error("bridge: mask covers " + std::to_string(mask.keep.size()) +
                    " layers but the model has " + std::to_string(positions.size()));
    }
    SubModelPlan plan;
    plan.classes = mask.classes;
    plan.source_model = model.meta.name;
    plan.layers.resize(positions.size());

    // locate the conv->linear boundary
    for (std::size_t p = 0; p + 1 < positions.size(); ++p) {
        const bool conv_here = std::holds_alternative<Conv>(model.layers[positions[p]]);
        const bool linear_next = std::holds_alternative<Linear>(model.layers[positions[p + 1]]);
        if (conv_here && linear_next) {
            const Conv& c = std::get<Conv>(model.layers[positions[p]]);
            const Linear& l = std::get<Linear>(model.layers[positions[p + 1]]);
            plan.flatten_after = static_cast<int>(p);
            plan.flatten_block = l.in / c.out_channels;
        }
    }

    for (std::size_t p = 0; p < positions.size(); ++p) {
        const LayerSpec& spec = model.layers[positions[p]];
        std::size_t width = 0, in_width = 0;
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            width = c->out_channels;
            in_width = c->in_channels;
        } else {
            const Linear& l = std::get<Linear>(spec);
            width = l.out;
            in_width = l.in;
        }
        if (mask.keep[p].size() != width) {
            throw Error("bridge: mask layer " + std::to_string(p) + " has " +
                        std::to_string(mask.keep[p].size()) + " bits for " +
                        std::to_string(width) + " units");
        }
        plan.layers[p].kept_outputs = detail::indices_of(mask.keep[p]);
        if (p == 0) {
            plan.layers[p].kept_inputs.resize(in_width);
            std::iota(plan.layers[p].kept_inputs.begin(), plan.layers[p].kept_inputs.end(), 0);
        } else if (plan.flatten_after >= 0 &&
                   p == static_cast<std::size_t>(plan.flatten_after) + 1) {
            plan.layers[p].kept_inputs =
                detail::expand_channels(plan.layers[p - 1].kept_outputs, plan.flatten_block);
        } else {
            plan.layers[p].kept_inputs = plan.layers[p - 1].kept_outputs;
        }
    }
    return plan;
}

// Parameter count of the sub-model a plan describes, without building it.
template <typename S>
std::size_t plan_parameter_count(const SubModelPlan& plan, const Model<S>& model) {
    const std::vector<std::size_t> positions = model.param_layer_positions();
    if (plan.layers.size() != positions.size()) {
        throw Error("plan: layer count does not match model");
    }
    std::size_t total = 0;
    for (std::size_t p = 0; p < positions.size(); ++p) {
        const std::size_t out = plan.layers[p].kept_outputs.size();
        const std::size_t in = plan.layers[p].kept_inputs.size();
        if (const Conv* c = std::get_if<Conv>(&model.layers[positions[p]])) {
            total += out * in * c->kh * c->kw + out;
        } else {
            total += out * in + out;
        }
    }
    return total;
}

// Slices the model's parameter tensors down to the plan's kept indices.
// Values are bit-copied; biases travel with their filters.
template <typename S>
Model<S> disassemble(const Model<S>& model, const SubModelPlan& plan) {
    const std::vector<std::size_t> positions = model.param_layer_positions();
    if (plan.layers.size() != positions.size()) {
        throw Error("disassemble: plan covers " + std::to_string(plan.layers.size()) +
                    " layers but the model has " + std::to_string(positions.size()));
    }

    Model<S> out;
    out.layers = model.layers;
    std::size_t p = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!is_param_layer(model.layers[i])) continue;
        const LayerSlice& slice = plan.layers[p];
        const std::vector<std::size_t>& rows = slice.kept_outputs;
        const std::vector<std::size_t>& cols = slice.kept_inputs;
        if (rows.empty()) {
            throw Error("disassemble: layer " + std::to_string(p) + " keeps no units");
        }

        // bridging rule: inputs of this layer = outputs kept one layer below
        if (p > 0) {
            const std::vector<std::size_t>& prev = plan.layers[p - 1].kept_outputs;
            std::vector<std::size_t> expect;
            if (plan.flatten_after >= 0 && p == static_cast<std::size_t>(plan.flatten_after) + 1) {
                expect = detail::expand_channels(prev, plan.flatten_block);
            } else {
                expect = prev;
            }
            if (cols != expect) {
                throw Error("disassemble: layer " + std::to_string(p) +
                            " kept inputs do not match the preceding layer's kept outputs");
            }
        }

        const Tensor<S>& w = model.weights[p];
        const Tensor<S>& b = model.biases[p];
        if (const Conv* c = std::get_if<Conv>(&model.layers[i])) {
            for (std::size_t r : rows) {
                if (r >= c->out_channels) throw Error("disassemble: filter index out of range");
            }
            for (std::size_t cc : cols) {
                if (cc >= c->in_channels) throw Error("disassemble: kernel index out of range");
            }
            Tensor<S> nw(Shape{rows.size(), cols.size(), c->kh, c->kw});
            Tensor<S> nb(Shape{rows.size()});
            for (std::size_t ro = 0; ro < rows.size(); ++ro) {
                nb[ro] = b[rows[ro]];
                for (std::size_t co = 0; co < cols.size(); ++co) {
                    for (std::size_t u = 0; u < c->kh; ++u) {
                        for (std::size_t v = 0; v < c->kw; ++v) {
                            nw[((ro * cols.size() + co) * c->kh + u) * c->kw + v] =
                                w[((rows[ro] * c->in_channels + cols[co]) * c->kh + u) * c->kw + v];
                        }
                    }
                }
            }
            out.layers[i] = Conv{rows.size(), cols.size(), c->kh, c->kw, c->stride, c->pad};
            out.weights.push_back(std::move(nw));
            out.biases.push_back(std::move(nb));
        } else {
            const Linear& l = std::get<Linear>(model.layers[i]);
            for (std::size_t r : rows) {
                if (r >= l.out) throw Error("disassemble: output index out of range");
            }
            for (std::size_t cc : cols) {
                if (cc >= l.in) throw Error("disassemble: input index out of range");
            }
            Tensor<S> nw(Shape{rows.size(), cols.size()});
            Tensor<S> nb(Shape{rows.size()});
            for (std::size_t ro = 0; ro < rows.size(); ++ro) {
                nb[ro] = b[rows[ro]];
                for (std::size_t co = 0; co < cols.size(); ++co) {
                    nw[ro * cols.size() + co] = w[rows[ro] * l.in + cols[co]];
                }
            }
            out.layers[i] = Linear{rows.size(), cols.size()};
            out.weights.push_back(std::move(nw));
            out.biases.push_back(std::move(nb));
        }
        ++p;
    }

    // class map follows the kept final rows in original output order
    const std::vector<std::size_t>& final_rows = plan.layers.back().kept_outputs;
    std::set<int> wanted(plan.classes.begin(), plan.classes.end());
    for (std::size_t r : final_rows) {
        out.class_map.push_back(model.class_map[r]);
        if (!wanted.count(model.class_map[r])) {
            throw Error("disassemble: final layer keeps output " + std::to_string(r) +
                        " (class " + std::to_string(model.class_map[r]) +
                        ") which is not in the plan's class set");
        }
    }
    if (out.class_map.size() != wanted.size()) {
        throw Error("disassemble: plan class set does not match the kept final rows");
    }

    out.meta.name = model.meta.name;
    for (int c : plan.classes) out.meta.name += "_c" + std::to_string(c);
    out.meta.seed = model.meta.seed;
    out.meta.provenance = Provenance::disassembled;
    validate_model(out);
    return out;
}

// Same-model assembly: shared units appear once; equivalent to disassembling
// at the union of the plans' masks.
template <typename S>
Model<S> assemble_same(const std::vector<SubModelPlan>& plans, const Model<S>& model) {
    if (plans.empty()) throw Error("assemble: no plans given");
    for (const SubModelPlan& plan : plans) {
        if (plan.source_model != model.meta.name) {
            throw Error("assemble: plan for model '" + plan.source_model +
                        "' cannot be applied to '" + model.meta.name + "'");
        }
        if (plan.layers.size() != model.param_layer_count()) {
            throw Error("assemble: plan layer count does not match model");
        }
    }
    RouteMask mask;
    mask.multiplier = -1.0;
    mask.keep.resize(model.param_layer_count());
    for (std::size_t p = 0; p < model.param_layer_count(); ++p) {
        mask.keep[p] = std::vector<bool>(param_layer_width(model, p), false);
        for (const SubModelPlan& plan : plans) {
            for (std::size_t d : plan.layers[p].kept_outputs) {
                mask.keep[p].at(d) = true;
            }
        }
    }
    std::set<int> classes;
    for (const SubModelPlan& plan : plans) classes.insert(plan.classes.begin(), plan.classes.end());
    mask.classes.assign(classes.begin(), classes.end());
    return disassemble(model, bridge(mask, model));
}

namespace detail {

template <typename S>
void require_isomorphic(const std::vector<Model<S>>& components) {
    const Model<S>& head = components.front();
    for (std::size_t m = 1; m < components.size(); ++m) {
        const Model<S>& other = components[m];
        if (other.layers.size() != head.layers.size()) {
            throw Error("assemble: components have different layer counts");
        }
        for (std::size_t i = 0; i < head.layers.size(); ++i) {
            const LayerSpec& a = head.layers[i];
            const LayerSpec& b = other.layers[i];
            if (a.index() != b.index()) {
                throw Error("assemble: layer " + std::to_string(i) + " kinds differ (" +
                            layer_str(a) + " vs " + layer_str(b) + ")");
            }
            if (const Conv* ca = std::get_if<Conv>(&a)) {
                const Conv& cb = std::get<Conv>(b);
                if (ca->kh != cb.kh || ca->kw != cb.kw || ca->stride != cb.stride ||
                    ca->pad != cb.pad) {
                    throw Error("assemble: layer " + std::to_string(i) +
                                " kernel geometry differs (" + layer_str(a) + " vs " +
                                layer_str(b) + ")");
                }
            }
            if (const MaxPool* pa = std::get_if<MaxPool>(&a)) {
                const MaxPool& pb = std::get<MaxPool>(b);
                if (pa->k != pb.k || pa->stride != pb.stride) {
                    throw Error("assemble: layer " + std::to_string(i) + " pooling differs");
                }
            }
        }
    }
}

}  // namespace detail

// Cross-model assembly with alignment zero padding: per layer, each
// component's filters occupy their own output span with zero kernels at all
// foreign input positions, so every component's computation is preserved
// exactly. The first parameter layer stacks filters without padding (all
// components consume the raw input).
template <typename S>
Model<S> assemble_cross(const std::vector<Model<S>>& components) {
    if (components.empty()) throw Error("assemble: no components given");
    detail::require_isomorphic(components);

    // raw-input agreement and flatten-block agreement
    const std::vector<std::size_t> positions = components.front().param_layer_positions();
    const std::size_t nlayers = positions.size();
    {
        const LayerSpec& first = components.front().layers[positions[0]];
        for (const Model<S>& comp : components) {
            const LayerSpec& other = comp.layers[positions[0]];
            const std::size_t a = std::holds_alternative<Conv>(first)
                                      ? std::get<Conv>(first).in_channels
                                      : std::get<Linear>(first).in;
            const std::size_t b = std::holds_alternative<Conv>(other)
                                      ? std::get<Conv>(other).in_channels
                                      : std::get<Linear>(other).in;
            if (a != b) {
                throw Error("assemble: components expect different raw input widths (" +
                            std::to_string(a) + " vs " + std::to_string(b) + ")");
            }
        }
    }
    std::size_t flatten_block = 0;
    for (std::size_t p = 0; p + 1 < nlayers; ++p) {
        if (!std::holds_alternative<Conv>(components.front().layers[positions[p]]) ||
            !std::holds_alternative<Linear>(components.front().layers[positions[p + 1]])) {
            continue;
        }
        for (const Model<S>& comp : components) {
            const Conv& c = std::get<Conv>(comp.layers[positions[p]]);
            const Linear& l = std::get<Linear>(comp.layers[positions[p + 1]]);
            const std::size_t block = l.in / c.out_channels;
            if (flatten_block == 0) {
                flatten_block = block;
            } else if (block != flatten_block) {
                throw Error("assemble: components flatten to different spatial sizes (" +
                            std::to_string(block) + " vs " + std::to_string(flatten_block) + ")");
            }
        }
    }

    // class-label collision check
    std::set<int> labels;
    for (const Model<S>& comp : components) {
        for (int label : comp.class_map) {
            if (!labels.insert(label).second) {
                throw Error("assemble: class label " + std::to_string(label) +
                            " appears in more than one component (relabel first)");
            }
        }
    }

    Model<S> out;
    out.layers = components.front().layers;
    for (std::size_t p = 0; p < nlayers; ++p) {
        std::vector<std::size_t> outs, ins;
        for (const Model<S>& comp : components) {
            const LayerSpec& spec = comp.layers[positions[p]];
            if (const Conv* c = std::get_if<Conv>(&spec)) {
                outs.push_back(c->out_channels);
                ins.push_back(c->in_channels);
            } else {
                const Linear& l = std::get<Linear>(spec);
                outs.push_back(l.out);
                ins.push_back(l.in);
            }
        }
        const std::size_t total_out = std::accumulate(outs.begin(), outs.end(), std::size_t{0});
        const std::size_t total_in =
            p == 0 ? ins[0] : std::accumulate(ins.begin(), ins.end(), std::size_t{0});

        if (const Conv* c0 = std::get_if<Conv>(&components.front().layers[positions[p]])) {
            Tensor<S> nw(Shape{total_out, total_in, c0->kh, c0->kw});
            Tensor<S> nb(Shape{total_out});
            std::size_t out_off = 0, in_off = 0;
            for (std::size_t m = 0; m < components.size(); ++m) {
                const Tensor<S>& w = components[m].weights[p];
                const Tensor<S>& b = components[m].biases[p];
                const std::size_t col0 = p == 0 ? 0 : in_off;
                for (std::size_t o = 0; o < outs[m]; ++o) {
                    nb[out_off + o] = b[o];
                    for (std::size_t c = 0; c < ins[m]; ++c) {
                        for (std::size_t u = 0; u < c0->kh; ++u) {
                            for (std::size_t v = 0; v < c0->kw; ++v) {
                                nw[(((out_off + o) * total_in + col0 + c) * c0->kh + u) * c0->kw +
                                   v] = w[((o * ins[m] + c) * c0->kh + u) * c0->kw + v];
                            }
                        }
                    }
                }
                out_off += outs[m];
                in_off += ins[m];
            }
            out.layers[positions[p]] = Conv{total_out, total_in, c0->kh, c0->kw,
                                            c0->stride, c0->pad};
            out.weights.push_back(std::move(nw));
            out.biases.push_back(std::move(nb));
        } else {
            Tensor<S> nw(Shape{total_out, total_in});
            Tensor<S> nb(Shape{total_out});
            std::size_t out_off = 0, in_off = 0;
            for (std::size_t m = 0; m < components.size(); ++m) {
                const Tensor<S>& w = components[m].weights[p];
                const Tensor<S>& b = components[m].biases[p];
                const std::size_t col0 = p == 0 ? 0 : in_off;
                for (std::size_t o = 0; o < outs[m]; ++o) {
                    nb[out_off + o] = b[o];
                    for (std::size_t c = 0; c < ins[m]; ++c) {
                        nw[(out_off + o) * total_in + col0 + c] = w[o * ins[m] + c];
                    }
                }
                out_off += outs[m];
                in_off += ins[m];
            }
            out.layers[positions[p]] = Linear{total_out, total_in};
            out.weights.push_back(std::move(nw));
            out.biases.push_back(std::move(nb));
        }
    }

    for (const Model<S>& comp : components) {
        out.class_map.insert(out.class_map.end(), comp.class_map.begin(), comp.class_map.end());
    }
    out.meta.name = components.front().meta.name;
    for (std::size_t m = 1; m < components.size(); ++m) {
        out.meta.name += "+" + components[m].meta.name;
    }
    out.meta.seed = components.front().meta.seed;
    out.meta.provenance = Provenance::assembled;
    validate_model(out);
    return out;
}

template <typename S>
Model<S> assemble_cross(std::initializer_list<Model<S>> components) {
    return assemble_cross(std::vector<Model<S>>(components));
}

// Rewrites class labels through `mapping` (labels absent from the map pass
// through); the result must stay collision-free.
template <typename S>
Model<S> relabel_classes(Model<S> model, const std::map<int, int>& mapping) {
    for (int& label : model.class_map) {
        const auto it = mapping.find(label);
        if (it != mapping.end()) label = it->second;
    }
    validate_model(model);
    return model;
}

struct CompressionStats {
    std::size_t original_params = 0;
    std::size_t derived_params = 0;
    std::size_t original_macs = 0;
    std::size_t derived_macs = 0;
    double param_ratio = 0.0;  // percent of parameters removed
    double flops_ratio = 0.0;  // percent of multiply-accumulates removed
};

// Multiply-accumulate count for one forward pass at the given input shape.
// One MAC per weight application: conv out*in*kh*kw*H'*W', linear out*in.
template <typename S>
std::size_t mac_count(const Model<S>& model, const Shape& input_shape) {
    std::size_t total = 0;
    Shape cur = input_shape;
    for (const LayerSpec& spec : model.layers) {
        const Shape next = layer_output_shape(spec, cur);
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            total += c->out_channels * c->in_channels * c->kh * c->kw * next[1] * next[2];
        } else if (const Linear* l = std::get_if<Linear>(&spec)) {
            total += l->out * l->in;
        }
        cur = next;
    }
    return total;
}

template <typename S>
CompressionStats stats(const Model<S>& original, const Model<S>& derived,
                       const Shape& input_shape) {
    CompressionStats st;
    st.original_params = original.parameter_count();
    st.derived_params = derived.parameter_count();
    st.original_macs = mac_count(original, input_shape);
    st.derived_macs = mac_count(derived, input_shape);
    st.param_ratio = 100.0 * (1.0 - static_cast<double>(st.derived_params) /
                                        static_cast<double>(st.original_params));
    st.flops_ratio = 100.0 * (1.0 - static_cast<double>(st.derived_macs) /
                                        static_cast<double>(st.original_macs));
    return st;
}

// ---- structured-text (JSON) round trips ------------------------------------

inline nlohmann::json to_json(const SubModelPlan& plan) {
    nlohmann::json j;
    j["kind"] = "submodel_plan";
    j["classes"] = plan.classes;
    j["source_model"] = plan.source_model;
    j["flatten_after"] = plan.flatten_after;
    j["flatten_block"] = plan.flatten_block;
    j["layers"] = nlohmann::json::array();
    for (std::size_t p = 0; p < plan.layers.size(); ++p) {
        j["layers"].push_back({{"index", p},
                               {"kept_outputs", plan.layers[p].kept_outputs},
                               {"kept_inputs", plan.layers[p].kept_inputs}});
    }
    return j;
}

inline SubModelPlan plan_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "submodel_plan") {
            throw Error("plan load: not a sub-model plan artifact");
        }
        SubModelPlan plan;
        plan.classes = j.at("classes").get<std::vector<int>>();
        plan.source_model = j.at("source_model").get<std::string>();
        plan.flatten_after = j.at("flatten_after").get<int>();
        plan.flatten_block = j.at("flatten_block").get<std::size_t>();
        plan.layers.resize(j.at("layers").size());
        for (const nlohmann::json& layer : j.at("layers")) {
            LayerSlice slice;
            slice.kept_outputs = layer.at("kept_outputs").get<std::vector<std::size_t>>();
            slice.kept_inputs = layer.at("kept_inputs").get<std::vector<std::size_t>>();
            plan.layers.at(layer.at("index").get<std::size_t>()) = std::move(slice);
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("plan load: malformed artifact: ") + e.what());
    }
}

}  // namespace routekit
