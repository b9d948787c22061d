#pragma once

// Layer specifications, model construction and the traced forward pass.
// A Model owns one weight/bias pair per parameter layer (Conv or Linear)
// plus a class map from output index to retained class label.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "routekit/autodiff.hpp"
#include "routekit/tensor.hpp"

namespace routekit {

struct Conv {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
};

struct Linear {
    std::size_t out = 0;
    std::size_t in = 0;
};

struct ReLU {};

struct MaxPool {
    std::size_t k = 2;
    std::size_t stride = 2;
};

struct Flatten {};

using LayerSpec = std::variant<Conv, Linear, ReLU, MaxPool, Flatten>;

inline bool is_param_layer(const LayerSpec& spec) {
    return std::holds_alternative<Conv>(spec) || std::holds_alternative<Linear>(spec);
}

inline std::string layer_str(const LayerSpec& spec) {
    if (const Conv* c = std::get_if<Conv>(&spec)) {
        return "conv(" + std::to_string(c->out_channels) + "<-" + std::to_string(c->in_channels) +
               "," + std::to_string(c->kh) + "x" + std::to_string(c->kw) + ",s" +
               std::to_string(c->stride) + ",p" + std::to_string(c->pad) + ")";
    }
    if (const Linear* l = std::get_if<Linear>(&spec)) {
        return "linear(" + std::to_string(l->out) + "<-" + std::to_string(l->in) + ")";
    }
    if (std::holds_alternative<ReLU>(spec)) return "relu";
    if (const MaxPool* p = std::get_if<MaxPool>(&spec)) {
        return "maxpool(" + std::to_string(p->k) + ",s" + std::to_string(p->stride) + ")";
    }
    return "flatten";
}

enum class Provenance { original, disassembled, assembled };

inline std::string provenance_str(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::disassembled: return "disassembled";
        case Provenance::assembled: return "assembled";
    }
    return "original";
}

struct ModelMeta {
    std::string name = "model";
    std::uint64_t seed = 0;
    Provenance provenance = Provenance::original;
};

// Checks adjacent parameter layers for dimension compatibility. Spatial
// extents depend on the input and are verified at forward time; this walk
// catches every channel-level mismatch and names the offending layer pair.
inline void validate_layers(const std::vector<LayerSpec>& layers) {
    if (layers.empty()) throw Error("model: empty layer list");
    if (!std::holds_alternative<Linear>(layers.back())) {
        throw Error("model: last layer must be linear, got " + layer_str(layers.back()));
    }
    std::size_t channels = 0;      // output channels of the last conv seen
    bool seen_conv = false;
    bool flattened = false;
    std::size_t linear_width = 0;  // output width of the last linear seen
    bool seen_linear = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        const std::string here = "layer " + std::to_string(i) + " " + layer_str(spec);
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            if (flattened || seen_linear) {
                throw Error("model: " + here + " cannot follow flatten/linear");
            }
            if (c->out_channels == 0 || c->in_channels == 0 || c->kh == 0 || c->kw == 0 ||
                c->stride == 0) {
                throw Error("model: " + here + " has a zero dimension");
            }
            if (seen_conv && c->in_channels != channels) {
                throw Error("model: " + here + " expects " + std::to_string(c->in_channels) +
                            " input channels but the preceding conv stack produces " +
                            std::to_string(channels));
            }
            channels = c->out_channels;
            seen_conv = true;
        } else if (const Linear* l = std::get_if<Linear>(&spec)) {
            if (l->out == 0 || l->in == 0) throw Error("model: " + here + " has a zero dimension");
            if (seen_linear) {
                if (l->in != linear_width) {
                    throw Error("model: " + here + " expects " + std::to_string(l->in) +
                                " inputs but the preceding linear produces " +
                                std::to_string(linear_width));
                }
            } else if (seen_conv) {
                if (!flattened) {
                    throw Error("model: " + here + " follows a conv stack without a flatten layer");
                }
                if (l->in % channels != 0) {
                    throw Error("model: " + here + " input width " + std::to_string(l->in) +
                                " is not a multiple of the " + std::to_string(channels) +
                                " flattened channels");
                }
            }
            linear_width = l->out;
            seen_linear = true;
        } else if (std::holds_alternative<MaxPool>(spec)) {
            if (flattened || seen_linear) throw Error("model: " + here + " cannot follow flatten/linear");
        } else if (std::holds_alternative<Flatten>(spec)) {
            if (flattened) throw Error("model: " + here + " duplicates an earlier flatten");
            flattened = true;
        } else if (std::holds_alternative<ReLU>(spec)) {
            if (i + 1 == layers.size()) throw Error("model: trailing relu after the final linear");
        }
    }
}

template <typename S>
struct Model {
    std::vector<LayerSpec> layers;
    std::vector<Tensor<S>> weights;  // one entry per parameter layer, in layer order
    std::vector<Tensor<S>> biases;
    std::vector<int> class_map;      // output index -> retained class label
    ModelMeta meta;

    std::size_t param_layer_count() const { return weights.size(); }

    // Positions of the parameter layers inside `layers`.
    std::vector<std::size_t> param_layer_positions() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (is_param_layer(layers[i])) out.push_back(i);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            total += weights[i].size() + biases[i].size();
        }
        return total;
    }

    int output_index_of(int label) const {
        for (std::size_t i = 0; i < class_map.size(); ++i) {
            if (class_map[i] == label) return static_cast<int>(i);
        }
        return -1;
    }

    template <typename T>
    Model<T> cast() const {
        Model<T> out;
        out.layers = layers;
        out.class_map = class_map;
        out.meta = meta;
        out.weights.reserve(weights.size());
        out.biases.reserve(biases.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.weights.push_back(weights[i].template cast<T>());
            out.biases.push_back(biases[i].template cast<T>());
        }
        return out;
    }
};

// Full structural check: specs valid, parameter tensors shaped per spec,
// class map length equals the final linear width.
template <typename S>
void validate_model(const Model<S>& model) {
    validate_layers(model.layers);
    const std::vector<std::size_t> positions = model.param_layer_positions();
    if (positions.size() != model.weights.size() || positions.size() != model.biases.size()) {
        throw Error("model: " + std::to_string(positions.size()) + " parameter layers but " +
                    std::to_string(model.weights.size()) + " weight tensors");
    }
    for (std::size_t p = 0; p < positions.size(); ++p) {
        const LayerSpec& spec = model.layers[positions[p]];
        Shape want_w, want_b;
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            want_w = {c->out_channels, c->in_channels, c->kh, c->kw};
            want_b = {c->out_channels};
        } else {
            const Linear& l = std::get<Linear>(spec);
            want_w = {l.out, l.in};
            want_b = {l.out};
        }
        if (model.weights[p].shape() != want_w) {
            throw Error("model: weights of " + layer_str(spec) + " have shape " +
                        shape_str(model.weights[p].shape()) + ", expected " + shape_str(want_w));
        }
        if (model.biases[p].shape() != want_b) {
            throw Error("model: bias of " + layer_str(spec) + " has shape " +
                        shape_str(model.biases[p].shape()) + ", expected " + shape_str(want_b));
        }
    }
    const Linear& last = std::get<Linear>(model.layers.back());
    if (model.class_map.size() != last.out) {
        throw Error("model: class map has " + std::to_string(model.class_map.size()) +
                    " entries but the final linear has " + std::to_string(last.out) + " outputs");
    }
    for (std::size_t i = 0; i < model.class_map.size(); ++i) {
        for (std::size_t j = i + 1; j < model.class_map.size(); ++j) {
            if (model.class_map[i] == model.class_map[j]) {
                throw Error("model: duplicate class label " + std::to_string(model.class_map[i]) +
                            " in class map");
            }
        }
    }
}

namespace detail {

// Seeded uniform draws with fixed arithmetic so builds are reproducible
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next() {
        // xorshift* variant; splitmix-style scramble of a 64-bit counter
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
};

}  // namespace detail

// Fan-in-scaled uniform initialization (bound = 1/sqrt(fan_in)), zero biases.
template <typename S>
Model<S> build(std::vector<LayerSpec> layers, std::uint64_t seed,
               std::vector<int> class_labels = {}) {
    validate_layers(layers);
    Model<S> model;
    model.layers = std::move(layers);
    model.meta.seed = seed;
    detail::Rng rng(seed);
    for (const LayerSpec& spec : model.layers) {
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels * c->kh * c->kw));
            Tensor<S> w(Shape{c->out_channels, c->in_channels, c->kh, c->kw});
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = static_cast<S>(rng.uniform(-bound, bound));
            }
            model.weights.push_back(std::move(w));
            model.biases.push_back(Tensor<S>(Shape{c->out_channels}));
        } else if (const Linear* l = std::get_if<Linear>(&spec)) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l->in));
            Tensor<S> w(Shape{l->out, l->in});
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = static_cast<S>(rng.uniform(-bound, bound));
            }
            model.weights.push_back(std::move(w));
            model.biases.push_back(Tensor<S>(Shape{l->out}));
        }
    }
    const Linear& last = std::get<Linear>(model.layers.back());
    if (class_labels.empty()) {
        for (std::size_t i = 0; i < last.out; ++i) model.class_map.push_back(static_cast<int>(i));
    } else {
        if (class_labels.size() != last.out) {
            throw Error("build: " + std::to_string(class_labels.size()) +
                        " class labels for a final linear with " + std::to_string(last.out) +
                        " outputs");
        }
        model.class_map = std::move(class_labels);
    }
    validate_model(model);
    return model;
}

// Output-unit count (filters or linear outputs) of one parameter layer.
template <typename S>
std::size_t param_layer_width(const Model<S>& model, std::size_t param_index) {
    const LayerSpec& spec = model.layers.at(model.param_layer_positions().at(param_index));
    if (const Conv* c = std::get_if<Conv>(&spec)) return c->out_channels;
    return std::get<Linear>(spec).out;
}

// Output shape of one layer applied to `in`; throws on mismatch.
inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
    if (const Conv* c = std::get_if<Conv>(&spec)) {
        if (in.size() != 3 || in[0] != c->in_channels) {
            throw ShapeError("conv expects [" + std::to_string(c->in_channels) +
                             ",H,W] input, got " + shape_str(in));
        }
        const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>(in[1] + 2 * c->pad) -
                                  static_cast<std::ptrdiff_t>(c->kh);
        const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>(in[2] + 2 * c->pad) -
                                  static_cast<std::ptrdiff_t>(c->kw);
        if (oh < 0 || ow < 0) {
            throw ShapeError("conv kernel does not fit input " + shape_str(in));
        }
        return {c->out_channels, static_cast<std::size_t>(oh) / c->stride + 1,
                static_cast<std::size_t>(ow) / c->stride + 1};
    }
    if (const Linear* l = std::get_if<Linear>(&spec)) {
        if (in.size() != 1 || in[0] != l->in) {
            throw ShapeError("linear expects [" + std::to_string(l->in) + "] input, got " +
                             shape_str(in));
        }
        return {l->out};
    }
    if (const MaxPool* p = std::get_if<MaxPool>(&spec)) {
        if (in.size() != 3 || in[1] < p->k || in[2] < p->k) {
            throw ShapeError("maxpool window does not fit input " + shape_str(in));
        }
        return {in[0], (in[1] - p->k) / p->stride + 1, (in[2] - p->k) / p->stride + 1};
    }
    if (std::holds_alternative<Flatten>(spec)) {
        return {shape_volume(in)};
    }
    return in;  // relu
}

// Per-layer output shapes for a given input shape (index i = output of layer i).
template <typename S>
std::vector<Shape> infer_shapes(const Model<S>& model, const Shape& input_shape) {
    std::vector<Shape> out;
    Shape cur = input_shape;
    for (const LayerSpec& spec : model.layers) {
        cur = layer_output_shape(spec, cur);
        out.push_back(cur);
    }
    return out;
}

template <typename S>
Tensor<S> apply_layer(const Model<S>& model, std::size_t layer_index, const Tensor<S>& x) {
    const LayerSpec& spec = model.layers.at(layer_index);
    std::size_t p = 0;
    for (std::size_t i = 0; i < layer_index; ++i) {
        if (is_param_layer(model.layers[i])) ++p;
    }
    if (const Conv* c = std::get_if<Conv>(&spec)) {
        return conv2d(x, model.weights[p], model.biases[p], c->stride, c->pad);
    }
    if (std::holds_alternative<Linear>(spec)) {
        return linear(x, model.weights[p], model.biases[p]);
    }
    if (const MaxPool* mp = std::get_if<MaxPool>(&spec)) {
        return maxpool(x, mp->k, mp->stride);
    }
    if (std::holds_alternative<Flatten>(spec)) return flatten(x);
    return relu(x);
}

// Applies layers [from, end) to x and returns the final linear output.
template <typename S>
Tensor<S> forward_from(const Model<S>& model, std::size_t from_layer, const Tensor<S>& x) {
    Tensor<S> cur = x;
    std::size_t p = 0;
    for (std::size_t i = 0; i < from_layer; ++i) {
        if (is_param_layer(model.layers[i])) ++p;
    }
    for (std::size_t i = from_layer; i < model.layers.size(); ++i) {
        const LayerSpec& spec = model.layers[i];
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            cur = conv2d(cur, model.weights[p], model.biases[p], c->stride, c->pad);
            ++p;
        } else if (std::holds_alternative<Linear>(spec)) {
            cur = linear(cur, model.weights[p], model.biases[p]);
            ++p;
        } else if (const MaxPool* mp = std::get_if<MaxPool>(&spec)) {
            cur = maxpool(cur, mp->k, mp->stride);
        } else if (std::holds_alternative<Flatten>(spec)) {
            cur = flatten(cur);
        } else {
            cur = relu(cur);
        }
    }
    return cur;
}

template <typename S>
Tensor<S> forward_logits(const Model<S>& model, const Tensor<S>& input) {
    return forward_from(model, 0, input);
}

template <typename S>
struct ForwardTrace {
    // One feature tensor per parameter layer: the post-activation maps of a
    // conv layer, the post-activation values of a linear layer, and the raw
    // logits for the final linear.
    std::vector<Tensor<S>> features;
    Tensor<S> probabilities;
};

// A recorded forward pass plus the node ids needed by training/attribution.
template <typename S>
struct TracedForward {
    Tape<S> tape;
    std::vector<int> feature_nodes;  // per parameter layer
    std::vector<int> weight_nodes;   // per parameter layer
    std::vector<int> bias_nodes;     // per parameter layer
    int input_node = -1;
    int logits_node = -1;
    int prob_node = -1;
};

template <typename S>
TracedForward<S> record_forward(const Model<S>& model, const Tensor<S>& input) {
    TracedForward<S> tf;
    std::vector<int> per_layer_node(model.layers.size(), -1);
    int cur = tf.tape.input(input);
    tf.input_node = cur;
    std::size_t p = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& spec = model.layers[i];
        if (const Conv* c = std::get_if<Conv>(&spec)) {
            const int w = tf.tape.param(model.weights[p]);
            const int b = tf.tape.param(model.biases[p]);
            cur = tf.tape.conv2d(cur, w, b, c->stride, c->pad);
            tf.weight_nodes.push_back(w);
            tf.bias_nodes.push_back(b);
            ++p;
        } else if (std::holds_alternative<Linear>(spec)) {
            const int w = tf.tape.param(model.weights[p]);
            const int b = tf.tape.param(model.biases[p]);
            cur = tf.tape.linear(cur, w, b);
            tf.weight_nodes.push_back(w);
            tf.bias_nodes.push_back(b);
            ++p;
        } else if (const MaxPool* mp = std::get_if<MaxPool>(&spec)) {
            cur = tf.tape.maxpool(cur, mp->k, mp->stride);
        } else if (std::holds_alternative<Flatten>(spec)) {
            cur = tf.tape.flatten(cur);
        } else {
            cur = tf.tape.relu(cur);
        }
        per_layer_node[i] = cur;
    }
    tf.logits_node = cur;
    tf.prob_node = tf.tape.softmax(cur);
    // Feature slot of a parameter layer: the following relu's node when one
    // immediately follows, otherwise the layer's own node (Eq.-style
    // post-activation feature maps; the final linear contributes raw logits).
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!is_param_layer(model.layers[i])) continue;
        int slot = per_layer_node[i];
        if (i + 1 < model.layers.size() && std::holds_alternative<ReLU>(model.layers[i + 1])) {
            slot = per_layer_node[i + 1];
        }
        tf.feature_nodes.push_back(slot);
        tf.tape.mark_feature(slot);
    }
    return tf;
}

// Spec-layer position whose output is parameter layer p's feature slot.
template <typename S>
std::size_t feature_layer_position(const Model<S>& model, std::size_t param_index) {
    const std::vector<std::size_t> positions = model.param_layer_positions();
    std::size_t pos = positions.at(param_index);
    if (pos + 1 < model.layers.size() && std::holds_alternative<ReLU>(model.layers[pos + 1])) {
        return pos + 1;
    }
    return pos;
}

template <typename S>
ForwardTrace<S> forward_trace(const Model<S>& model, const Tensor<S>& input) {
    TracedForward<S> tf = record_forward(model, input);
    ForwardTrace<S> trace;
    trace.features.reserve(tf.feature_nodes.size());
    for (int id : tf.feature_nodes) trace.features.push_back(tf.tape.value(id));
    trace.probabilities = tf.tape.value(tf.prob_node);
    return trace;
}

}  // namespace routekit
