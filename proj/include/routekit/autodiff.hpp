#pragma once

// Recording forward pass and reverse-mode differentiation. A Tape holds one
// forward computation ending in softmax; backward() fills a gradient for
// every recorded node (inputs, parameters and all intermediate feature maps)
// in a single reverse sweep.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "routekit/tensor.hpp"

namespace routekit {

enum class OpKind { input, param, conv2d, linear, relu, maxpool, flatten, softmax };

// Whether backward seeds the softmax output (class probability) or the
// softmax input (raw class logit).
enum class GradTarget { probability, logit };

template <typename S>
struct TapeNode {
    OpKind kind = OpKind::input;
    std::array<int, 3> args{-1, -1, -1};  // operand node ids: x, weights, bias
    Tensor<S> value;                      // saved output activation
    std::size_t stride = 0;
    std::size_t pad = 0;
    std::size_t window = 0;
    Shape arg_shape;                      // pre-flatten shape, for unflattening grads
};

template <typename S>
class GradientStore {
public:
    explicit GradientStore(std::size_t node_count) : grads_(node_count) {}

    const Tensor<S>& grad(int node_id) const { return grads_.at(static_cast<std::size_t>(node_id)); }
    Tensor<S>& grad(int node_id) { return grads_.at(static_cast<std::size_t>(node_id)); }
    std::size_t size() const { return grads_.size(); }

private:
    std::vector<Tensor<S>> grads_;
};

template <typename S>
class Tape {
public:
    int input(Tensor<S> value) { return push(OpKind::input, {-1, -1, -1}, std::move(value)); }
    int param(Tensor<S> value) { return push(OpKind::param, {-1, -1, -1}, std::move(value)); }

    int conv2d(int x, int w, int b, std::size_t stride, std::size_t pad) {
        Tensor<S> out = routekit::conv2d(value(x), value(w), value(b), stride, pad);
        int id = push(OpKind::conv2d, {x, w, b}, std::move(out));
        nodes_.back().stride = stride;
        nodes_.back().pad = pad;
        return id;
    }

    int linear(int x, int w, int b) {
        Tensor<S> out = routekit::linear(value(x), value(w), value(b));
        return push(OpKind::linear, {x, w, b}, std::move(out));
    }

    int relu(int x) { return push(OpKind::relu, {x, -1, -1}, routekit::relu(value(x))); }

    int maxpool(int x, std::size_t k, std::size_t stride) {
        Tensor<S> out = routekit::maxpool(value(x), k, stride);
        int id = push(OpKind::maxpool, {x, -1, -1}, std::move(out));
        nodes_.back().window = k;
        nodes_.back().stride = stride;
        return id;
    }

    int flatten(int x) {
        Shape pre = value(x).shape();
        int id = push(OpKind::flatten, {x, -1, -1}, routekit::flatten(value(x)));
        nodes_.back().arg_shape = std::move(pre);
        return id;
    }

    int softmax(int z) {
        int id = push(OpKind::softmax, {z, -1, -1}, routekit::softmax(value(z)));
        softmax_node_ = id;
        return id;
    }

    void mark_feature(int id) { feature_slots_.push_back(id); }
    const std::vector<int>& feature_slots() const { return feature_slots_; }

    const Tensor<S>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    const TapeNode<S>& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    std::size_t node_count() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    int softmax_node() const { return softmax_node_; }

    // Reverse sweep from a one-hot seed on the class probability (or logit).
    GradientStore<S> backward(std::size_t class_index, GradTarget target = GradTarget::probability) const {
        require_terminal();
        const TapeNode<S>& sm = nodes_.back();
        const std::size_t n = sm.value.size();
        if (class_index >= n) {
            throw Error("backward: class index " + std::to_string(class_index) +
                        " out of range for " + std::to_string(n) + " outputs");
        }
        GradientStore<S> store = zero_store();
        if (target == GradTarget::probability) {
            store.grad(static_cast<int>(nodes_.size()) - 1)[class_index] = S(1);
        } else {
            store.grad(sm.args[0])[class_index] = S(1);
        }
        sweep(store);
        return store;
    }

    // Seeds d(cross-entropy)/d(logits) = p - onehot(label) directly below the
    // softmax node; the usual stable formulation for training.
    GradientStore<S> backward_cross_entropy(std::size_t label_index) const {
        require_terminal();
        const TapeNode<S>& sm = nodes_.back();
        const std::size_t n = sm.value.size();
        if (label_index >= n) {
            throw Error("backward: label index " + std::to_string(label_index) +
                        " out of range for " + std::to_string(n) + " outputs");
        }
        GradientStore<S> store = zero_store();
        Tensor<S>& gz = store.grad(sm.args[0]);
        for (std::size_t i = 0; i < n; ++i) gz[i] = sm.value[i];
        gz[label_index] -= S(1);
        sweep(store);
        return store;
    }

private:
    int push(OpKind kind, std::array<int, 3> args, Tensor<S> value) {
        for (int a : args) {
            if (a >= static_cast<int>(nodes_.size())) {
                throw Error("tape: operand recorded after its user");
            }
        }
        TapeNode<S> node;
        node.kind = kind;
        node.args = args;
        node.value = std::move(value);
        nodes_.push_back(std::move(node));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void require_terminal() const {
        if (nodes_.empty()) throw Error("backward: empty tape");
        if (nodes_.back().kind != OpKind::softmax) {
            throw Error("backward: tape must end in softmax");
        }
    }

    GradientStore<S> zero_store() const {
        GradientStore<S> store(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            store.grad(static_cast<int>(i)) = Tensor<S>(nodes_[i].value.shape());
        }
        return store;
    }

    void sweep(GradientStore<S>& store) const {
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            const TapeNode<S>& nd = nodes_[static_cast<std::size_t>(id)];
            const Tensor<S>& gy = store.grad(id);
            switch (nd.kind) {
                case OpKind::input:
                case OpKind::param:
                    break;
                case OpKind::softmax:
                    backward_softmax(nd, gy, store.grad(nd.args[0]));
                    break;
                case OpKind::relu: {
                    const Tensor<S>& x = nodes_[nd.args[0]].value;
                    Tensor<S>& gx = store.grad(nd.args[0]);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        if (x[i] > S(0)) gx[i] += gy[i];
                    }
                    break;
                }
                case OpKind::flatten: {
                    Tensor<S>& gx = store.grad(nd.args[0]);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
                    break;
                }
                case OpKind::maxpool:
                    backward_maxpool(nd, gy, store.grad(nd.args[0]));
                    break;
                case OpKind::linear:
                    backward_linear(nd, gy, store.grad(nd.args[0]), store.grad(nd.args[1]),
                                    store.grad(nd.args[2]));
                    break;
                case OpKind::conv2d:
                    backward_conv2d(nd, gy, store.grad(nd.args[0]), store.grad(nd.args[1]),
                                    store.grad(nd.args[2]));
                    break;
            }
        }
    }

    void backward_softmax(const TapeNode<S>& nd, const Tensor<S>& gy, Tensor<S>& gz) const {
        // dz = p .* (g - <g,p>)
        const Tensor<S>& p = nd.value;
        S dot = S(0);
        for (std::size_t i = 0; i < p.size(); ++i) dot += gy[i] * p[i];
        for (std::size_t i = 0; i < p.size(); ++i) gz[i] += p[i] * (gy[i] - dot);
    }

    void backward_maxpool(const TapeNode<S>& nd, const Tensor<S>& gy, Tensor<S>& gx) const {
        const Tensor<S>& x = nodes_[nd.args[0]].value;
        const std::size_t c = x.extent(0), k = nd.window, stride = nd.stride;
        const std::size_t oh = nd.value.extent(1), ow = nd.value.extent(2);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    // first maximum in scan order wins ties
                    std::size_t bu = 0, bv = 0;
                    S best = x.at3(ch, i * stride, j * stride);
                    for (std::size_t u = 0; u < k; ++u) {
                        for (std::size_t v = 0; v < k; ++v) {
                            const S val = x.at3(ch, i * stride + u, j * stride + v);
                            if (val > best) {
                                best = val;
                                bu = u;
                                bv = v;
                            }
                        }
                    }
                    gx.at3(ch, i * stride + bu, j * stride + bv) += gy.at3(ch, i, j);
                }
            }
        }
    }

    void backward_linear(const TapeNode<S>& nd, const Tensor<S>& gy, Tensor<S>& gx,
                         Tensor<S>& gw, Tensor<S>& gb) const {
        const Tensor<S>& x = nodes_[nd.args[0]].value;
        const Tensor<S>& w = nodes_[nd.args[1]].value;
        const std::size_t dout = w.extent(0), din = w.extent(1);
        const S* xp = x.data().data();
        const S* wp = w.data().data();
        for (std::size_t j = 0; j < dout; ++j) {
            const S g = gy[j];
            if (g == S(0)) continue;
            gb[j] += g;
            S* gwrow = gw.data().data() + j * din;
            const S* wrow = wp + j * din;
            S* gxp = gx.data().data();
            for (std::size_t i = 0; i < din; ++i) {
                gwrow[i] += g * xp[i];
                gxp[i] += g * wrow[i];
            }
        }
    }

    void backward_conv2d(const TapeNode<S>& nd, const Tensor<S>& gy, Tensor<S>& gx,
                         Tensor<S>& gw, Tensor<S>& gb) const {
        const Tensor<S>& x = nodes_[nd.args[0]].value;
        const Tensor<S>& w = nodes_[nd.args[1]].value;
        const std::size_t cin = x.extent(0), h = x.extent(1), wid = x.extent(2);
        const std::size_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
        const std::size_t oh = nd.value.extent(1), ow = nd.value.extent(2);
        const std::size_t stride = nd.stride, pad = nd.pad;
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    const S g = gy.at3(o, i, j);
                    if (g == S(0)) continue;
                    gb[o] += g;
                    for (std::size_t c = 0; c < cin; ++c) {
                        for (std::size_t u = 0; u < kh; ++u) {
                            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) -
                                                     static_cast<std::ptrdiff_t>(pad);
                            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t v = 0; v < kw; ++v) {
                                const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j * stride + v) -
                                                           static_cast<std::ptrdiff_t>(pad);
                                if (col < 0 || col >= static_cast<std::ptrdiff_t>(wid)) continue;
                                const std::size_t xi =
                                    (c * h + static_cast<std::size_t>(r)) * wid + static_cast<std::size_t>(col);
                                const std::size_t wi = ((o * cin + c) * kh + u) * kw + v;
                                gw[wi] += g * x[xi];
                                gx[xi] += g * w[wi];
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<TapeNode<S>> nodes_;
    std::vector<int> feature_slots_;
    int softmax_node_ = -1;
};

}  // namespace routekit
