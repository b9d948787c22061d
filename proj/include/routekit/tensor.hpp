#pragma once

// Dense row-major tensors and the raw forward kernels (conv2d, linear,
// relu, maxpool, softmax). All reductions run in a fixed canonical order
// so results are bit-reproducible across runs and thread counts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace routekit {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, S fill = S(0))
        : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
        check_extents();
    }

    Tensor(Shape shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_volume(shape_)) {
            throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor vector_of(std::vector<S> values) {
        Shape s{values.size()};
        return Tensor(std::move(s), std::move(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    const std::vector<S>& data() const { return data_; }
    std::vector<S>& data() { return data_; }

    S operator[](std::size_t flat) const { return data_[flat]; }
    S& operator[](std::size_t flat) { return data_[flat]; }

    S at3(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    S& at3(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    bool all_finite() const {
        for (S v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(Shape new_shape) const {
        if (shape_volume(new_shape) != data_.size()) {
            throw ShapeError("reshape: volume of " + shape_str(new_shape) +
                             " does not match tensor of " + shape_str(shape_));
        }
        return Tensor(std::move(new_shape), data_);
    }

    template <typename T>
    Tensor<T> cast() const {
        std::vector<T> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return Tensor<T>(shape_, std::move(out));
    }

private:
    void check_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<S> data_;
};

// out[o,i,j] = bias[o] + sum_{c,u,v} input[c, i*stride+u-pad, j*stride+v-pad] * weights[o,c,u,v]
// with out-of-bounds input treated as zero.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weights,
                 const Tensor<S>& bias, std::size_t stride, std::size_t pad) {
    if (input.rank() != 3) {
        throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
    }
    if (weights.rank() != 4) {
        throw ShapeError("conv2d: weights must be [O,C,kh,kw], got " + shape_str(weights.shape()));
    }
    const std::size_t cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::size_t cout = weights.extent(0), kc = weights.extent(1);
    const std::size_t kh = weights.extent(2), kw = weights.extent(3);
    if (kc != cin) {
        throw ShapeError("conv2d: input has " + std::to_string(cin) +
                         " channels but each filter has " + std::to_string(kc) + " kernels");
    }
    if (bias.rank() != 1 || bias.extent(0) != cout) {
        throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "], got " +
                         shape_str(bias.shape()));
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::ptrdiff_t oh_n = static_cast<std::ptrdiff_t>(h + 2 * pad) - static_cast<std::ptrdiff_t>(kh);
    const std::ptrdiff_t ow_n = static_cast<std::ptrdiff_t>(w + 2 * pad) - static_cast<std::ptrdiff_t>(kw);
    if (oh_n < 0 || ow_n < 0) {
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " does not fit input " + shape_str(input.shape()) +
                         " with pad " + std::to_string(pad));
    }
    const std::size_t oh = static_cast<std::size_t>(oh_n) / stride + 1;
    const std::size_t ow = static_cast<std::size_t>(ow_n) / stride + 1;

    Tensor<S> out(Shape{cout, oh, ow});
    const S* in = input.data().data();
    const S* wt = weights.data().data();
    S* op = out.data().data();
    for (std::size_t o = 0; o < cout; ++o) {
        const S b = bias[o];
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                S acc = b;
                for (std::size_t c = 0; c < cin; ++c) {
                    const S* in_c = in + c * h * w;
                    const S* wt_oc = wt + ((o * cin + c) * kh) * kw;
                    for (std::size_t u = 0; u < kh; ++u) {
                        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) -
                                                 static_cast<std::ptrdiff_t>(pad);
                        if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
                        const S* in_row = in_c + static_cast<std::size_t>(r) * w;
                        const S* wt_row = wt_oc + u * kw;
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j * stride + v) -
                                                       static_cast<std::ptrdiff_t>(pad);
                            if (col < 0 || col >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += in_row[static_cast<std::size_t>(col)] * wt_row[v];
                        }
                    }
                }
                op[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    return out;
}

// out[j] = bias[j] + sum_i weights[j,i] * input[i]
template <typename S>
Tensor<S> linear(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>& bias) {
    if (input.rank() != 1) {
        throw ShapeError("linear: input must be rank-1, got " + shape_str(input.shape()));
    }
    if (weights.rank() != 2) {
        throw ShapeError("linear: weights must be [out,in], got " + shape_str(weights.shape()));
    }
    const std::size_t dout = weights.extent(0), din = weights.extent(1);
    if (input.extent(0) != din) {
        throw ShapeError("linear: input length " + std::to_string(input.extent(0)) +
                         " does not match weight columns " + std::to_string(din));
    }
    if (bias.rank() != 1 || bias.extent(0) != dout) {
        throw ShapeError("linear: bias must be [" + std::to_string(dout) + "], got " +
                         shape_str(bias.shape()));
    }
    Tensor<S> out(Shape{dout});
    const S* x = input.data().data();
    const S* wt = weights.data().data();
    for (std::size_t j = 0; j < dout; ++j) {
        S acc = bias[j];
        const S* row = wt + j * din;
        for (std::size_t i = 0; i < din; ++i) acc += row[i] * x[i];
        out[j] = acc;
    }
    return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > S(0) ? x[i] : S(0);
    return out;
}

// Channelwise max over k-by-k windows; the window must fit at least once.
template <typename S>
Tensor<S> maxpool(const Tensor<S>& x, std::size_t k, std::size_t stride) {
    if (x.rank() != 3) {
        throw ShapeError("maxpool: input must be [C,H,W], got " + shape_str(x.shape()));
    }
    if (k == 0 || stride == 0) throw ShapeError("maxpool: window and stride must be positive");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (k > h || k > w) {
        throw ShapeError("maxpool: window " + std::to_string(k) + " larger than input " +
                         shape_str(x.shape()));
    }
    const std::size_t oh = (h - k) / stride + 1;
    const std::size_t ow = (w - k) / stride + 1;
    Tensor<S> out(Shape{c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                S best = x.at3(ch, i * stride, j * stride);
                for (std::size_t u = 0; u < k; ++u) {
                    for (std::size_t v = 0; v < k; ++v) {
                        const S val = x.at3(ch, i * stride + u, j * stride + v);
                        if (val > best) best = val;
                    }
                }
                out.at3(ch, i, j) = best;
            }
        }
    }
    return out;
}

template <typename S>
Tensor<S> flatten(const Tensor<S>& x) {
    return x.reshaped(Shape{x.size()});
}

// Max-subtracted softmax; outputs are positive and sum to 1.
template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw ShapeError("softmax: input must be a nonempty rank-1 tensor, got " +
                         shape_str(logits.shape()));
    }
    const S peak = *std::max_element(logits.data().begin(), logits.data().end());
    Tensor<S> out(logits.shape());
    S total = S(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= total;
    return out;
}

}  // namespace routekit
