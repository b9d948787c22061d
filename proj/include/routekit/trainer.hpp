#pragma once

// SGD training with momentum and per-epoch cosine-annealed learning rate,
// cross-entropy loss, seeded shuffling, and argmax evaluation through the
// model's class map.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "routekit/dataset.hpp"
#include "routekit/network.hpp"
#include "routekit/parallel.hpp"

namespace routekit {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int epochs = 5;
    int batch_size = 128;
    int cosine_T_max = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr < 0) throw Error("train config: lr must be nonnegative");
        if (momentum < 0 || momentum >= 1) throw Error("train config: momentum must be in [0,1)");
        if (epochs < 1) throw Error("train config: epochs must be >= 1");
        if (batch_size < 1) throw Error("train config: batch size must be >= 1");
        if (cosine_T_max < 1) throw Error("train config: cosine period must be >= 1");
    }
};

struct EpochStats {
    int epoch = 0;       // 1-based
    double loss = 0.0;   // mean cross-entropy over the epoch
    double accuracy = 0.0;
};

namespace detail {

template <typename S>
void require_labels_covered(const Model<S>& model, const Dataset& data) {
    for (int label : data.label_universe) {
        if (model.output_index_of(label) < 0) {
            throw Error("label " + std::to_string(label) + " is outside the model's class map");
        }
    }
}

inline double cosine_lr(double lr0, int epoch, int t_max) {
    return 0.5 * lr0 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / t_max));
}

}  // namespace detail

// Argmax index with ties broken toward the lowest output index.
template <typename S>
std::size_t argmax_lowest(const Tensor<S>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

template <typename S>
double evaluate(const Model<S>& model, const Dataset& data, int threads = 1) {
    if (data.size() == 0) throw Error("evaluate: empty dataset");
    detail::require_labels_covered(model, data);
    std::vector<unsigned char> correct(data.size(), 0);
    parallel_for(data.size(), threads, [&](std::size_t i) {
        const Tensor<S> logits = forward_logits(model, data.images[i].template cast<S>());
        const std::size_t pick = argmax_lowest(logits);
        correct[i] = model.class_map[pick] == data.labels[i] ? 1 : 0;
    });
    std::size_t hits = 0;
    for (unsigned char c : correct) hits += c;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// One SGD run over `data`; mutates the model in place and returns per-epoch
// history. Deterministic for a fixed seed: shuffling, batching and gradient
// accumulation all run in a fixed order.
template <typename S>
std::vector<EpochStats> train(Model<S>& model, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw Error("train: empty dataset");
    detail::require_labels_covered(model, data);

    const std::size_t n = data.size();
    const std::size_t layers = model.param_layer_count();
    std::vector<Tensor<S>> vel_w, vel_b, grad_w, grad_b;
    for (std::size_t p = 0; p < layers; ++p) {
        vel_w.emplace_back(model.weights[p].shape());
        vel_b.emplace_back(model.biases[p].shape());
        grad_w.emplace_back(model.weights[p].shape());
        grad_b.emplace_back(model.biases[p].shape());
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    detail::Rng rng(cfg.seed ^ 0x5eed0fda7aULL);

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with our own rng keeps the permutation identical
        // across standard libraries.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = rng.index(i);
            std::swap(order[i - 1], order[j]);
        }
        const double lr = detail::cosine_lr(cfg.lr, epoch, cfg.cosine_T_max);
        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t batch = stop - start;
            for (std::size_t p = 0; p < layers; ++p) {
                std::fill(grad_w[p].data().begin(), grad_w[p].data().end(), S(0));
                std::fill(grad_b[p].data().begin(), grad_b[p].data().end(), S(0));
            }
            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t idx = order[bi];
                const Tensor<S> image = data.images[idx].template cast<S>();
                const TracedForward<S> tf = record_forward(model, image);
                const Tensor<S>& probs = tf.tape.value(tf.prob_node);
                const std::size_t target =
                    static_cast<std::size_t>(model.output_index_of(data.labels[idx]));
                const double p_true = std::max(static_cast<double>(probs[target]), 1e-30);
                loss_sum += -std::log(p_true);
                if (model.class_map[argmax_lowest(probs)] == data.labels[idx]) ++correct;
                const GradientStore<S> grads = tf.tape.backward_cross_entropy(target);
                for (std::size_t p = 0; p < layers; ++p) {
                    const Tensor<S>& gw = grads.grad(tf.weight_nodes[p]);
                    const Tensor<S>& gb = grads.grad(tf.bias_nodes[p]);
                    for (std::size_t k = 0; k < gw.size(); ++k) grad_w[p][k] += gw[k];
                    for (std::size_t k = 0; k < gb.size(); ++k) grad_b[p][k] += gb[k];
                }
            }
            const S scale = S(1) / static_cast<S>(batch);
            for (std::size_t p = 0; p < layers; ++p) {
                for (std::size_t k = 0; k < grad_w[p].size(); ++k) {
                    vel_w[p][k] = static_cast<S>(cfg.momentum) * vel_w[p][k] + grad_w[p][k] * scale;
                    model.weights[p][k] -= static_cast<S>(lr) * vel_w[p][k];
                }
                for (std::size_t k = 0; k < grad_b[p].size(); ++k) {
                    vel_b[p][k] = static_cast<S>(cfg.momentum) * vel_b[p][k] + grad_b[p][k] * scale;
                    model.biases[p][k] -= static_cast<S>(lr) * vel_b[p][k];
                }
            }
        }
        history.push_back(EpochStats{epoch + 1, loss_sum / static_cast<double>(n),
                                     static_cast<double>(correct) / static_cast<double>(n)});
    }
    return history;
}

// One-epoch fine-tune at a small learning rate; everything else as train().
template <typename S>
std::vector<EpochStats> fine_tune(Model<S>& model, const Dataset& data, double lr = 0.001,
                                  std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.lr = lr;
    cfg.epochs = 1;
    cfg.seed = seed;
    return train(model, data, cfg);
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<EpochStats>& history) {
    std::ofstream f(path);
    if (!f) throw Error("history: cannot write " + path.string());
    f << "epoch,loss,accuracy\n";
    char line[96];
    for (const EpochStats& e : history) {
        std::snprintf(line, sizeof line, "%d,%.6f,%.6f\n", e.epoch, e.loss, e.accuracy);
        f << line;
    }
}

}  // namespace routekit
