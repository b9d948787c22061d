#include <catch2/catch_amalgamated.hpp>

#include "routekit/digits.hpp"
#include "routekit/trainer.hpp"

using namespace routekit;

namespace {

// Minimal 2-class toy: one-hot 1x1x2 "images" mapped through flatten+linear.
Dataset onehot_data(int label_a, int label_b, std::size_t copies) {
    Dataset data;
    for (std::size_t i = 0; i < copies; ++i) {
        data.images.push_back(Tensor<float>(Shape{1, 1, 2}, {1, 0}));
        data.labels.push_back(label_a);
        data.images.push_back(Tensor<float>(Shape{1, 1, 2}, {0, 1}));
        data.labels.push_back(label_b);
    }
    data.label_universe = {std::min(label_a, label_b), std::max(label_a, label_b)};
    return data;
}

Model<float> toy_model(std::uint64_t seed, std::vector<int> classes) {
    return build<float>({Flatten{}, Linear{2, 2}}, seed, std::move(classes));
}

double mean_cross_entropy(const Model<float>& m, const Dataset& data) {
    double total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor<float> p = softmax(forward_logits(m, data.images[i]));
        const std::size_t target = static_cast<std::size_t>(m.output_index_of(data.labels[i]));
        total += -std::log(std::max(static_cast<double>(p[target]), 1e-30));
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("one epoch on separable data reduces the loss") {
    const Dataset data = onehot_data(0, 1, 4);
    Model<float> m = toy_model(3, {0, 1});
    const double before = mean_cross_entropy(m, data);
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    const std::vector<EpochStats> history = train(m, data, cfg);
    REQUIRE(history.size() == 1);
    REQUIRE(mean_cross_entropy(m, data) < before);
}

TEST_CASE("lr zero leaves parameters unchanged") {
    const Dataset data = onehot_data(0, 1, 2);
    Model<float> m = toy_model(3, {0, 1});
    const Model<float> before = m;
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 2;
    train(m, data, cfg);
    for (std::size_t p = 0; p < m.weights.size(); ++p) {
        REQUIRE(m.weights[p].data() == before.weights[p].data());
        REQUIRE(m.biases[p].data() == before.biases[p].data());
    }
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
    const Dataset data = make_digit_dataset({0, 1}, 12, 9);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 123;
    Model<float> a = build<float>({Flatten{}, Linear{6, 784}, ReLU{}, Linear{2, 6}}, 5, {0, 1});
    Model<float> b = a;
    train(a, data, cfg);
    train(b, data, cfg);
    for (std::size_t p = 0; p < a.weights.size(); ++p) {
        REQUIRE(a.weights[p].data() == b.weights[p].data());
        REQUIRE(a.biases[p].data() == b.biases[p].data());
    }
    Model<float> c = build<float>({Flatten{}, Linear{6, 784}, ReLU{}, Linear{2, 6}}, 5, {0, 1});
    TrainConfig other = cfg;
    other.seed = 124;
    train(c, data, other);
    bool differs = false;
    for (std::size_t p = 0; p < a.weights.size(); ++p) {
        differs = differs || a.weights[p].data() != c.weights[p].data();
    }
    REQUIRE(differs);
}

TEST_CASE("constant logits score the prior of the index-0 class") {
    Dataset data = onehot_data(5, 6, 3);  // 3 of each label
    data.images.push_back(Tensor<float>(Shape{1, 1, 2}, {1, 0}));
    data.labels.push_back(5);  // now 4 fives, 3 sixes
    Model<float> m = toy_model(0, {5, 6});
    for (std::size_t k = 0; k < m.weights[0].size(); ++k) m.weights[0][k] = 0.0f;
    const double acc = evaluate(m, data);
    REQUIRE(acc == Catch::Approx(4.0 / 7.0));
}

TEST_CASE("a perfect lookup model scores one") {
    const Dataset data = onehot_data(5, 6, 4);
    Model<float> m = toy_model(0, {5, 6});
    m.weights[0] = Tensor<float>(Shape{2, 2}, {1, 0, 0, 1});
    m.biases[0] = Tensor<float>(Shape{2}, {0, 0});
    REQUIRE(evaluate(m, data) == 1.0);
}

TEST_CASE("a single retained class is trivially correct on its own data") {
    Dataset data = onehot_data(5, 6, 4);
    data = subset(data, {5});
    Model<float> m = build<float>({Flatten{}, Linear{1, 2}}, 3, {5});
    REQUIRE(evaluate(m, data) == 1.0);
}

TEST_CASE("evaluate respects class_map remapping") {
    const Dataset data = make_digit_dataset({0, 1, 2}, 10, 21);
    Model<float> m = build<float>({Flatten{}, Linear{8, 784}, ReLU{}, Linear{3, 8}}, 17, {0, 1, 2});
    TrainConfig cfg;
    cfg.epochs = 1;
    train(m, data, cfg);
    const double base = evaluate(m, data);

    // permute final rows together with the class map: accuracy is unchanged
    Model<float> permuted = m;
    const std::vector<std::size_t> perm{2, 0, 1};
    for (std::size_t r = 0; r < 3; ++r) {
        permuted.class_map[r] = m.class_map[perm[r]];
        permuted.biases[1][r] = m.biases[1][perm[r]];
        for (std::size_t c = 0; c < 8; ++c) {
            permuted.weights[1][r * 8 + c] = m.weights[1][perm[r] * 8 + c];
        }
    }
    REQUIRE(evaluate(permuted, data) == base);
    REQUIRE(evaluate(permuted, data, 2) == base);  // thread count cannot matter
}

TEST_CASE("one small-lr step on a fixed batch lowers the batch loss") {
    const Dataset data = make_digit_dataset({0, 1}, 6, 33);
    Model<float> m = build<float>({Flatten{}, Linear{4, 784}, ReLU{}, Linear{2, 4}}, 2, {0, 1});
    const double before = mean_cross_entropy(m, data);
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.momentum = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = static_cast<int>(data.size());  // one full-batch step
    train(m, data, cfg);
    REQUIRE(mean_cross_entropy(m, data) < before);
}

TEST_CASE("trainer and evaluator input validation") {
    Model<float> m = toy_model(0, {0, 1});
    Dataset empty;
    REQUIRE_THROWS_AS(evaluate(m, empty), Error);
    TrainConfig cfg;
    REQUIRE_THROWS_AS(train(m, empty, cfg), Error);

    const Dataset stray = onehot_data(0, 9, 2);
    REQUIRE_THROWS_AS(train(m, stray, cfg), Error);

    TrainConfig bad;
    bad.momentum = 1.0;
    REQUIRE_THROWS_AS(train(m, onehot_data(0, 1, 1), bad), Error);
}

TEST_CASE("fine_tune runs exactly one epoch") {
    const Dataset data = onehot_data(0, 1, 4);
    Model<float> m = toy_model(3, {0, 1});
    const std::vector<EpochStats> history = fine_tune(m, data, 0.001);
    REQUIRE(history.size() == 1);

    Model<float> frozen = toy_model(3, {0, 1});
    const Model<float> before = frozen;
    fine_tune(frozen, data, 0.0);
    REQUIRE(frozen.weights[0].data() == before.weights[0].data());
}

TEST_CASE("history CSV uses the epoch,loss,accuracy layout") {
    const std::vector<EpochStats> history{{1, 0.5, 0.75}, {2, 0.25, 0.875}};
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "routekit_history.csv";
    write_history_csv(path, history);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    REQUIRE(line == "epoch,loss,accuracy");
    std::getline(f, line);
    REQUIRE(line == "1,0.500000,0.750000");
    std::getline(f, line);
    REQUIRE(line == "2,0.250000,0.875000");
}
