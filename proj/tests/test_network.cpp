#include <catch2/catch_amalgamated.hpp>

#include "routekit/network.hpp"
#include "support/oracles.hpp"

using namespace routekit;

namespace {

std::vector<LayerSpec> lenet(std::size_t classes) {
    return {Conv{6, 1, 5, 5, 1, 0}, ReLU{}, MaxPool{2, 2},
            Conv{16, 6, 5, 5, 1, 0}, ReLU{}, MaxPool{2, 2},
            Flatten{},
            Linear{120, 256}, ReLU{},
            Linear{84, 120}, ReLU{},
            Linear{classes, 84}};
}

}  // namespace

TEST_CASE("build rejects a conv-to-linear jump without flatten") {
    const std::vector<LayerSpec> bad{Conv{8, 1, 3, 3, 1, 0}, ReLU{}, Linear{4, 8 * 6 * 6}};
    try {
        build<float>(bad, 1);
        FAIL("expected a construction error");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("flatten") != std::string::npos);
        REQUIRE(std::string(e.what()).find("layer 2") != std::string::npos);
    }
}

TEST_CASE("build rejects mismatched conv channels naming the pair") {
    const std::vector<LayerSpec> bad{Conv{8, 1, 3, 3, 1, 0}, Conv{4, 6, 3, 3, 1, 0},
                                     Flatten{}, Linear{2, 16}};
    REQUIRE_THROWS_AS(build<float>(bad, 1), Error);
}

TEST_CASE("same seed builds bit-identical parameters") {
    const Model<float> a = build<float>(lenet(4), 77);
    const Model<float> b = build<float>(lenet(4), 77);
    const Model<float> c = build<float>(lenet(4), 78);
    REQUIRE(a.weights.size() == b.weights.size());
    bool all_equal = true;
    bool differs_from_c = false;
    for (std::size_t p = 0; p < a.weights.size(); ++p) {
        all_equal = all_equal && a.weights[p].data() == b.weights[p].data();
        differs_from_c = differs_from_c || a.weights[p].data() != c.weights[p].data();
    }
    REQUIRE(all_equal);
    REQUIRE(differs_from_c);
}

TEST_CASE("initialization stays within the fan-in bound, biases zero") {
    const Model<float> m = build<float>(lenet(4), 3);
    const double bound0 = 1.0 / std::sqrt(25.0);
    for (float v : m.weights[0].data()) {
        REQUIRE(std::abs(v) <= bound0);
    }
    for (const Tensor<float>& b : m.biases) {
        for (float v : b.data()) REQUIRE(v == 0.0f);
    }
}

TEST_CASE("lenet parameter count matches the hand count") {
    const Model<float> m = build<float>(lenet(4), 0);
    REQUIRE(m.weights[0].size() + m.biases[0].size() == 156);     // 6*(1*5*5)+6
    REQUIRE(m.weights[1].size() + m.biases[1].size() == 2416);    // 16*(6*5*5)+16
    REQUIRE(m.weights[2].size() + m.biases[2].size() == 30840);   // 120*256+120
    REQUIRE(m.weights[3].size() + m.biases[3].size() == 10164);   // 84*120+84
    REQUIRE(m.weights[4].size() + m.biases[4].size() == 340);     // 4*84+4
    REQUIRE(m.parameter_count() == 43916);
}

TEST_CASE("zero input with zero biases traces to uniform probabilities") {
    const Model<float> m = build<float>(lenet(4), 5);
    const Tensor<float> zero(Shape{1, 28, 28});
    const ForwardTrace<float> trace = forward_trace(m, zero);
    REQUIRE(trace.features.size() == m.param_layer_count());
    for (const Tensor<float>& feat : trace.features) {
        for (float v : feat.data()) REQUIRE(v == 0.0f);
    }
    for (std::size_t i = 0; i < trace.probabilities.size(); ++i) {
        REQUIRE(trace.probabilities[i] == Catch::Approx(0.25));
    }
}

TEST_CASE("trace features equal isolated kernel calls applied in sequence") {
    const Model<float> m = build<float>(lenet(3), 21);
    detail::Rng rng(4);
    const Tensor<float> input = oracles::random_tensor(rng, {1, 28, 28}, 0, 1);
    const ForwardTrace<float> trace = forward_trace(m, input);

    Tensor<float> x = conv2d(input, m.weights[0], m.biases[0], 1, 0);
    x = relu(x);
    REQUIRE(x.data() == trace.features[0].data());
    x = maxpool(x, 2, 2);
    x = relu(conv2d(x, m.weights[1], m.biases[1], 1, 0));
    REQUIRE(x.data() == trace.features[1].data());
    x = flatten(maxpool(x, 2, 2));
    x = relu(linear(x, m.weights[2], m.biases[2]));
    REQUIRE(x.data() == trace.features[2].data());
    x = relu(linear(x, m.weights[3], m.biases[3]));
    REQUIRE(x.data() == trace.features[3].data());
    x = linear(x, m.weights[4], m.biases[4]);
    REQUIRE(x.data() == trace.features[4].data());  // final layer: raw logits
    const Tensor<float> probs = softmax(x);
    double total = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        REQUIRE(probs[i] == trace.probabilities[i]);
        total += probs[i];
    }
    REQUIRE(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("forward_trace is a pure function of model and input") {
    const Model<float> m = build<float>(lenet(4), 8);
    detail::Rng rng(5);
    const Tensor<float> input = oracles::random_tensor(rng, {1, 28, 28}, 0, 1);
    const ForwardTrace<float> a = forward_trace(m, input);
    const ForwardTrace<float> b = forward_trace(m, input);
    REQUIRE(a.probabilities.data() == b.probabilities.data());
    for (std::size_t p = 0; p < a.features.size(); ++p) {
        REQUIRE(a.features[p].data() == b.features[p].data());
    }
}

TEST_CASE("forward rejects a wrong input shape") {
    const Model<float> m = build<float>(lenet(4), 8);
    REQUIRE_THROWS_AS(forward_logits(m, Tensor<float>(Shape{1, 27, 27})), ShapeError);
    REQUIRE_THROWS_AS(forward_logits(m, Tensor<float>(Shape{3, 28, 28})), ShapeError);
}

TEST_CASE("validate_model catches parameter shape drift") {
    Model<float> m = build<float>(lenet(4), 8);
    m.weights[1] = Tensor<float>(Shape{16, 6, 5, 4});
    REQUIRE_THROWS_AS(validate_model(m), Error);

    Model<float> dup = build<float>(lenet(4), 8);
    dup.class_map = {0, 1, 2, 2};
    REQUIRE_THROWS_AS(validate_model(dup), Error);
}

TEST_CASE("infer_shapes walks the lenet geometry") {
    const Model<float> m = build<float>(lenet(4), 8);
    const std::vector<Shape> shapes = infer_shapes(m, Shape{1, 28, 28});
    REQUIRE(shapes[0] == Shape{6, 24, 24});
    REQUIRE(shapes[2] == Shape{6, 12, 12});
    REQUIRE(shapes[3] == Shape{16, 8, 8});
    REQUIRE(shapes[5] == Shape{16, 4, 4});
    REQUIRE(shapes[6] == Shape{256});
    REQUIRE(shapes.back() == Shape{4});
}
