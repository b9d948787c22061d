#include <catch2/catch_amalgamated.hpp>

#include "routekit/attribution.hpp"
#include "routekit/digits.hpp"
#include "support/oracles.hpp"

using namespace routekit;

namespace {

Model<float> small_conv_model(std::uint64_t seed, std::vector<int> classes) {
    std::vector<LayerSpec> layers{Conv{4, 1, 3, 3, 1, 0}, ReLU{}, MaxPool{2, 2}, Flatten{},
                                  Linear{6, 4 * 13 * 13}, ReLU{},
                                  Linear{classes.size(), 6}};
    return build<float>(layers, seed, std::move(classes));
}

}  // namespace

TEST_CASE("feature_saliency hand sums") {
    const Tensor<float> grad(Shape{2, 2}, {1, -2, 3, 0});
    REQUIRE(feature_saliency(grad, SaliencyMode::positive) == 4.0);
    REQUIRE(feature_saliency(grad, SaliencyMode::negative) == 2.0);
    REQUIRE(feature_saliency(grad, SaliencyMode::absolute) == 6.0);

    const Tensor<float> negative(Shape{3}, {-1, -5, -0.5});
    REQUIRE(feature_saliency(negative, SaliencyMode::positive) == 0.0);

    const Tensor<float> scalar(Shape{1}, {-2.5f});
    REQUIRE(feature_saliency(scalar, SaliencyMode::negative) == 2.5);
}

TEST_CASE("absolute saliency decomposes into positive plus negative") {
    detail::Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(100);
        Tensor<double> grad(Shape{n});
        for (std::size_t i = 0; i < n; ++i) grad[i] = rng.uniform(-10, 10);
        const double pos = feature_saliency(grad, SaliencyMode::positive);
        const double neg = feature_saliency(grad, SaliencyMode::negative);
        const double abs = feature_saliency(grad, SaliencyMode::absolute);
        REQUIRE(pos >= 0.0);
        REQUIRE(neg >= 0.0);
        REQUIRE(std::abs(abs - (pos + neg)) < 1e-6);
    }
}

TEST_CASE("attribute_class with one qualifying image equals that image's saliencies") {
    const Model<float> m = small_conv_model(5, {0, 1});
    Dataset data;
    detail::Rng rng(3);
    data.images.push_back(oracles::random_tensor(rng, {1, 28, 28}, 0, 1));
    data.labels.push_back(0);
    data.label_universe = {0};

    SamplePolicy policy;
    policy.min_confidence = 0.01;  // an untrained model hovers near 0.5
    policy.require_correct = false;
    const AttributionMap map = attribute_class(m, data, 0, policy, SaliencyMode::positive);
    REQUIRE(map.image_count == 1);
    REQUIRE(map.scores.size() == m.param_layer_count());

    const TracedForward<float> tf = record_forward(m, data.images[0]);
    const GradientStore<float> grads = tf.tape.backward(0);
    const auto expected = detail::per_unit_saliency(tf, grads, SaliencyMode::positive);
    for (std::size_t p = 0; p < expected.size(); ++p) {
        REQUIRE(map.scores[p] == expected[p]);
    }
}

TEST_CASE("duplicating every qualifying image doubles every score") {
    const Model<float> m = small_conv_model(5, {0, 1});
    Dataset once;
    detail::Rng rng(8);
    for (int i = 0; i < 3; ++i) {
        once.images.push_back(oracles::random_tensor(rng, {1, 28, 28}, 0, 1));
        once.labels.push_back(0);
    }
    once.label_universe = {0};
    Dataset twice = once;
    for (int i = 0; i < 3; ++i) {
        twice.images.push_back(once.images[i]);
        twice.labels.push_back(0);
    }

    SamplePolicy policy;
    policy.min_confidence = 0.01;
    policy.require_correct = false;
    const AttributionMap a = attribute_class(m, once, 0, policy, SaliencyMode::positive);
    const AttributionMap b = attribute_class(m, twice, 0, policy, SaliencyMode::positive);
    REQUIRE(b.image_count == 2 * a.image_count);
    for (std::size_t p = 0; p < a.scores.size(); ++p) {
        for (std::size_t d = 0; d < a.scores[p].size(); ++d) {
            REQUIRE(b.scores[p][d] == Catch::Approx(2.0 * a.scores[p][d]).margin(1e-12));
        }
    }
}

TEST_CASE("attribution is deterministic and thread-count independent") {
    const Model<float> m = small_conv_model(5, {0, 1});
    const Dataset data = make_digit_dataset({0, 1}, 10, 4);
    SamplePolicy policy;
    policy.min_confidence = 0.01;
    policy.require_correct = false;
    const AttributionMap a = attribute_class(m, data, 0, policy, SaliencyMode::positive, 1);
    const AttributionMap b = attribute_class(m, data, 0, policy, SaliencyMode::positive, 2);
    REQUIRE(a.image_count == b.image_count);
    for (std::size_t p = 0; p < a.scores.size(); ++p) {
        REQUIRE(a.scores[p] == b.scores[p]);
    }
}

TEST_CASE("selection: confidence bar, cap, fallback and failure") {
    const Model<float> m = small_conv_model(5, {0, 1});
    const Dataset data = make_digit_dataset({0, 1}, 20, 4);

    // untrained model: nothing clears 0.99, so the policy relaxes
    SamplePolicy strict;
    strict.min_confidence = 0.99;
    strict.require_correct = false;
    strict.max_images = 5;
    const AttributionMap relaxed = attribute_class(m, data, 0, strict, SaliencyMode::positive);
    REQUIRE(relaxed.policy_relaxed);
    REQUIRE(relaxed.image_count == 5);

    // a permissive bar keeps at most max_images, unrelaxed
    SamplePolicy loose;
    loose.min_confidence = 0.01;
    loose.require_correct = false;
    loose.max_images = 7;
    const AttributionMap capped = attribute_class(m, data, 0, loose, SaliencyMode::positive);
    REQUIRE_FALSE(capped.policy_relaxed);
    REQUIRE(capped.image_count == 7);

    // requiring correctness when the model never predicts the class -> error
    Model<float> biased = m;
    for (std::size_t k = 0; k < biased.biases.back().size(); ++k) {
        biased.biases.back()[k] = k == 1 ? 100.0f : -100.0f;  // always predicts class 1
    }
    SamplePolicy correct_only;
    correct_only.require_correct = true;
    REQUIRE_THROWS_AS(attribute_class(biased, data, 0, correct_only, SaliencyMode::positive),
                      Error);

    REQUIRE_THROWS_AS(attribute_class(m, data, 9, loose, SaliencyMode::positive), Error);
}

TEST_CASE("build_mask thresholds at multiplier times the layer mean") {
    const Model<float> m = build<float>({Flatten{}, Linear{4, 4}, ReLU{}, Linear{2, 4}}, 1, {0, 1});
    AttributionMap attr;
    attr.class_label = 0;
    attr.scores = {{1, 3, 5, 7}, {2, 2}};

    // mean 4: curly threshold keeps ties via >=
    const RouteMask at_mean = build_mask(attr, 1.0, m, 1);
    REQUIRE(at_mean.keep[0] == std::vector<bool>{false, false, true, true});
    REQUIRE(at_mean.keep[1] == std::vector<bool>{true, false});  // final: class rows only

    const RouteMask everything = build_mask(attr, 0.0, m, 1);
    REQUIRE(everything.keep[0] == std::vector<bool>{true, true, true, true});

    AttributionMap flat = attr;
    flat.scores[0] = {2, 2, 2, 2};
    const RouteMask ties = build_mask(flat, 1.0, m, 1);
    REQUIRE(ties.keep[0] == std::vector<bool>{true, true, true, true});

    REQUIRE_THROWS_AS(build_mask(attr, -0.5, m, 1), Error);
}

TEST_CASE("mask depth counts parameter layers from the output") {
    const Model<float> m = small_conv_model(5, {0, 1});  // conv, linear, linear
    AttributionMap attr;
    attr.class_label = 1;
    attr.scores = {std::vector<double>{1, 2, 3, 40}, std::vector<double>{1, 2, 3, 40, 5, 6},
                   std::vector<double>{1, 2}};

    const RouteMask shallow = build_mask(attr, 1.0, m, 0);
    REQUIRE(shallow.keep[0] == std::vector<bool>(4, true));
    REQUIRE(shallow.keep[1] == std::vector<bool>(6, true));
    REQUIRE(shallow.keep[2] == std::vector<bool>{false, true});

    const RouteMask penultimate = build_mask(attr, 1.0, m, 1);
    REQUIRE(penultimate.keep[0] == std::vector<bool>(4, true));
    REQUIRE(penultimate.keep[1] == std::vector<bool>{false, false, false, true, false, false});

    const RouteMask deep = build_mask(attr, 1.0, m, 2);
    REQUIRE(deep.keep[0] == std::vector<bool>{false, false, false, true});
}

TEST_CASE("masks nest monotonically in the multiplier before fallback") {
    const Model<float> m = small_conv_model(5, {0, 1});
    detail::Rng rng(15);
    AttributionMap attr;
    attr.class_label = 0;
    attr.scores = {{}, {}, {}};
    for (int d = 0; d < 4; ++d) attr.scores[0].push_back(rng.uniform(0, 10));
    for (int d = 0; d < 6; ++d) attr.scores[1].push_back(rng.uniform(0, 10));
    attr.scores[2] = {1, 1};

    RouteMask prev = build_mask(attr, 0.0, m, 2, false);
    for (double x : {0.5, 1.0, 1.5, 2.0, 4.0}) {
        const RouteMask next = build_mask(attr, x, m, 2, false);
        for (std::size_t p = 0; p < prev.keep.size(); ++p) {
            for (std::size_t d = 0; d < prev.keep[p].size(); ++d) {
                if (next.keep[p][d]) REQUIRE(prev.keep[p][d]);
            }
        }
        prev = next;
    }
}

TEST_CASE("an empty thresholded layer falls back to its top unit") {
    const Model<float> m = build<float>({Flatten{}, Linear{4, 4}, ReLU{}, Linear{2, 4}}, 1, {0, 1});
    AttributionMap attr;
    attr.class_label = 0;
    attr.scores = {{1, 9, 5, 7}, {2, 2}};
    const RouteMask kept = build_mask(attr, 100.0, m, 1);
    REQUIRE(kept.keep[0] == std::vector<bool>{false, true, false, false});
    const RouteMask empty = build_mask(attr, 100.0, m, 1, false);
    REQUIRE(empty.keep[0] == std::vector<bool>{false, false, false, false});
}

TEST_CASE("union of masks is elementwise OR with a class-set union") {
    RouteMask a;
    a.classes = {0};
    a.multiplier = 1.0;
    a.keep = {{true, false, false}, {true, false}};
    RouteMask b;
    b.classes = {1};
    b.multiplier = 1.0;
    b.keep = {{false, false, true}, {false, true}};

    const RouteMask u = union_masks({a, b});
    REQUIRE(u.keep[0] == std::vector<bool>{true, false, true});
    REQUIRE(u.keep[1] == std::vector<bool>{true, true});
    REQUIRE(u.classes == std::vector<int>{0, 1});
    REQUIRE(u.multiplier == 1.0);

    const RouteMask same = union_masks({a, a});
    REQUIRE(same.keep == a.keep);
    REQUIRE(same.classes == a.classes);

    RouteMask all = a;
    all.keep = {{true, true, true}, {true, true}};
    REQUIRE(union_masks({a, all}).keep == all.keep);

    RouteMask ragged = b;
    ragged.keep = {{false, true}, {false, true}};
    REQUIRE_THROWS_AS(union_masks({a, ragged}), Error);
}

TEST_CASE("attribution and mask artifacts round-trip through JSON") {
    const Model<float> m = small_conv_model(5, {0, 1});
    const Dataset data = make_digit_dataset({0, 1}, 6, 4);
    SamplePolicy policy;
    policy.min_confidence = 0.01;
    policy.require_correct = false;
    const AttributionMap attr = attribute_class(m, data, 0, policy, SaliencyMode::absolute);
    const AttributionMap attr2 = attribution_from_json(to_json(attr));
    REQUIRE(attr2.class_label == attr.class_label);
    REQUIRE(attr2.mode == attr.mode);
    REQUIRE(attr2.image_count == attr.image_count);
    REQUIRE(attr2.scores == attr.scores);

    const RouteMask mask = build_mask(attr, 1.0, m, 2);
    const RouteMask mask2 = mask_from_json(to_json(mask));
    REQUIRE(mask2.classes == mask.classes);
    REQUIRE(mask2.multiplier == mask.multiplier);
    REQUIRE(mask2.keep == mask.keep);
}
