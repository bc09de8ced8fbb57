#include <doctest.h>

#include <cmath>

#include "acuity/checkpoint.hpp"
#include "acuity/errors.hpp"
#include "acuity/network.hpp"
#include "support.hpp"

using namespace acuity;
using namespace acuity::nn;

namespace {

std::size_t final_hidden_dense(const NetworkState& net) {
    return net.layer_count() - 2;
}

} // namespace

TEST_CASE("full-scale network layout") {
    const auto specs = standard_layers(Architecture::full(), 438);
    const auto shapes = parameter_shapes({1, 100, 100}, specs);
    CHECK(shapes[0][0] == Shape{96, 1, 22, 22});
    const auto& last = std::get<DenseSpec>(specs.back());
    CHECK(last.activation == Activation::softmax);
    CHECK(last.units == 438);

    const std::vector<std::string> kinds = {"conv", "maxpool", "lrn", "conv", "maxpool", "lrn", "conv", "conv",
                                            "conv", "maxpool", "lrn", "flatten", "dense", "dense", "dense"};
    REQUIRE(specs.size() == kinds.size());
    for (std::size_t i = 0; i < specs.size(); ++i) CHECK(layer_kind(specs[i]) == kinds[i]);
    for (std::size_t i : {12u, 13u}) {
        const auto& d = std::get<DenseSpec>(specs[i]);
        CHECK(d.activation == Activation::tanh);
        CHECK(d.dropout_rate == 0.5);
        CHECK(d.units == 4096);
    }
    const auto out = infer_shapes({1, 100, 100}, specs);
    CHECK(out[1] == Shape{96, 40, 40});
    CHECK(out.back() == Shape{438});
}

TEST_CASE("desk network: declared shapes equal observed forward shapes") {
    const auto net = build_standard_network(Scale::desk, 10, 1);
    CHECK(net.input_shape == Shape{1, 32, 32});
    RandomSource rng(4);
    const auto batch = testing::random_tensor({3, 1, 32, 32}, rng);
    const auto declared = infer_shapes(net.input_shape, net.specs);
    RandomSource dr(0);
    const auto trace = forward_train(net, batch, dr);
    REQUIRE(trace.activations.size() == declared.size());
    for (std::size_t i = 0; i < declared.size(); ++i) {
        Shape expected{3};
        expected.insert(expected.end(), declared[i].begin(), declared[i].end());
        CHECK(trace.activations[i].shape() == expected);
    }
    const auto probs = forward(net, testing::random_tensor({1, 1, 32, 32}, rng));
    CHECK(probs.shape() == Shape{1, 10});
    CHECK(std::abs(sum(probs) - 1.0) < 1e-12);
    CHECK(net.parameter_count() > 50000);
}

TEST_CASE("full network forward shape closure on one image") {
    const auto net = build_standard_network(Scale::full, 5, 2);
    RandomSource rng(1);
    const auto probs = forward(net, testing::random_tensor({1, 1, 100, 100}, rng));
    CHECK(probs.shape() == Shape{1, 5});
    CHECK(std::abs(sum(probs) - 1.0) < 1e-12);
}

TEST_CASE("network construction is seeded") {
    CHECK(build_standard_network(Scale::desk, 4, 9) == build_standard_network(Scale::desk, 4, 9));
    CHECK_FALSE(build_standard_network(Scale::desk, 4, 9) == build_standard_network(Scale::desk, 4, 10));
}

TEST_CASE("conv_forward examples") {
    RandomSource rng(3);
    const auto x = testing::random_tensor({1, 1, 4, 4}, rng);
    SUBCASE("identity 1x1 kernel gives relu(input)") {
        const auto y = conv_forward(x, {1, 1, 1, 1, 0}, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}));
        CHECK(y == relu(x));
    }
    SUBCASE("zero weights and positive bias") {
        const auto y = conv_forward(x, {2, 3, 3, 1, 1}, Tensor({2, 1, 3, 3}), Tensor({2}, 0.25));
        for (double v : y.data()) CHECK(v == 0.25);
    }
    SUBCASE("channel mismatch") {
        CHECK_THROWS_AS(conv_forward(x, {1, 3, 3, 1, 0}, Tensor({1, 2, 3, 3}), Tensor({1})), ShapeError);
    }
    SUBCASE("matches the brute-force loop") {
        const ConvSpec spec{1, 3, 3, 1, 0};
        const auto in = testing::random_tensor({1, 1, 5, 5}, rng);
        const auto w = testing::random_tensor({1, 1, 3, 3}, rng);
        const auto b = testing::random_tensor({1}, rng);
        CHECK(testing::max_abs_diff(conv_forward(in, spec, w, b), testing::naive_conv(in, spec, w, b)) <= 1e-12);
    }
}

TEST_CASE("conv matches brute force over random geometries") {
    RandomSource rng(21);
    for (int t = 0; t < 100; ++t) {
        const std::size_t c = 1 + rng.below(3), k = 1 + rng.below(4), s = 1 + rng.below(2), p = rng.below(2);
        const std::size_t h = k + rng.below(6), w = k + rng.below(6);
        const ConvSpec spec{1 + rng.below(4), k, k, s, p};
        const auto x = testing::random_tensor({1 + rng.below(3), c, h, w}, rng);
        const auto wt = testing::random_tensor({spec.out_channels, c, k, k}, rng);
        const auto b = testing::random_tensor({spec.out_channels}, rng);
        CHECK(testing::max_abs_diff(conv_forward(x, spec, wt, b), testing::naive_conv(x, spec, wt, b)) <= 1e-12);
    }
}

TEST_CASE("maxpool and LRN match brute force over random inputs") {
    RandomSource rng(22);
    for (int t = 0; t < 100; ++t) {
        const std::size_t win = 1 + rng.below(3), stride = 1 + rng.below(3);
        const auto x = testing::random_tensor({1 + rng.below(2), 1 + rng.below(3), win + rng.below(6), win + rng.below(6)}, rng);
        CHECK(testing::max_abs_diff(maxpool_forward(x, {win, stride}).output, testing::naive_maxpool(x, win, stride)) <=
              1e-12);
        const LrnSpec spec{1 + 2 * rng.below(3), rng.uniform(0.5, 2.0), rng.uniform(1e-4, 0.5), rng.uniform(0.5, 1.0)};
        const auto y = testing::random_tensor({1 + rng.below(2), 1 + rng.below(8), 1 + rng.below(4), 1 + rng.below(4)}, rng);
        CHECK(testing::max_abs_diff(lrn_forward(y, spec).output, testing::naive_lrn(y, spec)) <= 1e-12);
    }
}

TEST_CASE("maxpool_forward examples") {
    CHECK(maxpool_forward(Tensor({1, 1, 4, 4}, 3.0), {2, 2}).output == Tensor({1, 1, 2, 2}, 3.0));
    const auto r = maxpool_forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), {2, 2});
    CHECK(r.output == Tensor({1, 1, 1, 1}, {4}));
    CHECK(r.argmax == std::vector<std::size_t>{3});
    const auto tie = maxpool_forward(Tensor({1, 1, 2, 2}, {5, 5, 5, 5}), {2, 2});
    CHECK(tie.argmax == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(maxpool_forward(Tensor({1, 1, 2, 2}), {3, 1}), ShapeError);
    RandomSource rng(5);
    const auto x = testing::random_tensor({1, 1, 6, 6}, rng);
    CHECK(maxpool_forward(x, {2, 2}).output == testing::naive_maxpool(x, 2, 2));
}

TEST_CASE("lrn_forward examples") {
    RandomSource rng(6);
    const auto x = testing::random_tensor({1, 1, 3, 3}, rng);
    CHECK(lrn_forward(x, {5, 1.0, 0.0, 0.75}).output == x);
    CHECK(lrn_forward(Tensor({1, 4, 2, 2}), {}).output == Tensor({1, 4, 2, 2}));
    const auto y = testing::random_tensor({1, 8, 4, 4}, rng);
    CHECK(testing::max_abs_diff(lrn_forward(y, {}).output, testing::naive_lrn(y, {})) <= 1e-12);
    CHECK_THROWS_AS(validate(LayerSpec{LrnSpec{4, 2, 1e-4, 0.75}}), ParameterError);
}

TEST_CASE("dense_forward and dropout") {
    RandomSource rng(7);
    const auto x = testing::random_tensor({2, 3}, rng);
    const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(dense_forward(x, eye, Tensor({3}), {3, Activation::none, 0.0}, Mode::train, &rng).output == x);

    const DenseSpec spec{3, Activation::tanh, 0.5};
    RandomSource r1(1), r2(2);
    const auto a = dense_forward(x, eye, Tensor({3}), spec, Mode::eval, &r1);
    const auto b = dense_forward(x, eye, Tensor({3}), spec, Mode::eval, &r2);
    CHECK(a.output == b.output);
    CHECK(a.mask.empty());
    CHECK(a.output == tanh(x));

    const std::size_t n = 100000;
    const auto r = dense_forward(Tensor({1, 1}, 1.0), Tensor({1, n}, 1.0), Tensor({n}),
                                 {n, Activation::none, 0.5}, Mode::train, &r1);
    std::size_t survivors = 0;
    for (double v : r.output.data()) {
        CHECK((v == 0.0 || v == 2.0));
        survivors += v != 0.0;
    }
    const double frac = static_cast<double>(survivors) / static_cast<double>(n);
    CHECK(frac >= 0.49);
    CHECK(frac <= 0.51);
    CHECK_THROWS_AS(dense_forward(x, Tensor({4, 3}), Tensor({3}), {3, Activation::none, 0.0}, Mode::eval, nullptr),
                    ShapeError);
}

TEST_CASE("softmax cross-entropy") {
    const auto uniform = softmax_cross_entropy(Tensor({1, 4}, 0.0), {2});
    CHECK(uniform.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    const auto sharp = softmax_cross_entropy(Tensor({1, 3}, {0.0, 800.0, 0.0}), {1});
    CHECK(sharp.loss < 1e-12);
    CHECK(std::isfinite(softmax_cross_entropy(Tensor({1, 3}, {-800.0, 800.0, 0.0}), {0}).loss));
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 3}), {3}), DataError);
    RandomSource rng(8);
    const auto p = softmax(testing::random_tensor({6, 7}, rng, -20, 20));
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += p.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("layer gradients match central differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        const auto conv = testing::check_conv_gradients(seed);
        CHECK_MESSAGE(conv.ok(), conv.first_failure);
        const auto pool = testing::check_maxpool_gradients(seed);
        CHECK_MESSAGE(pool.ok(), pool.first_failure);
        const auto lrn = testing::check_lrn_gradients(seed, {});
        CHECK_MESSAGE(lrn.ok(), lrn.first_failure);
        const auto strong = testing::check_lrn_gradients(seed, {3, 1.0, 0.5, 0.75});
        CHECK_MESSAGE(strong.ok(), strong.first_failure);
        const auto dense = testing::check_dense_tanh_gradients(seed);
        CHECK_MESSAGE(dense.ok(), dense.first_failure);
        const auto ce = testing::check_softmax_ce_gradients(seed);
        CHECK_MESSAGE(ce.ok(), ce.first_failure);
    }
}

TEST_CASE("desk network gradients match central differences") {
    const auto net = testing::desk_network_without_dropout(5, 11);
    RandomSource rng(12);
    const auto batch = testing::random_tensor({2, 1, 32, 32}, rng);
    const auto check = testing::check_network_gradients(net, batch, {1, 3}, 8, rng);
    CHECK_MESSAGE(check.ok(), check.first_failure);
}

TEST_CASE("backward edge cases") {
    const auto net = testing::desk_network_without_dropout(3, 5);
    RandomSource rng(13);
    const auto x = testing::random_tensor({1, 1, 32, 32}, rng);
    RandomSource d(0);
    const auto trace = forward_train(net, x, d);

    SUBCASE("zero upstream gradient gives zero parameter gradients") {
        const auto g = backward(net, trace, Tensor({1, 3}));
        for (const auto& layer : g)
            for (const auto& t : layer)
                for (double v : t.data()) CHECK(v == 0.0);
    }
    SUBCASE("missing trace") {
        CHECK_THROWS_AS(backward(net, ForwardTrace{}, Tensor({1, 3})), StateError);
    }
    SUBCASE("duplicated sample gives the single-sample gradient") {
        Tensor twice({2, 1, 32, 32});
        std::copy(x.data().begin(), x.data().end(), twice.data().begin());
        std::copy(x.data().begin(), x.data().end(), twice.data().begin() + 1024);
        RandomSource d1(0), d2(0);
        const auto t1 = forward_train(net, x, d1);
        const auto t2 = forward_train(net, twice, d2);
        const auto g1 = backward(net, t1, softmax_cross_entropy(t1.logits(), {2}).d_logits);
        const auto g2 = backward(net, t2, softmax_cross_entropy(t2.logits(), {2, 2}).d_logits);
        for (std::size_t l = 0; l < g1.size(); ++l)
            for (std::size_t p = 0; p < g1[l].size(); ++p)
                CHECK(testing::max_abs_diff(g1[l][p], g2[l][p]) <= 1e-12);
    }
}

TEST_CASE("sgd with momentum") {
    NetworkState net;
    net.input_shape = {1};
    net.specs = {DenseSpec{1, Activation::softmax, 0.0}};
    net.params = {{Tensor({1, 1}), Tensor({1})}};
    net.velocities = net.params;

    SUBCASE("plain sgd") {
        sgd_momentum_step(net, {{Tensor({1, 1}, 1.0), Tensor({1}, 1.0)}}, {0.1, 0.0, 1});
        CHECK(net.params[0][0][0] == doctest::Approx(-0.1).epsilon(1e-15));
    }
    SUBCASE("zero gradients leave params unchanged") {
        const auto before = net.params;
        sgd_momentum_step(net, {{Tensor({1, 1}), Tensor({1})}}, {});
        CHECK(net.params == before);
    }
    SUBCASE("scalar quadratic recurrence") {
        net.params[0][0][0] = 1.0;
        double p = 1.0, v = 0.0;
        const HyperParams h{0.001, 0.9, 1};
        for (int i = 0; i < 3; ++i) {
            const double g = 2.0 * net.params[0][0][0];
            sgd_momentum_step(net, {{Tensor({1, 1}, g), Tensor({1})}}, h);
            v = 0.9 * v - 0.001 * (2.0 * p);
            p = p + v;
            CHECK(std::abs(net.params[0][0][0] - p) <= 1e-15);
        }
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(sgd_momentum_step(net, {{Tensor({2, 1}), Tensor({1})}}, {}), ShapeError);
    }
    SUBCASE("invalid hyperparameters") {
        CHECK_THROWS_AS((HyperParams{0.0, 0.9, 1}.validate()), ParameterError);
        CHECK_THROWS_AS((HyperParams{0.1, 1.0, 1}.validate()), ParameterError);
        CHECK_THROWS_AS((HyperParams{0.1, 0.5, 0}.validate()), ParameterError);
    }
}

TEST_CASE("one small step decreases the sample's loss") {
    auto net = testing::desk_network_without_dropout(4, 17);
    RandomSource rng(18);
    const auto x = testing::random_tensor({1, 1, 32, 32}, rng);
    const auto before = softmax_cross_entropy(forward_logits(net, x), {1}).loss;
    RandomSource d(0);
    train_step(net, x, {1}, {1e-4, 0.0, 1}, d);
    const auto after = softmax_cross_entropy(forward_logits(net, x), {1}).loss;
    CHECK(after < before);
}

TEST_CASE("checkpoint persistence") {
    testing::TempDir dir("ckpt");
    Checkpoint c;
    c.network = build_standard_network(Scale::desk, 6, 3);
    RandomSource rng(2);
    for (auto& layer : c.network.velocities)
        for (auto& t : layer) t = testing::random_tensor(t.shape(), rng);
    c.network.epoch_counter = 10;
    c.hyper = {0.01, 0.9, 32};
    c.rng = RandomSource(5, 1).state();
    c.metadata = {{"protocol", "LH"}, {"note", "a=b c"}};
    const auto path = dir.path() / "net.ckpt";
    save_checkpoint(c, path);

    SUBCASE("round trip is bit exact") {
        CHECK(load_checkpoint(path) == c);
    }
    SUBCASE("truncation") {
        auto bytes = read_file(path);
        bytes.resize(bytes.size() / 2);
        write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
        CHECK_THROWS_AS(load_checkpoint(path), TruncatedError);
        CHECK_THROWS_AS(load_checkpoint(path), ChecksumError);
    }
    SUBCASE("corruption") {
        auto bytes = read_file(path);
        bytes[bytes.size() - 100] ^= 0x10;
        write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
        try {
            (void)load_checkpoint(path);
            FAIL("expected a checksum error");
        } catch (const TruncatedError&) {
            FAIL("corruption reported as truncation");
        } catch (const ChecksumError&) {
        }
    }
    SUBCASE("version mismatch") {
        auto bytes = read_file(path);
        bytes[4] = 9;
        write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
        CHECK_THROWS_AS(load_checkpoint(path), VersionError);
    }
    SUBCASE("bad magic and missing file") {
        write_file_atomic(path, "not a checkpoint at all");
        CHECK_THROWS_AS(load_checkpoint(path), PersistenceError);
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "absent.ckpt"), PersistenceError);
    }
}

TEST_CASE("layer spec text encoding round-trips") {
    for (const auto& spec : standard_layers(Architecture::desk(), 7)) CHECK(decode_layer(encode_layer(spec)) == spec);
    CHECK_THROWS_AS(decode_layer("conv 1 2"), PersistenceError);
    CHECK_THROWS_AS(decode_layer("bogus"), PersistenceError);
}

TEST_CASE("final hidden dense layer has 128 units at desk scale") {
    const auto net = build_standard_network(Scale::desk, 10, 1);
    const auto shapes = infer_shapes(net.input_shape, net.specs);
    CHECK(shapes[final_hidden_dense(net) + 1] == Shape{128});
}
