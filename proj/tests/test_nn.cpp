#include <catch2/catch_amalgamated.hpp>

#include "grad_check.hpp"
#include "sino/nn/loss.hpp"
#include "sino/nn/model.hpp"
#include "sino/nn/optim.hpp"
#include "sino/rng.hpp"

using namespace sino;
using namespace sino::nn;

namespace {

/// Single-layer graph wrapped in a model for kernel-level tests.
Model<double> single_layer(LayerSpec spec, std::vector<int> input_dims) {
    ModelGraph g;
    spec.inputs = {0};
    g.add(std::move(spec));
    return Model<double>(std::move(g), std::move(input_dims));
}

LayerSpec conv_spec(const char* name, int out_c, int kh, int kw, int sh, int sw, Padding pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.name = name;
    s.out_channels = out_c;
    s.kh = kh;
    s.kw = kw;
    s.sh = sh;
    s.sw = sw;
    s.padding = pad;
    return s;
}

}  // namespace

TEST_CASE("conv2d forward values", "[nn]") {
    SECTION("1x1 identity kernel") {
        auto m = single_layer(conv_spec("c", 1, 1, 1, 1, 1, Padding::Valid), {1, 1, 2, 3});
        m.weight(1).data = {1.0};
        Tensor<double> x({1, 1, 2, 3});
        x.data = {1, 2, 3, 4, 5, 6};
        Model<double>::Workspace ws;
        CHECK(m.forward(x, ws).data == x.data);
    }
    SECTION("hand-computed 2x2 kernel, valid padding") {
        auto m = single_layer(conv_spec("c", 1, 2, 2, 1, 1, Padding::Valid), {1, 1, 2, 3});
        m.weight(1).data = {1, 0, 0, 1};
        Tensor<double> x({1, 1, 2, 3});
        x.data = {1, 2, 3, 4, 5, 6};
        Model<double>::Workspace ws;
        const auto& y = m.forward(x, ws);
        REQUIRE(y.dims == std::vector<int>{1, 1, 1, 2});
        CHECK(y.data[0] == 6.0);
        CHECK(y.data[1] == 8.0);
    }
    SECTION("same padding yields ceil(in/stride) dims") {
        auto m = single_layer(conv_spec("c", 3, 3, 2, 2, 2, Padding::Same), {1, 2, 7, 9});
        Tensor<double> x({1, 2, 7, 9});
        Model<double>::Workspace ws;
        const auto& y = m.forward(x, ws);
        CHECK(y.dims == std::vector<int>{1, 3, 4, 5});
    }
    SECTION("channel mismatch is rejected") {
        auto m = single_layer(conv_spec("c", 2, 3, 3, 1, 1, Padding::Same), {1, 2, 5, 5});
        Tensor<double> x({1, 3, 5, 5});
        Model<double>::Workspace ws;
        CHECK_THROWS_AS(m.forward(x, ws), std::invalid_argument);
    }
}

TEST_CASE("gradient checks per layer kind", "[nn][grad]") {
    SECTION("conv square, stride 1, valid") {
        auto m = single_layer(conv_spec("c", 2, 3, 3, 1, 1, Padding::Valid), {2, 3, 5, 7});
        gradcheck::randomize_and_check(m, {2, 3, 5, 7}, 11);
    }
    SECTION("conv tall 5x1, same padding, stride 1") {
        auto m = single_layer(conv_spec("c", 2, 5, 1, 1, 1, Padding::Same), {2, 2, 6, 5});
        gradcheck::randomize_and_check(m, {2, 2, 6, 5}, 12);
    }
    SECTION("conv wide 3x7, same padding, stride 2") {
        auto m = single_layer(conv_spec("c", 2, 3, 7, 2, 2, Padding::Same), {2, 2, 6, 9});
        gradcheck::randomize_and_check(m, {2, 2, 6, 9}, 13);
    }
    SECTION("conv rectangular 7x3, stride 2x1") {
        auto m = single_layer(conv_spec("c", 1, 7, 3, 2, 1, Padding::Same), {1, 2, 9, 5});
        gradcheck::randomize_and_check(m, {1, 2, 9, 5}, 14);
    }
    SECTION("max pool") {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.name = "p";
        s.kh = s.kw = 2;
        s.sh = s.sw = 2;
        auto m = single_layer(s, {2, 2, 6, 6});
        gradcheck::randomize_and_check(m, {2, 2, 6, 6}, 15);
    }
    SECTION("avg pool 3x2 stride 2x1") {
        LayerSpec s;
        s.kind = LayerKind::AvgPool;
        s.name = "p";
        s.kh = 3;
        s.kw = 2;
        s.sh = 2;
        s.sw = 1;
        auto m = single_layer(s, {1, 2, 7, 6});
        gradcheck::randomize_and_check(m, {1, 2, 7, 6}, 16);
    }
    SECTION("global average pool") {
        LayerSpec s;
        s.kind = LayerKind::GlobalAvgPool;
        s.name = "g";
        auto m = single_layer(s, {2, 3, 4, 5});
        gradcheck::randomize_and_check(m, {2, 3, 4, 5}, 17);
    }
    SECTION("relu") {
        LayerSpec s;
        s.kind = LayerKind::Relu;
        s.name = "r";
        auto m = single_layer(s, {2, 2, 4, 4});
        gradcheck::randomize_and_check(m, {2, 2, 4, 4}, 18);
    }
    SECTION("fully connected") {
        LayerSpec s;
        s.kind = LayerKind::FullyConnected;
        s.name = "f";
        s.out_features = 4;
        auto m = single_layer(s, {3, 6});
        gradcheck::randomize_and_check(m, {3, 6}, 19);
    }
    SECTION("upsample") {
        LayerSpec s;
        s.kind = LayerKind::Upsample;
        s.name = "u";
        s.factor = 2;
        auto m = single_layer(s, {1, 2, 3, 4});
        gradcheck::randomize_and_check(m, {1, 2, 3, 4}, 20);
    }
    SECTION("concat and add_skip") {
        ModelGraph g;
        LayerSpec c1 = conv_spec("a", 3, 1, 1, 1, 1, Padding::Valid);
        c1.inputs = {0};
        const int n1 = g.add(c1);
        LayerSpec c2 = conv_spec("b", 5, 1, 1, 1, 1, Padding::Valid);
        c2.inputs = {0};
        const int n2 = g.add(c2);
        LayerSpec cat;
        cat.kind = LayerKind::Concat;
        cat.name = "cat";
        cat.inputs = {n1, n2};
        const int n3 = g.add(cat);
        LayerSpec c3 = conv_spec("c", 3, 1, 1, 1, 1, Padding::Valid);
        c3.inputs = {n3};
        const int n4 = g.add(c3);
        LayerSpec skip;
        skip.kind = LayerKind::AddSkip;
        skip.name = "skip";
        skip.inputs = {n4, n1};
        g.add(skip);
        Model<double> m(std::move(g), {2, 2, 3, 4});
        gradcheck::randomize_and_check(m, {2, 2, 3, 4}, 21);
    }
}

TEST_CASE("pooling values", "[nn]") {
    SECTION("max pool picks window maxima") {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.name = "p";
        s.kh = s.kw = 2;
        s.sh = s.sw = 2;
        auto m = single_layer(s, {1, 1, 2, 2});
        Tensor<double> x({1, 1, 2, 2});
        x.data = {1, 2, 3, 4};
        Model<double>::Workspace ws;
        const auto& y = m.forward(x, ws);
        REQUIRE(y.numel() == 1);
        CHECK(y.data[0] == 4.0);
    }
    SECTION("max pool tie routes to the first maximum in scan order") {
        std::vector<int> argmax;
        Tensor<double> x({1, 1, 2, 2});
        x.data = {7, 7, 7, 7};
        auto y = pool2d_forward(x, PoolKind::Max, 2, 2, 2, 2, argmax);
        CHECK(argmax[0] == 0);
        Tensor<double> dy({1, 1, 1, 1});
        dy.data = {1.0};
        auto dx = pool2d_backward(x, dy, PoolKind::Max, 2, 2, 2, 2, argmax);
        CHECK(dx.data == std::vector<double>{1, 0, 0, 0});
    }
    SECTION("avg pool of a constant is constant") {
        LayerSpec s;
        s.kind = LayerKind::AvgPool;
        s.name = "p";
        s.kh = s.kw = 3;
        s.sh = s.sw = 1;
        auto m = single_layer(s, {1, 2, 5, 5});
        Tensor<double> x({1, 2, 5, 5});
        x.fill(2.5);
        Model<double>::Workspace ws;
        for (double v : m.forward(x, ws).data) REQUIRE(v == Catch::Approx(2.5).epsilon(1e-15));
    }
    SECTION("oversized kernels are rejected") {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.name = "p";
        s.kh = s.kw = 4;
        s.sh = s.sw = 1;
        CHECK_THROWS_AS(single_layer(s, {1, 1, 3, 3}), std::invalid_argument);
    }
}

TEST_CASE("global average pool values", "[nn]") {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    s.name = "g";
    auto m = single_layer(s, {1, 2, 1, 1});
    Tensor<double> x({1, 2, 1, 1});
    x.data = {3.0, -4.0};
    Model<double>::Workspace ws;
    CHECK(m.forward(x, ws).data == x.data);  // 1x1 spatial input is the identity

    Tensor<double> big({2, 3, 6, 7});
    Rng rng(5);
    for (auto& v : big.data) v = rng.normal();
    auto y = global_avg_pool_forward(big);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int h = 0; h < 6; ++h)
                for (int w = 0; w < 7; ++w) acc += big.at4(b, c, h, w);
            REQUIRE(y.at2(b, c) == Catch::Approx(acc / 42.0).epsilon(1e-12));
        }
}

TEST_CASE("concat_channels values", "[nn]") {
    ModelGraph g;
    LayerSpec cat;
    cat.kind = LayerKind::Concat;
    cat.name = "cat";
    cat.inputs = {0};
    g.add(cat);
    Model<double> single(std::move(g), {1, 3, 2, 2});
    Tensor<double> x({1, 3, 2, 2});
    Rng rng(6);
    for (auto& v : x.data) v = rng.normal();
    Model<double>::Workspace ws;
    CHECK(single.forward(x, ws).data == x.data);  // single input is the identity

    ModelGraph g2;
    LayerSpec a = conv_spec("a", 3, 1, 1, 1, 1, Padding::Valid);
    a.inputs = {0};
    const int na = g2.add(a);
    LayerSpec b = conv_spec("b", 5, 1, 1, 1, 1, Padding::Valid);
    b.inputs = {0};
    const int nb = g2.add(b);
    LayerSpec cat2;
    cat2.kind = LayerKind::Concat;
    cat2.name = "cat";
    cat2.inputs = {na, nb};
    g2.add(cat2);
    Model<double> m(std::move(g2), {2, 2, 3, 3});
    const auto shapes = infer_shapes(m.graph(), {2, 2, 3, 3});
    CHECK(shapes.back() == std::vector<int>{2, 8, 3, 3});  // 3 + 5 channels in order
}

TEST_CASE("fully_connected values", "[nn]") {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.name = "f";
    s.out_features = 2;
    auto m = single_layer(s, {1, 2});
    m.weight(1).data = {1, 1, 1, -1};  // rows: [1,1], [1,-1]
    m.bias(1).data = {0, 1};
    Tensor<double> x({1, 2});
    x.data = {1, 2};
    Model<double>::Workspace ws;
    const auto& y = m.forward(x, ws);
    CHECK(y.data[0] == 3.0);
    CHECK(y.data[1] == 0.0);
}

TEST_CASE("softmax cross entropy", "[nn]") {
    SECTION("uniform logits give ln C") {
        Tensor<double> logits({2, 5});
        logits.fill(0.7);
        auto res = softmax_cross_entropy(logits, {0, 3});
        CHECK(res.loss == Catch::Approx(std::log(5.0)).epsilon(1e-12));
    }
    SECTION("confident correct logits give the closed-form tail loss") {
        Tensor<double> logits({1, 2});
        logits.data = {10.0, -10.0};
        auto res = softmax_cross_entropy(logits, {0});
        CHECK(res.loss == Catch::Approx(std::log(1.0 + std::exp(-20.0))).epsilon(1e-6));
    }
    SECTION("probabilities sum to one per row") {
        Tensor<double> logits({3, 4});
        Rng rng(7);
        for (auto& v : logits.data) v = rng.normal(0.0, 5.0);
        auto res = softmax_cross_entropy(logits, {1, 2, 3});
        for (int b = 0; b < 3; ++b) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) s += res.probabilities.at2(b, c);
            REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
        }
    }
    SECTION("gradient is (p - onehot)/batch, finite-difference verified") {
        Tensor<double> logits({2, 3});
        Rng rng(8);
        for (auto& v : logits.data) v = rng.normal();
        const std::vector<int> labels = {2, 0};
        auto res = softmax_cross_entropy(logits, labels);
        const double h = 1e-6;
        for (std::size_t i = 0; i < logits.numel(); ++i) {
            Tensor<double> up = logits, dn = logits;
            up.data[i] += h;
            dn.data[i] -= h;
            const double fd = (softmax_cross_entropy(up, labels).loss -
                               softmax_cross_entropy(dn, labels).loss) / (2 * h);
            REQUIRE(res.dlogits.data[i] == Catch::Approx(fd).margin(1e-8));
        }
    }
    SECTION("label range is validated") {
        Tensor<double> logits({1, 3});
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), std::invalid_argument);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), std::invalid_argument);
    }
}

TEST_CASE("mse loss", "[nn]") {
    Tensor<double> a({1, 2});
    a.data = {0.0, 2.0};
    Tensor<double> b({1, 2});
    b.data = {1.0, 1.0};
    CHECK(mse_loss(a, a).loss == 0.0);
    CHECK(mse_loss(a, b).loss == Catch::Approx(1.0).epsilon(1e-15));

    SECTION("gradient 2(pred-target)/n, finite-difference verified") {
        Tensor<double> pred({2, 3});
        Tensor<double> target({2, 3});
        Rng rng(9);
        for (auto& v : pred.data) v = rng.normal();
        for (auto& v : target.data) v = rng.normal();
        auto res = mse_loss(pred, target);
        const double h = 1e-6;
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            Tensor<double> up = pred, dn = pred;
            up.data[i] += h;
            dn.data[i] -= h;
            const double fd = (mse_loss(up, target).loss - mse_loss(dn, target).loss) / (2 * h);
            REQUIRE(res.dprediction.data[i] == Catch::Approx(fd).margin(1e-9));
        }
    }
    SECTION("dims must agree") {
        Tensor<double> c({2, 2});
        CHECK_THROWS_AS(mse_loss(a, c), std::invalid_argument);
    }
}

TEST_CASE("he normal initialization", "[nn]") {
    ModelGraph g;
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.name = "f";
    s.out_features = 2000;
    s.inputs = {0};
    g.add(s);
    Model<double> m(std::move(g), {1, 50});  // fan_in 50, 1e5 samples
    m.init_he_normal(1234);

    double sum = 0.0, sq = 0.0;
    const auto& w = m.weight(1);
    for (double v : w.data) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(w.numel());
    const double mean = sum / n;
    const double stddev = std::sqrt(sq / n - mean * mean);
    const double want = std::sqrt(2.0 / 50.0);
    CHECK(std::abs(stddev - want) / want < 0.02);
    CHECK(std::abs(mean) < 3.0 * want / std::sqrt(n));
    for (double v : m.bias(1).data) REQUIRE(v == 0.0);

    SECTION("same seed reproduces bitwise") {
        Model<double> m2(m.graph(), {1, 50});
        m2.init_he_normal(1234);
        CHECK(m2.weight(1).data == w.data);
    }
}

TEST_CASE("adam updates", "[nn]") {
    SECTION("zero gradient leaves parameters unchanged") {
        Tensor<double> p({3});
        p.data = {1.0, -2.0, 0.5};
        const auto before = p.data;
        Tensor<double> g({3});
        AdamSlot<double> slot;
        adam_step(p, g, slot, 1, 0.001);
        CHECK(p.data == before);
    }
    SECTION("hand-evaluated first step") {
        Tensor<double> p({1});
        Tensor<double> g({1});
        g.data = {0.5};
        AdamSlot<double> slot;
        adam_step(p, g, slot, 1, 0.001);
        CHECK(p.data[0] == Catch::Approx(-0.001 * 0.5 / (0.5 + 1e-8)).epsilon(1e-9));
    }
    SECTION("equal gradients move monotonically downhill") {
        Tensor<double> p({1});
        Tensor<double> g({1});
        g.data = {0.5};
        AdamSlot<double> slot;
        adam_step(p, g, slot, 1, 0.001);
        const double after_one = p.data[0];
        adam_step(p, g, slot, 2, 0.001);
        CHECK(p.data[0] < after_one);
        CHECK(after_one < 0.0);
    }
}

TEST_CASE("learning rate schedule", "[nn]") {
    TrainConfig cfg;
    cfg.base_lr = 0.001;
    cfg.decay_factor = 10.0;
    cfg.decay_every_epochs = 15;
    CHECK(lr_at_epoch(cfg, 0) == 0.001);
    CHECK(lr_at_epoch(cfg, 14) == 0.001);
    CHECK(lr_at_epoch(cfg, 15) == Catch::Approx(0.0001).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 44) == Catch::Approx(0.00001).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at_epoch(cfg, -1), std::invalid_argument);
}
