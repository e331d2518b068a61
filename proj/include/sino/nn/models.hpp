#pragma once

#include <cmath>
#include <string>

#include "sino/nn/graph.hpp"

namespace sino::nn {

namespace detail {

inline int scaled(int base, double width_multiplier) {
    return std::max(1, static_cast<int>(std::lround(base * width_multiplier)));
}

struct GraphBuilder {
    ModelGraph graph;

    int conv(const std::string& name, int input, int out_c, int kh, int kw, int sh = 1, int sw = 1,
             Padding pad = Padding::Same) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.name = name;
        s.inputs = {input};
        s.out_channels = out_c;
        s.kh = kh;
        s.kw = kw;
        s.sh = sh;
        s.sw = sw;
        s.padding = pad;
        return graph.add(s);
    }
    int relu(const std::string& name, int input) {
        LayerSpec s;
        s.kind = LayerKind::Relu;
        s.name = name;
        s.inputs = {input};
        return graph.add(s);
    }
    int conv_relu(const std::string& name, int input, int out_c, int kh, int kw, int sh = 1, int sw = 1) {
        return relu(name + "/relu", conv(name, input, out_c, kh, kw, sh, sw));
    }
    int avg_pool(const std::string& name, int input, int k, int stride) {
        LayerSpec s;
        s.kind = LayerKind::AvgPool;
        s.name = name;
        s.inputs = {input};
        s.kh = s.kw = k;
        s.sh = s.sw = stride;
        return graph.add(s);
    }
    int max_pool(const std::string& name, int input, int k, int stride) {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.name = name;
        s.inputs = {input};
        s.kh = s.kw = k;
        s.sh = s.sw = stride;
        return graph.add(s);
    }
    int concat(const std::string& name, std::vector<int> inputs) {
        LayerSpec s;
        s.kind = LayerKind::Concat;
        s.name = name;
        s.inputs = std::move(inputs);
        return graph.add(s);
    }
    int gap(const std::string& name, int input) {
        LayerSpec s;
        s.kind = LayerKind::GlobalAvgPool;
        s.name = name;
        s.inputs = {input};
        return graph.add(s);
    }
    int fc(const std::string& name, int input, int out_features) {
        LayerSpec s;
        s.kind = LayerKind::FullyConnected;
        s.name = name;
        s.inputs = {input};
        s.out_features = out_features;
        return graph.add(s);
    }
    int upsample(const std::string& name, int input, int factor) {
        LayerSpec s;
        s.kind = LayerKind::Upsample;
        s.name = name;
        s.inputs = {input};
        s.factor = factor;
        return graph.add(s);
    }
    int add_skip(const std::string& name, int a, int b) {
        LayerSpec s;
        s.kind = LayerKind::AddSkip;
        s.name = name;
        s.inputs = {a, b};
        return graph.add(s);
    }
};

/// Six-branch module: every branch is a 1x1 bottleneck followed by its
/// kernel, two of them tall (projection aggregating), two wide (detector
/// aggregating). Branch outputs concatenate.
inline int inception_module(GraphBuilder& g, const std::string& prefix, int input, int bottleneck,
                            int branch_out) {
    static constexpr std::array<std::array<int, 2>, 6> kKernels = {
        {{1, 1}, {3, 3}, {5, 1}, {7, 3}, {1, 5}, {3, 7}}};
    std::vector<int> branches;
    for (const auto& k : kKernels) {
        const std::string tag = prefix + "/br" + std::to_string(k[0]) + "x" + std::to_string(k[1]);
        const int reduce = g.conv_relu(tag + "/reduce", input, bottleneck, 1, 1);
        branches.push_back(g.conv_relu(tag + "/conv", reduce, branch_out, k[0], k[1]));
    }
    return g.concat(prefix + "/cat", branches);
}

}  // namespace detail

/// Sinogram classifier: stem conv (stride 2), three Dense-Inception blocks
/// separated by transitions, GAP head. Rectangular kernels are the point:
/// tall branches mix across projection views, wide ones across detectors.
inline ModelGraph build_sinonet(int input_h, int input_w, int n_classes, double width_multiplier = 1.0) {
    if (input_h < 16 || input_w < 16)
        throw std::invalid_argument("build_sinonet: input too small for three stride-2 reductions");
    if (n_classes < 2) throw std::invalid_argument("build_sinonet: need at least 2 classes");

    const int c0 = detail::scaled(16, width_multiplier);
    const int bottleneck = detail::scaled(8, width_multiplier);
    const int branch_out = detail::scaled(8, width_multiplier);

    detail::GraphBuilder g;
    int node = g.conv_relu("stem", 0, c0, 3, 3, 2, 2);
    for (int block = 1; block <= 3; ++block) {
        const std::string prefix = "b" + std::to_string(block);
        // Dense-Inception: the second module sees the block input
        // concatenated with the first module's output
        const int m1 = detail::inception_module(g, prefix + "/m1", node, bottleneck, branch_out);
        const int dense = g.concat(prefix + "/dense", {node, m1});
        const int m2 = detail::inception_module(g, prefix + "/m2", dense, bottleneck, branch_out);
        // Transition: 1x1 conv halving channels, then 2x2 average pooling
        const int reduced = g.conv_relu(prefix + "/t/reduce", m2, 3 * branch_out, 1, 1);
        node = g.avg_pool(prefix + "/t/pool", reduced, 2, 2);
    }
    const int pooled = g.gap("gap", node);
    g.fc("head", pooled, n_classes);

    infer_shapes(g.graph, {1, 1, input_h, input_w});  // validates spatial sizes
    return g.graph;
}

/// Plain square-kernel CNN with a parameter budget matching build_sinonet at
/// default width; the image-space counterpart in every comparison.
inline ModelGraph build_baseline_cnn(int input_h, int input_w, int n_classes) {
    if (input_h < 16 || input_w < 16)
        throw std::invalid_argument("build_baseline_cnn: input too small for three stride-2 reductions");
    if (n_classes < 2) throw std::invalid_argument("build_baseline_cnn: need at least 2 classes");

    detail::GraphBuilder g;
    int node = g.conv_relu("s1/c1", 0, 16, 3, 3, 2, 2);
    node = g.conv_relu("s1/c2", node, 16, 3, 3);
    node = g.max_pool("s1/pool", node, 2, 2);
    node = g.conv_relu("s2/c1", node, 28, 3, 3);
    node = g.conv_relu("s2/c2", node, 28, 3, 3);
    node = g.max_pool("s2/pool", node, 2, 2);
    node = g.conv_relu("s3/c1", node, 44, 3, 3);
    node = g.conv_relu("s3/c2", node, 44, 3, 3);
    const int pooled = g.gap("gap", node);
    g.fc("head", pooled, n_classes);

    infer_shapes(g.graph, {1, 1, input_h, input_w});
    return g.graph;
}

/// Three-level U-net with a global additive skip: maps artifact-laden
/// reconstructions to clean ones, trained by MSE regression.
inline ModelGraph build_fbpconvnet(int side) {
    if (side < 16 || side % 8 != 0)
        throw std::invalid_argument("build_fbpconvnet: side must be a multiple of 8 (and >= 16)");

    detail::GraphBuilder g;
    const int c1 = 10, c2 = 20, c3 = 40, c4 = 80;
    int e1 = g.conv_relu("enc1/c1", 0, c1, 3, 3);
    e1 = g.conv_relu("enc1/c2", e1, c1, 3, 3);
    int node = g.max_pool("enc1/pool", e1, 2, 2);
    int e2 = g.conv_relu("enc2/c1", node, c2, 3, 3);
    e2 = g.conv_relu("enc2/c2", e2, c2, 3, 3);
    node = g.max_pool("enc2/pool", e2, 2, 2);
    int e3 = g.conv_relu("enc3/c1", node, c3, 3, 3);
    e3 = g.conv_relu("enc3/c2", e3, c3, 3, 3);
    node = g.max_pool("enc3/pool", e3, 2, 2);
    node = g.conv_relu("mid/c1", node, c4, 3, 3);
    node = g.conv_relu("mid/c2", node, c4, 3, 3);

    node = g.upsample("dec3/up", node, 2);
    node = g.concat("dec3/cat", {node, e3});
    node = g.conv_relu("dec3/c1", node, c3, 3, 3);
    node = g.conv_relu("dec3/c2", node, c3, 3, 3);
    node = g.upsample("dec2/up", node, 2);
    node = g.concat("dec2/cat", {node, e2});
    node = g.conv_relu("dec2/c1", node, c2, 3, 3);
    node = g.conv_relu("dec2/c2", node, c2, 3, 3);
    node = g.upsample("dec1/up", node, 2);
    node = g.concat("dec1/cat", {node, e1});
    node = g.conv_relu("dec1/c1", node, c1, 3, 3);
    node = g.conv_relu("dec1/c2", node, c1, 3, 3);
    const int residual = g.conv("out", node, 1, 1, 1);
    g.add_skip("residual", residual, 0);

    infer_shapes(g.graph, {1, 1, side, side});
    return g.graph;
}

}  // namespace sino::nn
