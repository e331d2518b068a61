#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "sino/nn/ops.hpp"

namespace sino::nn {

enum class LayerKind {
    Input,
    Conv2d,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Relu,
    Concat,
    FullyConnected,
    Upsample,
    AddSkip,
};

/// One node of the layer DAG. Only the fields relevant to `kind` are used.
struct LayerSpec {
    LayerKind kind = LayerKind::Input;
    std::string name;
    std::vector<int> inputs;  // node ids, all smaller than this node's id

    int out_channels = 0;  // conv
    int kh = 1, kw = 1;    // conv / pool kernel
    int sh = 1, sw = 1;    // conv / pool stride
    Padding padding = Padding::Valid;
    int out_features = 0;  // fully connected
    int factor = 2;        // upsample
};

/// Layer DAG in topological order; node 0 is the input placeholder and the
/// last node is the output.
struct ModelGraph {
    std::vector<LayerSpec> nodes;

    ModelGraph() {
        LayerSpec input;
        input.kind = LayerKind::Input;
        input.name = "input";
        nodes.push_back(input);
    }

    int add(LayerSpec spec) {
        for (int i : spec.inputs)
            if (i < 0 || i >= static_cast<int>(nodes.size()))
                throw std::invalid_argument("ModelGraph: edge to unknown node");
        nodes.push_back(std::move(spec));
        return static_cast<int>(nodes.size()) - 1;
    }
    int output() const { return static_cast<int>(nodes.size()) - 1; }
};

/// Per-node output dims for a given input shape (batch, ch, h, w). Throws on
/// any inconsistent edge, so builders validate by construction.
inline std::vector<std::vector<int>> infer_shapes(const ModelGraph& graph, const std::vector<int>& input_dims) {
    std::vector<std::vector<int>> shapes(graph.nodes.size());
    shapes[0] = input_dims;
    for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
        const LayerSpec& n = graph.nodes[i];
        auto in = [&](int slot) -> const std::vector<int>& { return shapes[n.inputs.at(slot)]; };
        switch (n.kind) {
            case LayerKind::Input:
                throw std::invalid_argument("infer_shapes: interior input node");
            case LayerKind::Conv2d: {
                const auto& s = in(0);
                if (s.size() != 4) throw std::invalid_argument(n.name + ": conv needs rank-4 input");
                const auto d = conv_dims(s[2], s[3], n.kh, n.kw, n.sh, n.sw, n.padding);
                shapes[i] = {s[0], n.out_channels, d.out_h, d.out_w};
                break;
            }
            case LayerKind::MaxPool:
            case LayerKind::AvgPool: {
                const auto& s = in(0);
                const auto d = conv_dims(s[2], s[3], n.kh, n.kw, n.sh, n.sw, Padding::Valid);
                shapes[i] = {s[0], s[1], d.out_h, d.out_w};
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const auto& s = in(0);
                if (s.size() != 4) throw std::invalid_argument(n.name + ": gap needs rank-4 input");
                shapes[i] = {s[0], s[1]};
                break;
            }
            case LayerKind::Relu:
                shapes[i] = in(0);
                break;
            case LayerKind::Concat: {
                if (n.inputs.empty()) throw std::invalid_argument(n.name + ": concat needs inputs");
                auto s = in(0);
                for (std::size_t j = 1; j < n.inputs.size(); ++j) {
                    const auto& o = shapes[n.inputs[j]];
                    if (o.size() != 4 || s.size() != 4 || o[0] != s[0] || o[2] != s[2] || o[3] != s[3])
                        throw std::invalid_argument(n.name + ": concat dims mismatch");
                    s[1] += o[1];
                }
                shapes[i] = s;
                break;
            }
            case LayerKind::FullyConnected: {
                const auto& s = in(0);
                int features = 1;
                for (std::size_t j = 1; j < s.size(); ++j) features *= s[j];
                shapes[i] = {s[0], n.out_features};
                break;
            }
            case LayerKind::Upsample: {
                const auto& s = in(0);
                shapes[i] = {s[0], s[1], s[2] * n.factor, s[3] * n.factor};
                break;
            }
            case LayerKind::AddSkip: {
                const auto& a = in(0);
                const auto& b = in(1);
                if (a != b) throw std::invalid_argument(n.name + ": add_skip dims mismatch");
                shapes[i] = a;
                break;
            }
        }
    }
    return shapes;
}

/// Parameter shapes per node given the input dims: {weight dims, bias dims}
/// or empty for parameterless nodes.
inline std::pair<std::vector<int>, std::vector<int>> param_shapes(const ModelGraph& graph, int node,
                                                                  const std::vector<std::vector<int>>& shapes) {
    const LayerSpec& n = graph.nodes[node];
    if (n.kind == LayerKind::Conv2d) {
        const int in_c = shapes[n.inputs[0]][1];
        return {{n.out_channels, in_c, n.kh, n.kw}, {n.out_channels}};
    }
    if (n.kind == LayerKind::FullyConnected) {
        const auto& s = shapes[n.inputs[0]];
        int features = 1;
        for (std::size_t j = 1; j < s.size(); ++j) features *= static_cast<int>(s[j]);
        return {{n.out_features, features}, {n.out_features}};
    }
    return {{}, {}};
}

inline std::size_t param_count(const ModelGraph& graph, const std::vector<int>& input_dims) {
    const auto shapes = infer_shapes(graph, input_dims);
    std::size_t total = 0;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const auto [w, b] = param_shapes(graph, static_cast<int>(i), shapes);
        if (!w.empty()) total += Tensor<double>::numel_of(w) + Tensor<double>::numel_of(b);
    }
    return total;
}

}  // namespace sino::nn
