#pragma once

#include <map>

#include "sino/nn/graph.hpp"
#include "sino/rng.hpp"

namespace sino::nn {

/// Graph plus parameter and gradient stores, instantiated for a fixed input
/// shape (excluding batch, which may vary).
template <class T>
class Model {
  public:
    Model(ModelGraph graph, std::vector<int> input_dims)
        : graph_(std::move(graph)), input_dims_(std::move(input_dims)) {
        auto probe = input_dims_;
        probe[0] = 1;
        shapes_ = infer_shapes(graph_, probe);
        weights_.resize(graph_.nodes.size());
        biases_.resize(graph_.nodes.size());
        wgrads_.resize(graph_.nodes.size());
        bgrads_.resize(graph_.nodes.size());
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            const auto [w, b] = param_shapes(graph_, static_cast<int>(i), shapes_);
            if (!w.empty()) {
                weights_[i] = Tensor<T>(w);
                biases_[i] = Tensor<T>(b);
                wgrads_[i] = Tensor<T>(w);
                bgrads_[i] = Tensor<T>(b);
            }
        }
    }

    const ModelGraph& graph() const { return graph_; }
    const std::vector<int>& input_dims() const { return input_dims_; }

    /// He-normal weights (fan_in variance scaling), zero biases. Each
    /// parameter tensor draws from its own child stream.
    void init_he_normal(std::uint64_t seed) {
        const std::uint64_t stream = mix_seed(seed ^ 0x48654e6fULL);
        int index = 0;
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            if (weights_[i].numel() == 0) continue;
            const auto& dims = weights_[i].dims;
            std::size_t fan_in = 1;
            for (std::size_t j = 1; j < dims.size(); ++j) fan_in *= static_cast<std::size_t>(dims[j]);
            Rng rng(mix_seed(stream + static_cast<std::uint64_t>(index++)));
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : weights_[i].data) v = static_cast<T>(rng.normal(0.0, stddev));
            biases_[i].fill(T(0));
        }
    }

    void zero_grads() {
        for (auto& g : wgrads_) g.fill(T(0));
        for (auto& g : bgrads_) g.fill(T(0));
    }

    /// Applies fn(name, tensor) over parameters in graph order.
    template <class Fn>
    void for_each_param(Fn&& fn) {
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            if (weights_[i].numel() == 0) continue;
            fn(graph_.nodes[i].name + "/weight", weights_[i]);
            fn(graph_.nodes[i].name + "/bias", biases_[i]);
        }
    }
    template <class Fn>
    void for_each_param_grad(Fn&& fn) {
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            if (weights_[i].numel() == 0) continue;
            fn(weights_[i], wgrads_[i]);
            fn(biases_[i], bgrads_[i]);
        }
    }

    Tensor<T>& weight(int node) { return weights_[node]; }
    Tensor<T>& bias(int node) { return biases_[node]; }
    Tensor<T>& weight_grad(int node) { return wgrads_[node]; }
    Tensor<T>& bias_grad(int node) { return bgrads_[node]; }

    /// Activations and gradients of the last pass, plus reusable scratch;
    /// keep one workspace alive across batches so steady-state training does
    /// not allocate.
    struct Workspace {
        std::vector<Tensor<T>> act;
        std::vector<Tensor<T>> grad;
        std::vector<char> has_grad;
        std::vector<std::vector<int>> argmax;  // per max-pool node
        ConvScratch<T> scratch;
        Tensor<T> accum;  // temporary for fan-out gradient sums
    };

    const Tensor<T>& forward(const Tensor<T>& input, Workspace& ws) {
        if (input.rank() != static_cast<int>(input_dims_.size()))
            throw std::invalid_argument("forward: input rank mismatch");
        for (std::size_t j = 1; j < input_dims_.size(); ++j)
            if (input.dims[j] != input_dims_[j]) throw std::invalid_argument("forward: input dims mismatch");

        const std::size_t n = graph_.nodes.size();
        ws.act.resize(n);
        ws.argmax.resize(n);
        ws.act[0] = input;
        for (std::size_t i = 1; i < n; ++i) {
            const LayerSpec& node = graph_.nodes[i];
            const Tensor<T>& x0 = ws.act[node.inputs.empty() ? 0 : node.inputs[0]];
            Tensor<T>& out = ws.act[i];
            switch (node.kind) {
                case LayerKind::Input:
                    throw std::invalid_argument("forward: interior input node");
                case LayerKind::Conv2d:
                    conv2d_forward_into(x0, weights_[i], biases_[i], node.sh, node.sw, node.padding,
                                        ws.scratch, out);
                    break;
                case LayerKind::MaxPool:
                    pool2d_forward_into(x0, PoolKind::Max, node.kh, node.kw, node.sh, node.sw, ws.argmax[i],
                                        out);
                    break;
                case LayerKind::AvgPool: {
                    std::vector<int> unused;
                    pool2d_forward_into(x0, PoolKind::Avg, node.kh, node.kw, node.sh, node.sw, unused, out);
                    break;
                }
                case LayerKind::GlobalAvgPool:
                    global_avg_pool_forward_into(x0, out);
                    break;
                case LayerKind::Relu:
                    relu_forward_into(x0, out);
                    break;
                case LayerKind::Concat: {
                    const int batch = x0.dims[0];
                    int ch = 0;
                    for (int in : node.inputs) ch += ws.act[in].dims[1];
                    ensure_dims(out, {batch, ch, x0.dims[2], x0.dims[3]});
                    const std::size_t plane = static_cast<std::size_t>(x0.dims[2]) * x0.dims[3];
                    for (int b = 0; b < batch; ++b) {
                        std::size_t dst_c = 0;
                        for (int in : node.inputs) {
                            const Tensor<T>& src = ws.act[in];
                            const std::size_t block = static_cast<std::size_t>(src.dims[1]) * plane;
                            std::copy_n(src.ptr() + static_cast<std::size_t>(b) * block, block,
                                        out.ptr() + (static_cast<std::size_t>(b) * ch + dst_c) * plane);
                            dst_c += src.dims[1];
                        }
                    }
                    break;
                }
                case LayerKind::FullyConnected: {
                    Tensor<T> flat = x0;
                    flat.dims = {x0.dims[0], static_cast<int>(x0.numel()) / x0.dims[0]};
                    fully_connected_forward_into(flat, weights_[i], biases_[i], out);
                    break;
                }
                case LayerKind::Upsample:
                    upsample_forward_into(x0, node.factor, out);
                    break;
                case LayerKind::AddSkip: {
                    const Tensor<T>& x1 = ws.act[node.inputs[1]];
                    if (!x0.same_shape(x1)) throw std::invalid_argument("add_skip: dims mismatch");
                    ensure_dims(out, x0.dims);
                    const std::size_t count = out.numel();
#pragma omp parallel for schedule(static)
                    for (long j = 0; j < static_cast<long>(count); ++j)
                        out.data[j] = x0.data[j] + x1.data[j];
                    break;
                }
            }
        }
        return ws.act[n - 1];
    }

    /// Reverse pass from d(loss)/d(output); parameter gradients accumulate
    /// into the grad store (callers zero_grads() per step).
    void backward(Workspace& ws, const Tensor<T>& dout) {
        const std::size_t n = graph_.nodes.size();
        ws.grad.resize(n);
        ws.has_grad.assign(n, 0);
        ws.grad[n - 1] = dout;
        ws.has_grad[n - 1] = 1;

        // writes g into the target gradient, or adds when already present
        auto sink = [&](int target) -> Tensor<T>& {
            if (ws.has_grad[target]) return ws.accum;
            return ws.grad[target];
        };
        auto commit = [&](int target) {
            if (ws.has_grad[target]) {
                Tensor<T>& dst = ws.grad[target];
                const std::size_t count = dst.numel();
#pragma omp parallel for schedule(static)
                for (long j = 0; j < static_cast<long>(count); ++j) dst.data[j] += ws.accum.data[j];
            } else {
                ws.has_grad[target] = 1;
            }
        };

        for (std::size_t i = n - 1; i >= 1; --i) {
            if (!ws.has_grad[i]) continue;  // node not on a used path
            const LayerSpec& node = graph_.nodes[i];
            const Tensor<T>& dy = ws.grad[i];
            const Tensor<T>& x0 = ws.act[node.inputs.empty() ? 0 : node.inputs[0]];
            const int t0 = node.inputs.empty() ? 0 : node.inputs[0];
            switch (node.kind) {
                case LayerKind::Input:
                    break;
                case LayerKind::Conv2d:
                    conv2d_backward_into(x0, weights_[i], dy, node.sh, node.sw, node.padding, wgrads_[i],
                                         bgrads_[i], ws.scratch, sink(t0));
                    commit(t0);
                    break;
                case LayerKind::MaxPool:
                    pool2d_backward_into(x0, dy, PoolKind::Max, node.kh, node.kw, node.sh, node.sw,
                                         ws.argmax[i], sink(t0));
                    commit(t0);
                    break;
                case LayerKind::AvgPool:
                    pool2d_backward_into(x0, dy, PoolKind::Avg, node.kh, node.kw, node.sh, node.sw, {},
                                         sink(t0));
                    commit(t0);
                    break;
                case LayerKind::GlobalAvgPool:
                    global_avg_pool_backward_into(x0, dy, sink(t0));
                    commit(t0);
                    break;
                case LayerKind::Relu:
                    relu_backward_into(x0, dy, sink(t0));
                    commit(t0);
                    break;
                case LayerKind::Concat: {
                    const int batch = dy.dims[0];
                    const std::size_t plane = static_cast<std::size_t>(dy.dims[2]) * dy.dims[3];
                    std::size_t src_c = 0;
                    for (int in : node.inputs) {
                        const Tensor<T>& xin = ws.act[in];
                        Tensor<T>& g = sink(in);
                        ensure_dims(g, xin.dims);
                        const std::size_t block = static_cast<std::size_t>(xin.dims[1]) * plane;
                        for (int b = 0; b < batch; ++b)
                            std::copy_n(dy.ptr() + (static_cast<std::size_t>(b) * dy.dims[1] + src_c) * plane,
                                        block, g.ptr() + static_cast<std::size_t>(b) * block);
                        src_c += xin.dims[1];
                        commit(in);
                    }
                    break;
                }
                case LayerKind::FullyConnected: {
                    Tensor<T> flat = x0;
                    flat.dims = {x0.dims[0], static_cast<int>(x0.numel()) / x0.dims[0]};
                    Tensor<T>& g = sink(t0);
                    fully_connected_backward_into(flat, weights_[i], dy, wgrads_[i], bgrads_[i], g);
                    g.dims = x0.dims;
                    commit(t0);
                    break;
                }
                case LayerKind::Upsample:
                    upsample_backward_into(x0, dy, node.factor, sink(t0));
                    commit(t0);
                    break;
                case LayerKind::AddSkip:
                    for (int slot = 0; slot < 2; ++slot) {
                        const int target = node.inputs[slot];
                        Tensor<T>& g = sink(target);
                        ensure_dims(g, dy.dims);
                        std::copy(dy.data.begin(), dy.data.end(), g.data.begin());
                        commit(target);
                    }
                    break;
            }
        }
    }

  private:
    ModelGraph graph_;
    std::vector<int> input_dims_;
    std::vector<std::vector<int>> shapes_;
    std::vector<Tensor<T>> weights_, biases_, wgrads_, bgrads_;
};

}  // namespace sino::nn
