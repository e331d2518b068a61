#pragma once

#include <algorithm>
#include <utility>

#include "sino/nn/loss.hpp"
#include "sino/nn/model.hpp"
#include "sino/nn/optim.hpp"

namespace sino::nn {

/// Supervised samples: classification sets labels, regression sets targets.
template <class T>
struct Dataset {
    std::vector<Tensor<T>> inputs;  // each [c, h, w]
    std::vector<int> labels;
    std::vector<Tensor<T>> targets;

    std::size_t size() const { return inputs.size(); }
    bool regression() const { return !targets.empty(); }
};

template <class T>
Tensor<T> stack_batch(const Dataset<T>& data, const std::vector<long>& order, std::size_t first,
                      std::size_t count) {
    const auto& proto = data.inputs[order[first]];
    std::vector<int> dims = {static_cast<int>(count)};
    dims.insert(dims.end(), proto.dims.begin(), proto.dims.end());
    Tensor<T> batch(dims);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& sample = data.inputs[order[first + i]];
        std::copy_n(sample.ptr(), sample.numel(), batch.ptr() + i * sample.numel());
    }
    return batch;
}

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

template <class T>
struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

namespace detail {

template <class T>
double batch_loss(Model<T>& model, typename Model<T>::Workspace& ws, const Tensor<T>& out,
                  const Dataset<T>& data, const std::vector<long>& order, std::size_t first,
                  std::size_t count, LossKind kind, bool backprop) {
    if (kind == LossKind::SoftmaxCe) {
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[order[first + i]];
        auto res = softmax_cross_entropy(out, labels);
        if (backprop) model.backward(ws, res.dlogits);
        return res.loss;
    }
    const auto& proto = data.targets[order[first]];
    std::vector<int> dims = {static_cast<int>(count)};
    dims.insert(dims.end(), proto.dims.begin(), proto.dims.end());
    Tensor<T> target(dims);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& t = data.targets[order[first + i]];
        std::copy_n(t.ptr(), t.numel(), target.ptr() + i * t.numel());
    }
    auto res = mse_loss(out, target);
    if (backprop) model.backward(ws, res.dprediction);
    return res.loss;
}

}  // namespace detail

/// Mean loss over a dataset (forward only).
template <class T>
double evaluate_loss(Model<T>& model, const Dataset<T>& data, LossKind kind, int batch_size = 32) {
    typename Model<T>::Workspace ws;
    std::vector<long> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
    double total = 0.0;
    for (std::size_t first = 0; first < data.size(); first += batch_size) {
        const std::size_t count = std::min<std::size_t>(batch_size, data.size() - first);
        const auto& out = model.forward(stack_batch(data, order, first, count), ws);
        total += detail::batch_loss(model, ws, out, data, order, first, count, kind, false) *
                 static_cast<double>(count);
    }
    return total / static_cast<double>(data.size());
}

/// Mini-batch Adam loop with the step learning-rate schedule and epoch
/// shuffling from the config seed. The model keeps the weights of the epoch
/// with the lowest validation loss.
template <class T>
TrainResult<T> train_model(Model<T>& model, const Dataset<T>& train, const Dataset<T>& val,
                           const TrainConfig& config) {
    config.validate();
    if (train.size() == 0 || val.size() == 0)
        throw std::invalid_argument("train_model: datasets must be nonempty");

    AdamState<T> adam;
    int n_params = 0;
    model.for_each_param_grad([&](Tensor<T>&, Tensor<T>&) { ++n_params; });
    adam.slots.resize(n_params);

    TrainResult<T> result;
    std::vector<Tensor<T>> best;
    typename Model<T>::Workspace ws;
    const std::uint64_t shuffle_stream = mix_seed(config.seed ^ 0x53485546ULL);

    std::vector<long> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        Rng rng(mix_seed(shuffle_stream + static_cast<std::uint64_t>(epoch)));
        for (long i = static_cast<long>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);

        double train_loss = 0.0;
        for (std::size_t first = 0; first < train.size(); first += config.batch_size) {
            const std::size_t count = std::min<std::size_t>(config.batch_size, train.size() - first);
            const auto& out = model.forward(stack_batch(train, order, first, count), ws);
            model.zero_grads();
            train_loss += detail::batch_loss(model, ws, out, train, order, first, count, config.loss, true) *
                          static_cast<double>(count);
            ++adam.step;
            int slot = 0;
            model.for_each_param_grad([&](Tensor<T>& param, Tensor<T>& grad) {
                adam_step(param, grad, adam.slots[slot++], adam.step, lr, adam.beta1, adam.beta2,
                          adam.epsilon);
            });
        }
        train_loss /= static_cast<double>(train.size());
        const double val_loss = evaluate_loss(model, val, config.loss, config.batch_size);
        result.log.push_back({epoch, lr, train_loss, val_loss});

        if (result.best_epoch < 0 || val_loss < result.best_val_loss) {
            result.best_epoch = epoch;
            result.best_val_loss = val_loss;
            best.clear();
            model.for_each_param([&](const std::string&, Tensor<T>& p) { best.push_back(p); });
        }
    }

    std::size_t k = 0;
    model.for_each_param([&](const std::string&, Tensor<T>& p) { p = best[k++]; });
    return result;
}

/// Forward pass only. Classification outputs row-normalized probabilities,
/// regression the raw output.
template <class T>
Tensor<T> predict(Model<T>& model, const Tensor<T>& batch, bool classification) {
    typename Model<T>::Workspace ws;
    Tensor<T> out = model.forward(batch, ws);
    if (!out.all_finite()) throw NumericalFailure("predict: non-finite output");
    if (!classification) return out;
    const int rows = out.dims[0], cols = out.dims[1];
    for (int r = 0; r < rows; ++r) {
        T* row = out.ptr() + static_cast<std::size_t>(r) * cols;
        T mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        for (int c = 0; c < cols; ++c)
            row[c] = static_cast<T>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    }
    return out;
}

}  // namespace sino::nn
