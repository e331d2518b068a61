#pragma once

#include <cmath>

#include "sino/nn/tensor.hpp"

namespace sino::nn {

template <class T>
struct SoftmaxCeResult {
    double loss = 0.0;
    Tensor<T> probabilities;  // [batch, classes]
    Tensor<T> dlogits;        // (p - onehot) / batch
};

/// Row-stabilized softmax with mean cross entropy over the batch.
template <class T>
SoftmaxCeResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dims[1] < 2)
        throw std::invalid_argument("softmax_cross_entropy: [batch, classes>=2] logits required");
    const int batch = logits.dims[0], classes = logits.dims[1];
    if (static_cast<int>(labels.size()) != batch)
        throw std::invalid_argument("softmax_cross_entropy: one label per row required");

    SoftmaxCeResult<T> res;
    res.probabilities = Tensor<T>({batch, classes});
    res.dlogits = Tensor<T>({batch, classes});
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const int label = labels[b];
        if (label < 0 || label >= classes)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        const T* row = logits.ptr() + static_cast<std::size_t>(b) * classes;
        T mx = row[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        const double log_denom = std::log(denom);
        for (int c = 0; c < classes; ++c) {
            const double p = std::exp(static_cast<double>(row[c] - mx)) / denom;
            res.probabilities.at2(b, c) = static_cast<T>(p);
            res.dlogits.at2(b, c) = static_cast<T>((p - (c == label ? 1.0 : 0.0)) / batch);
        }
        loss += log_denom - static_cast<double>(row[label] - mx);
    }
    res.loss = loss / batch;
    if (!std::isfinite(res.loss)) throw NumericalFailure("softmax_cross_entropy: non-finite loss");
    return res;
}

template <class T>
struct MseResult {
    double loss = 0.0;
    Tensor<T> dprediction;  // 2 (pred - target) / numel
};

/// Mean of squared elementwise differences over all entries.
template <class T>
MseResult<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
    if (!prediction.same_shape(target)) throw std::invalid_argument("mse_loss: dims mismatch");
    MseResult<T> res;
    res.dprediction = Tensor<T>(prediction.dims);
    const double inv_n = 1.0 / static_cast<double>(prediction.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < prediction.numel(); ++i) {
        const double d = static_cast<double>(prediction.data[i]) - static_cast<double>(target.data[i]);
        loss += d * d;
        res.dprediction.data[i] = static_cast<T>(2.0 * d * inv_n);
    }
    res.loss = loss * inv_n;
    if (!std::isfinite(res.loss)) throw NumericalFailure("mse_loss: non-finite loss");
    return res;
}

}  // namespace sino::nn
