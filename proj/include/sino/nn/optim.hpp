#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sino/nn/tensor.hpp"

namespace sino::nn {

enum class LossKind { SoftmaxCe, Mse };

struct TrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double base_lr = 1e-3;
    double decay_factor = 10.0;
    int decay_every_epochs = 15;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::SoftmaxCe;

    void validate() const {
        if (epochs < 1 || batch_size < 1 || base_lr < 0.0 || decay_every_epochs < 1)
            throw std::invalid_argument("TrainConfig: fields must be positive");
        if (decay_factor <= 1.0) throw std::invalid_argument("TrainConfig: decay_factor must exceed 1");
    }
};

/// Step schedule: base_lr / decay_factor^floor(epoch / decay_every_epochs).
inline double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: epoch must be >= 0");
    return config.base_lr / std::pow(config.decay_factor, epoch / config.decay_every_epochs);
}

/// First/second moment accumulators mirroring one parameter tensor.
template <class T>
struct AdamSlot {
    Tensor<T> m, v;
};

template <class T>
struct AdamState {
    long step = 0;  // t, shared across parameters
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::vector<AdamSlot<T>> slots;
};

/// Canonical bias-corrected Adam update for one parameter tensor.
template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamSlot<T>& slot, long t, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
    if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: dims mismatch");
    if (slot.m.numel() == 0) {
        slot.m = Tensor<T>(param.dims);
        slot.v = Tensor<T>(param.dims);
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        const double m = beta1 * static_cast<double>(slot.m.data[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(slot.v.data[i]) + (1.0 - beta2) * g * g;
        slot.m.data[i] = static_cast<T>(m);
        slot.v.data[i] = static_cast<T>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        param.data[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + epsilon));
    }
}

}  // namespace sino::nn
