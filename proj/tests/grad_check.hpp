#pragma once

// Central finite-difference gradient checking against the analytic backward
// pass. The scalar objective is a fixed random weighting of the model
// output, which exercises every output element.

#include <catch2/catch_amalgamated.hpp>

#include "sino/nn/model.hpp"
#include "sino/rng.hpp"

namespace gradcheck {

using sino::Rng;
using sino::nn::Model;
using sino::nn::Tensor;

inline void fill_random(Tensor<double>& t, Rng& rng, double scale = 1.0, double offset = 0.0) {
    for (auto& v : t.data) v = rng.normal() * scale + offset;
}

struct Objective {
    Tensor<double> weights;  // same shape as the model output

    double value(const Tensor<double>& out) const {
        double s = 0.0;
        for (std::size_t i = 0; i < out.numel(); ++i) s += weights.data[i] * out.data[i];
        return s;
    }
    Tensor<double> gradient() const { return weights; }
};

/// Relative error with a floor so near-zero pairs compare absolutely.
inline double rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-4});
    return std::abs(got - want) / denom;
}

/// Checks d(objective)/d(input) and d(objective)/d(params) by central
/// differences with step 1e-5; requires relative error < 1e-6.
inline void check_model(Model<double>& model, Tensor<double> input, std::uint64_t seed,
                        double tolerance = 1e-6) {
    Model<double>::Workspace ws;
    const Tensor<double>& out0 = model.forward(input, ws);

    Rng rng(sino::mix_seed(seed));
    Objective obj;
    obj.weights = Tensor<double>(out0.dims);
    fill_random(obj.weights, rng);

    model.zero_grads();
    model.backward(ws, obj.gradient());
    // snapshot analytic gradients
    std::vector<Tensor<double>> analytic_w;
    model.for_each_param_grad([&](Tensor<double>&, Tensor<double>& g) { analytic_w.push_back(g); });
    const Tensor<double> analytic_x = ws.grad[0];

    const double h = 1e-5;
    auto eval = [&](const Tensor<double>& x) {
        Model<double>::Workspace w2;
        return obj.value(model.forward(x, w2));
    };

    // input gradient
    REQUIRE(analytic_x.numel() == input.numel());
    for (std::size_t i = 0; i < input.numel(); ++i) {
        const double keep = input.data[i];
        input.data[i] = keep + h;
        const double up = eval(input);
        input.data[i] = keep - h;
        const double dn = eval(input);
        input.data[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        REQUIRE(rel_err(analytic_x.data[i], fd) < tolerance);
    }
    // parameter gradients
    int slot = 0;
    model.for_each_param_grad([&](Tensor<double>& param, Tensor<double>&) {
        const Tensor<double>& analytic = analytic_w[slot++];
        for (std::size_t i = 0; i < param.numel(); ++i) {
            const double keep = param.data[i];
            param.data[i] = keep + h;
            const double up = eval(input);
            param.data[i] = keep - h;
            const double dn = eval(input);
            param.data[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            REQUIRE(rel_err(analytic.data[i], fd) < tolerance);
        }
    });
}

/// Random parameters away from zero kinks, then the full check.
inline void randomize_and_check(Model<double>& model, const std::vector<int>& input_dims,
                                std::uint64_t seed) {
    Rng rng(sino::mix_seed(seed ^ 0xf00d));
    model.for_each_param([&](const std::string&, Tensor<double>& p) { fill_random(p, rng, 0.35); });
    Tensor<double> input(input_dims);
    fill_random(input, rng, 1.0, 0.05);
    check_model(model, std::move(input), seed);
}

}  // namespace gradcheck
