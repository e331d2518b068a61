#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sino::nn {

/// Dense row-major array in (batch, channel, height, width) convention for
/// rank 4, or any lower rank. T is double in the reference/test mode and
/// float in the fast mode.
template <class T>
struct Tensor {
    std::vector<int> dims;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
        data.assign(numel_of(dims), T(0));
    }

    static std::size_t numel_of(const std::vector<int>& d) {
        std::size_t n = 1;
        for (int v : d) {
            if (v <= 0) throw std::invalid_argument("Tensor: dims must be positive");
            n *= static_cast<std::size_t>(v);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(dims.size()); }

    int dim(int i) const { return dims[i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    /// rank-4 accessor
    T& at4(int b, int c, int h, int w) {
        return data[((static_cast<std::size_t>(b) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }
    T at4(int b, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(b) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }
    /// rank-2 accessor
    T& at2(int r, int c) { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
    T at2(int r, int c) const { return data[static_cast<std::size_t>(r) * dims[1] + c]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }
};

inline std::string shape_string(const std::vector<int>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

/// Raised when a forward/backward pass or a loss produces NaN/Inf.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sino::nn
