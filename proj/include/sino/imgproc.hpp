#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sino/image.hpp"

namespace sino::img {

/// Diagnostic display window: a linear HU band centered at `level` with
/// total width `width`.
struct WindowSetting {
    double level = 0.0;
    double width = 1.0;
};

inline constexpr WindowSetting kBrainWindow{50.0, 100.0};
inline constexpr WindowSetting kAbdomenWindow{40.0, 400.0};

/// HU -> scaled LAC with water = 1 and air = 0; negative attenuation is
/// clamped to zero.
inline ImageGrid hu_to_lac(const ImageGrid& grid) {
    if (grid.kind != ValueKind::HU) throw std::domain_error("hu_to_lac: input must be HU");
    ImageGrid out = grid;
    out.kind = ValueKind::LAC;
    for (auto& v : out.data) v = std::max(0.0, (v + 1000.0) / 1000.0);
    return out;
}

/// Inverse of hu_to_lac on the non-clamped domain.
inline ImageGrid lac_to_hu(const ImageGrid& grid) {
    if (grid.kind != ValueKind::LAC) throw std::domain_error("lac_to_hu: input must be LAC");
    ImageGrid out = grid;
    out.kind = ValueKind::HU;
    for (auto& v : out.data) v = v * 1000.0 - 1000.0;
    return out;
}

/// Half-up rounding of v*255 after clamping v to [0, 1].
inline double quantize8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return std::floor(v * 255.0 + 0.5);
}

/// Windowed 8-bit rendering: (hu - level)/width + 1/2, clamped, quantized.
inline ImageGrid apply_window(const ImageGrid& grid, const WindowSetting& w) {
    if (grid.kind != ValueKind::HU) throw std::domain_error("apply_window: input must be HU");
    if (w.width <= 0.0) throw std::invalid_argument("apply_window: width must be positive");
    ImageGrid out = grid;
    out.kind = ValueKind::Window8;
    for (auto& v : out.data) v = quantize8((v - w.level) / w.width + 0.5);
    return out;
}

/// Windowed grid re-embedded into attenuation: the 8-bit rendering is mapped
/// back onto the window's HU span and converted to LAC. Projecting this grid
/// yields windowed sinograms.
inline ImageGrid windowed_lac(const ImageGrid& grid, const WindowSetting& w) {
    ImageGrid v8 = apply_window(grid, w);
    ImageGrid hu(grid.side, ValueKind::HU);
    for (std::size_t i = 0; i < v8.data.size(); ++i)
        hu.data[i] = w.level + (v8.data[i] / 255.0 - 0.5) * w.width;
    return hu_to_lac(hu);
}

}  // namespace sino::img
