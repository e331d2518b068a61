#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sino {

/// Value domain of an image: Hounsfield units, scaled linear attenuation
/// (water = 1, air = 0), or an 8-bit windowed rendering stored as integers
/// in [0, 255].
enum class ValueKind { HU, LAC, Window8 };

inline const char* to_string(ValueKind k) {
    switch (k) {
        case ValueKind::HU: return "hu";
        case ValueKind::LAC: return "lac";
        case ValueKind::Window8: return "window8";
    }
    return "?";
}

/// Square scalar field on a unit pixel lattice.
struct ImageGrid {
    int side = 0;
    ValueKind kind = ValueKind::HU;
    std::vector<double> data;  // row-major, side*side

    ImageGrid() = default;
    ImageGrid(int side_, ValueKind kind_, double fill = 0.0)
        : side(side_), kind(kind_), data(static_cast<std::size_t>(side_) * side_, fill) {
        if (side_ <= 0) throw std::invalid_argument("ImageGrid: side must be positive");
    }

    double& at(int row, int col) { return data[static_cast<std::size_t>(row) * side + col]; }
    double at(int row, int col) const { return data[static_cast<std::size_t>(row) * side + col]; }
    std::size_t size() const { return data.size(); }
};

}  // namespace sino
