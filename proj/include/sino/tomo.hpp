#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sino/fft.hpp"
#include "sino/image.hpp"

namespace sino::tomo {

/// Detector count that covers the full diagonal of an image_side-pixel
/// square with unit detector spacing, with one center bin and a margin bin
/// on each end. Yields 729 for 512-pixel images and 185 for 128.
inline int canonical_detector_count(int image_side) {
    if (image_side < 2) throw std::invalid_argument("canonical_detector_count: image_side must be >= 2");
    const int m = image_side - (image_side - 1) / 2 - 1;
    return 2 * static_cast<int>(std::ceil(std::hypot(static_cast<double>(m), static_cast<double>(m)))) + 3;
}

/// Parallel-beam scan description. Angles are uniform on [0, angle_span),
/// half-open, so a half rotation never duplicates the 0-degree view.
struct ScanGeometry {
    int n_views = 0;
    double angle_span = std::numbers::pi;
    int n_detectors = 0;
    double detector_spacing = 1.0;
    int image_side = 0;

    static ScanGeometry canonical(int image_side, int n_views) {
        if (n_views < 1) throw std::invalid_argument("ScanGeometry: n_views must be >= 1");
        ScanGeometry g;
        g.n_views = n_views;
        g.n_detectors = canonical_detector_count(image_side);
        g.image_side = image_side;
        return g;
    }

    double angle(int view) const { return angle_span * view / n_views; }
    /// Signed offset of detector bin d from the rotation center.
    double detector_offset(int d) const {
        return (d - (n_detectors - 1) / 2.0) * detector_spacing;
    }
};

/// Line-integral array: rows are projection views, columns are detector bins
/// ordered by increasing signed offset.
struct Sinogram {
    ScanGeometry geometry;
    std::vector<double> data;  // n_views * n_detectors, row-major

    Sinogram() = default;
    explicit Sinogram(const ScanGeometry& g, double fill = 0.0)
        : geometry(g), data(static_cast<std::size_t>(g.n_views) * g.n_detectors, fill) {}

    double& at(int view, int det) { return data[static_cast<std::size_t>(view) * geometry.n_detectors + det]; }
    double at(int view, int det) const { return data[static_cast<std::size_t>(view) * geometry.n_detectors + det]; }
    const double* row(int view) const { return data.data() + static_cast<std::size_t>(view) * geometry.n_detectors; }
    double* row(int view) { return data.data() + static_cast<std::size_t>(view) * geometry.n_detectors; }
};

/// Pixel-driven parallel-beam projection: each pixel center is projected
/// onto the detector axis at t = x*cos + y*sin (offsets from the image
/// center) and its value is split between the two nearest bins by linear
/// interpolation. Out-of-range mass is dropped.
inline Sinogram radon(const ImageGrid& image, const ScanGeometry& geometry) {
    if (image.kind != ValueKind::LAC) throw std::domain_error("radon: image must be LAC");
    if (image.side != geometry.image_side) throw std::invalid_argument("radon: image side does not match geometry");

    const int n = image.side;
    const int nd = geometry.n_detectors;
    const double center_pix = (n - 1) / 2.0;
    const double center_det = (nd - 1) / 2.0;
    const double inv_spacing = 1.0 / geometry.detector_spacing;
    Sinogram sino(geometry);

#pragma omp parallel for schedule(static)
    for (int k = 0; k < geometry.n_views; ++k) {
        const double c = std::cos(geometry.angle(k));
        const double s = std::sin(geometry.angle(k));
        double* out = sino.row(k);
        for (int r = 0; r < n; ++r) {
            const double y = r - center_pix;
            for (int col = 0; col < n; ++col) {
                const double v = image.at(r, col);
                if (v == 0.0) continue;
                const double x = col - center_pix;
                const double u = (x * c + y * s) * inv_spacing + center_det;
                const double fl = std::floor(u);
                const int lo = static_cast<int>(fl);
                const double f = u - fl;
                if (lo >= 0 && lo < nd) out[lo] += v * (1.0 - f);
                if (lo + 1 >= 0 && lo + 1 < nd) out[lo + 1] += v * f;
            }
        }
    }
    return sino;
}

/// Keeps every factor-th view starting at view 0.
inline Sinogram subsample_views(const Sinogram& sino, int factor) {
    if (factor < 1 || sino.geometry.n_views % factor != 0)
        throw std::invalid_argument("subsample_views: factor must divide n_views");
    ScanGeometry g = sino.geometry;
    g.n_views = sino.geometry.n_views / factor;
    Sinogram out(g);
    for (int k = 0; k < g.n_views; ++k)
        std::copy_n(sino.row(k * factor), g.n_detectors, out.row(k));
    return out;
}

/// Columns dropped on each side before averaging `factor` adjacent bins.
/// The general rule removes only the remainder (floor half left, rest
/// right). The canonical 729-bin row is cropped to 720 instead: its x3/x9
/// sparsifications are defined as 240 and 80 bins, not 243 and 81.
inline std::pair<int, int> averaging_crop(int n_detectors, int factor) {
    if (n_detectors == 729 && factor > 1 && 720 % factor == 0) return {4, 5};
    const int r = n_detectors % factor;
    return {r / 2, r - r / 2};
}

/// Averages groups of `factor` adjacent detector bins after center-cropping
/// per averaging_crop. Bin spacing grows by `factor`.
inline Sinogram average_detectors(const Sinogram& sino, int factor) {
    const int nd = sino.geometry.n_detectors;
    if (factor < 1 || factor > nd)
        throw std::invalid_argument("average_detectors: factor must be in [1, n_detectors]");
    const auto [left, right] = averaging_crop(nd, factor);
    const int kept = nd - left - right;
    ScanGeometry g = sino.geometry;
    g.n_detectors = kept / factor;
    g.detector_spacing = sino.geometry.detector_spacing * factor;
    Sinogram out(g);
    for (int k = 0; k < g.n_views; ++k) {
        const double* in = sino.row(k) + left;
        double* dst = out.row(k);
        for (int b = 0; b < g.n_detectors; ++b) {
            double acc = 0.0;
            for (int j = 0; j < factor; ++j) acc += in[b * factor + j];
            dst[b] = acc / factor;
        }
    }
    return out;
}

/// Separable bilinear resize with corner-aligned sampling: output index i
/// maps to input coordinate i*(in-1)/(out-1), or the center when out == 1.
inline std::vector<double> resize_bilinear(const std::vector<double>& in, int in_rows, int in_cols,
                                           int out_rows, int out_cols) {
    if (in_rows < 1 || in_cols < 1 || in.size() != static_cast<std::size_t>(in_rows) * in_cols)
        throw std::invalid_argument("resize_bilinear: empty or inconsistent input");
    if (out_rows < 1 || out_cols < 1) throw std::invalid_argument("resize_bilinear: output dims must be >= 1");

    auto src_coord = [](int out_idx, int out_n, int in_n) {
        if (out_n == 1) return (in_n - 1) / 2.0;
        return static_cast<double>(out_idx) * (in_n - 1) / (out_n - 1);
    };

    std::vector<double> out(static_cast<std::size_t>(out_rows) * out_cols);
    for (int r = 0; r < out_rows; ++r) {
        const double sy = src_coord(r, out_rows, in_rows);
        const int y0 = std::min(static_cast<int>(sy), in_rows - 1);
        const int y1 = std::min(y0 + 1, in_rows - 1);
        const double fy = sy - y0;
        for (int c = 0; c < out_cols; ++c) {
            const double sx = src_coord(c, out_cols, in_cols);
            const int x0 = std::min(static_cast<int>(sx), in_cols - 1);
            const int x1 = std::min(x0 + 1, in_cols - 1);
            const double fx = sx - x0;
            const double top = in[static_cast<std::size_t>(y0) * in_cols + x0] * (1.0 - fx) +
                               in[static_cast<std::size_t>(y0) * in_cols + x1] * fx;
            const double bot = in[static_cast<std::size_t>(y1) * in_cols + x0] * (1.0 - fx) +
                               in[static_cast<std::size_t>(y1) * in_cols + x1] * fx;
            out[static_cast<std::size_t>(r) * out_cols + c] = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

namespace detail {

/// |f| response over an M-point FFT, f in cycles per sample (Nyquist 1/2).
inline std::vector<double> ramp_weights(std::size_t m) {
    std::vector<double> w(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t folded = std::min(k, m - k);
        w[k] = static_cast<double>(folded) / static_cast<double>(m);
    }
    return w;
}

}  // namespace detail

/// Band-limited ramp (Ram-Lak) filtering of every view: rows are zero-padded
/// to the next power of two >= 2*n_detectors, multiplied by |f| in the
/// frequency domain, and cropped back.
inline Sinogram ramp_filter(const Sinogram& sino) {
    const int nd = sino.geometry.n_detectors;
    if (nd < 3) throw std::invalid_argument("ramp_filter: need at least 3 detectors");
    const std::size_t m = next_pow2(static_cast<std::size_t>(2 * nd));
    const std::vector<double> w = detail::ramp_weights(m);

    Sinogram out(sino.geometry);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < sino.geometry.n_views; ++k) {
        std::vector<std::complex<double>> buf(m, {0.0, 0.0});
        const double* in = sino.row(k);
        for (int d = 0; d < nd; ++d) buf[d] = {in[d], 0.0};
        fft(buf);
        for (std::size_t i = 0; i < m; ++i) buf[i] *= w[i];
        fft(buf, /*inverse=*/true);
        double* dst = out.row(k);
        for (int d = 0; d < nd; ++d) dst[d] = buf[d].real();
    }
    return out;
}

/// Pixel-driven backprojection: every pixel gathers the linearly
/// interpolated value at its projected detector offset over all views,
/// scaled by angle_span/n_views. Projections outside the detector range
/// contribute nothing.
inline ImageGrid backproject(const Sinogram& sino, int out_side = 0) {
    const ScanGeometry& g = sino.geometry;
    const int n = out_side > 0 ? out_side : g.image_side;
    const int nd = g.n_detectors;
    const double center_pix = (n - 1) / 2.0;
    const double center_det = (nd - 1) / 2.0;
    const double inv_spacing = 1.0 / g.detector_spacing;
    const double scale = g.angle_span / g.n_views;

    std::vector<double> cs(g.n_views), sn(g.n_views);
    for (int k = 0; k < g.n_views; ++k) {
        cs[k] = std::cos(g.angle(k));
        sn[k] = std::sin(g.angle(k));
    }

    ImageGrid out(n, ValueKind::LAC);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) {
        const double y = r - center_pix;
        for (int col = 0; col < n; ++col) {
            const double x = col - center_pix;
            double acc = 0.0;
            for (int k = 0; k < g.n_views; ++k) {
                const double u = (x * cs[k] + y * sn[k]) * inv_spacing + center_det;
                const double fl = std::floor(u);
                const int lo = static_cast<int>(fl);
                const double f = u - fl;
                double v = 0.0;
                if (lo >= 0 && lo < nd) v += (1.0 - f) * sino.at(k, lo);
                if (lo + 1 >= 0 && lo + 1 < nd) v += f * sino.at(k, lo + 1);
                acc += v;
            }
            out.at(r, col) = acc * scale;
        }
    }
    return out;
}

/// Filtered backprojection; negative attenuation is clamped to zero.
inline ImageGrid fbp(const Sinogram& sino, int out_side = 0) {
    ImageGrid img = backproject(ramp_filter(sino), out_side);
    for (auto& v : img.data) v = std::max(0.0, v);
    img.kind = ValueKind::LAC;
    return img;
}

}  // namespace sino::tomo
