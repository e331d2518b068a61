#pragma once

// Layer kernels. All loops partition output elements statically (or use a
// fixed block split with ordered merges), so results are bitwise identical
// for any thread count. The *_into variants write into caller-owned tensors
// so steady-state training does not allocate.

#include <algorithm>
#include <limits>
#include <vector>

#include "sino/nn/tensor.hpp"

namespace sino::nn {

enum class Padding { Same, Valid };

struct ConvDims {
    int pad_top = 0, pad_left = 0;
    int out_h = 0, out_w = 0;
};

/// Output size and padding for one spatial axis. Same-padding uses ceil
/// division with the extra pixel on the bottom/right.
inline ConvDims conv_dims(int in_h, int in_w, int kh, int kw, int sh, int sw, Padding pad) {
    ConvDims d;
    if (pad == Padding::Same) {
        d.out_h = (in_h + sh - 1) / sh;
        d.out_w = (in_w + sw - 1) / sw;
        const int ph = std::max(0, (d.out_h - 1) * sh + kh - in_h);
        const int pw = std::max(0, (d.out_w - 1) * sw + kw - in_w);
        d.pad_top = ph / 2;
        d.pad_left = pw / 2;
    } else {
        if (in_h < kh || in_w < kw) throw std::invalid_argument("conv/pool: kernel larger than input");
        d.out_h = (in_h - kh) / sh + 1;
        d.out_w = (in_w - kw) / sw + 1;
    }
    return d;
}

template <class T>
void ensure_dims(Tensor<T>& t, const std::vector<int>& dims) {
    if (t.dims == dims) return;
    const std::size_t n = Tensor<T>::numel_of(dims);
    t.dims = dims;
    t.data.resize(n);
}

namespace detail {

/// C[m,n] = A[m,k] * B[k,n] (+= when accumulate). ikj order streams B.
template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace gemm_detail {

template <class T>
T lane_dot(const T* a, const T* b, int k) {
    constexpr int kLanes = 8;
    const int k8 = k - k % kLanes;
    T lane[kLanes] = {};
    for (int p = 0; p < k8; p += kLanes)
        for (int l = 0; l < kLanes; ++l) lane[l] += a[p + l] * b[p + l];
    for (int p = k8; p < k; ++p) lane[p - k8] += a[p] * b[p];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

}  // namespace gemm_detail

/// C[m,n] = A[m,k] * B[n,k]^T (+= when accumulate): row-by-row dot products
/// over eight independent lanes. The lane split fixes a summation order that
/// the compiler can vectorize without reassociating on its own. Skewed
/// shapes (small C, long k) run k-blocked with an ordered merge so both
/// operands stream from memory exactly once; the result is independent of
/// the thread count either way.
template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    const std::size_t cells = static_cast<std::size_t>(m) * n;
    if (cells <= 4096 && k >= 1024) {
        constexpr int kBlocks = 8;
        std::vector<T> partial(kBlocks * cells);
#pragma omp parallel for schedule(static)
        for (int blk = 0; blk < kBlocks; ++blk) {
            const int p0 = static_cast<int>(static_cast<long>(k) * blk / kBlocks);
            const int p1 = static_cast<int>(static_cast<long>(k) * (blk + 1) / kBlocks);
            T* pc = partial.data() + blk * cells;
            for (int i = 0; i < m; ++i) {
                const T* arow = a + static_cast<std::size_t>(i) * k + p0;
                for (int j = 0; j < n; ++j)
                    pc[static_cast<std::size_t>(i) * n + j] =
                        gemm_detail::lane_dot(arow, b + static_cast<std::size_t>(j) * k + p0, p1 - p0);
            }
        }
        if (!accumulate) std::fill(c, c + cells, T(0));
        for (int blk = 0; blk < kBlocks; ++blk) {
            const T* pc = partial.data() + blk * cells;
            for (std::size_t i = 0; i < cells; ++i) c[i] += pc[i];
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T acc = gemm_detail::lane_dot(arow, b + static_cast<std::size_t>(j) * k, k);
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

/// C[m,n] = A[k,m]^T * B[k,n] (+= when accumulate). Meant for small C (the
/// weight-gradient shape): k splits into a fixed number of blocks merged in
/// block order, so results do not depend on the thread count while C stays
/// cache resident per block.
template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate,
             std::vector<T>& partial_buf) {
    constexpr int kBlocks = 8;
    const std::size_t cells = static_cast<std::size_t>(m) * n;
    partial_buf.assign(kBlocks * cells, T(0));
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < kBlocks; ++blk) {
        const int p0 = static_cast<int>(static_cast<long>(k) * blk / kBlocks);
        const int p1 = static_cast<int>(static_cast<long>(k) * (blk + 1) / kBlocks);
        T* pc = partial_buf.data() + blk * cells;
        for (int p = p0; p < p1; ++p) {
            const T* arow = a + static_cast<std::size_t>(p) * m;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int i = 0; i < m; ++i) {
                const T av = arow[i];
                if (av == T(0)) continue;
                T* crow = pc + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    if (!accumulate) std::fill(c, c + cells, T(0));
    for (int blk = 0; blk < kBlocks; ++blk) {
        const T* pc = partial_buf.data() + blk * cells;
        for (std::size_t i = 0; i < cells; ++i) c[i] += pc[i];
    }
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    std::vector<T> buf;
    gemm_tn(m, n, k, a, b, c, accumulate, buf);
}

/// Patch-major patch matrix [out_h*out_w, in_c*kh*kw]: one contiguous patch
/// row per output pixel, so the GEMMs around it stream this buffer exactly
/// once while the small weight matrix stays cache resident.
template <class T>
void im2col_pm(const T* x, int in_c, int in_h, int in_w, int kh, int kw, int sh, int sw, const ConvDims& d,
               T* col) {
    const int out_w = d.out_w;
    const std::size_t patch = static_cast<std::size_t>(in_c) * kh * kw;
#pragma omp parallel for schedule(static)
    for (int oh = 0; oh < d.out_h; ++oh) {
        T* dst = col + static_cast<std::size_t>(oh) * out_w * patch;
        for (int ow = 0; ow < out_w; ++ow) {
            const int w0 = ow * sw - d.pad_left;
            for (int c = 0; c < in_c; ++c) {
                const T* plane = x + static_cast<std::size_t>(c) * in_h * in_w;
                for (int ki = 0; ki < kh; ++ki) {
                    const int ih = oh * sh - d.pad_top + ki;
                    if (ih < 0 || ih >= in_h) {
                        for (int kj = 0; kj < kw; ++kj) *dst++ = T(0);
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ih) * in_w;
                    for (int kj = 0; kj < kw; ++kj) {
                        const int iw = w0 + kj;
                        *dst++ = (iw >= 0 && iw < in_w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col_pm: scatters patch rows back onto the image.
template <class T>
void col2im_pm(const T* col, int in_c, int in_h, int in_w, int kh, int kw, int sh, int sw,
               const ConvDims& d, T* x) {
    const int out_w = d.out_w;
    const std::size_t patch = static_cast<std::size_t>(in_c) * kh * kw;
    for (int oh = 0; oh < d.out_h; ++oh) {
        const T* src = col + static_cast<std::size_t>(oh) * out_w * patch;
        for (int ow = 0; ow < out_w; ++ow) {
            const int w0 = ow * sw - d.pad_left;
            for (int c = 0; c < in_c; ++c) {
                T* plane = x + static_cast<std::size_t>(c) * in_h * in_w;
                for (int ki = 0; ki < kh; ++ki) {
                    const int ih = oh * sh - d.pad_top + ki;
                    if (ih < 0 || ih >= in_h) {
                        src += kw;
                        continue;
                    }
                    T* dst = plane + static_cast<std::size_t>(ih) * in_w;
                    for (int kj = 0; kj < kw; ++kj) {
                        const int iw = w0 + kj;
                        if (iw >= 0 && iw < in_w) dst[iw] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}

template <class T>
void transpose(const T* src, int rows, int cols, T* dst) {
    constexpr int kBlock = 32;
#pragma omp parallel for schedule(static)
    for (int r0 = 0; r0 < rows; r0 += kBlock)
        for (int c0 = 0; c0 < cols; c0 += kBlock) {
            const int r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
        }
}

/// y[oc, j] = yt[j, oc] + bias[oc], fused to avoid an extra pass.
template <class T>
void transpose_add_bias(const T* yt, int p, int out_c, const T* bias, T* y) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < out_c; ++oc) {
        const T bv = bias[oc];
        T* row = y + static_cast<std::size_t>(oc) * p;
        for (int j = 0; j < p; ++j) row[j] = yt[static_cast<std::size_t>(j) * out_c + oc] + bv;
    }
}

}  // namespace detail

/// Scratch buffers shared across conv calls.
template <class T>
struct ConvScratch {
    std::vector<T> col, dcol, yt, dyt, partial;
};

namespace detail {

/// y[m, p] = a[m, k_r] * x[k_r, p] + bias, blocked over p so the x block
/// stays cache resident across output rows. Used by the pointwise-conv path
/// where both operands are already channel-major.
template <class T>
void gemm_nn_colblock(int m, int p, int k_r, const T* a, const T* x, const T* bias, T* y) {
    constexpr int kChunk = 2048;
#pragma omp parallel for schedule(static)
    for (int j0 = 0; j0 < p; j0 += kChunk) {
        const int j1 = std::min(p, j0 + kChunk);
        for (int i = 0; i < m; ++i) {
            T* yrow = y + static_cast<std::size_t>(i) * p;
            const T bv = bias ? bias[i] : T(0);
            for (int j = j0; j < j1; ++j) yrow[j] = bv;
            const T* arow = a + static_cast<std::size_t>(i) * k_r;
            for (int q = 0; q < k_r; ++q) {
                const T av = arow[q];
                if (av == T(0)) continue;
                const T* xrow = x + static_cast<std::size_t>(q) * p;
                for (int j = j0; j < j1; ++j) yrow[j] += av * xrow[j];
            }
        }
    }
}

}  // namespace detail

/// Pointwise convolution: plain channel mixing, no patch matrix needed.
template <class T>
void conv1x1_forward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Tensor<T>& y) {
    const int batch = x.dims[0], in_c = x.dims[1], p = x.dims[2] * x.dims[3];
    const int out_c = w.dims[0];
    ensure_dims(y, {batch, out_c, x.dims[2], x.dims[3]});
    for (int b = 0; b < batch; ++b)
        detail::gemm_nn_colblock(out_c, p, in_c, w.ptr(), x.ptr() + static_cast<std::size_t>(b) * in_c * p,
                                 bias.ptr(), y.ptr() + static_cast<std::size_t>(b) * out_c * p);
}

template <class T>
void conv1x1_backward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>& dw,
                           Tensor<T>& db, ConvScratch<T>& scratch, Tensor<T>& dx) {
    const int batch = x.dims[0], in_c = x.dims[1], p = x.dims[2] * x.dims[3];
    const int out_c = w.dims[0];
    ensure_dims(dx, x.dims);
    scratch.yt.resize(static_cast<std::size_t>(in_c) * out_c);
    for (int b = 0; b < batch; ++b) {
        const T* xb = x.ptr() + static_cast<std::size_t>(b) * in_c * p;
        const T* dyb = dy.ptr() + static_cast<std::size_t>(b) * out_c * p;
        for (int oc = 0; oc < out_c; ++oc) {
            T acc = T(0);
            const T* row = dyb + static_cast<std::size_t>(oc) * p;
            for (int j = 0; j < p; ++j) acc += row[j];
            db.data[oc] += acc;
        }
        // dw[oc, c] += dy[oc, :] . x[c, :]
        detail::gemm_nt(out_c, in_c, p, dyb, xb, dw.ptr(), true);
        // dx[c, :] = sum_oc w[oc, c] * dy[oc, :]
        detail::transpose(w.ptr(), out_c, in_c, scratch.yt.data());
        detail::gemm_nn_colblock(in_c, p, out_c, scratch.yt.data(), dyb, static_cast<const T*>(nullptr),
                                 dx.ptr() + static_cast<std::size_t>(b) * in_c * p);
    }
}

/// Cross-correlation with bias. weights: [out_c, in_c, kh, kw]. The patch
/// matrix is patch-major, so the product is y^T[p, oc] = col[p, :] . w[oc, :]
/// with the weights cache resident. Pointwise kernels bypass the patch
/// machinery entirely.
template <class T>
void conv2d_forward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int sh, int sw,
                         Padding pad, ConvScratch<T>& scratch, Tensor<T>& y) {
    if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: rank-4 tensors required");
    if (x.dims[1] != w.dims[1]) throw std::invalid_argument("conv2d: channel mismatch");
    const int batch = x.dims[0], in_c = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    const int out_c = w.dims[0], kh = w.dims[2], kw = w.dims[3];
    if (kh == 1 && kw == 1 && sh == 1 && sw == 1) {
        conv1x1_forward_into(x, w, bias, y);
        return;
    }
    const auto d = conv_dims(in_h, in_w, kh, kw, sh, sw, pad);
    const int k = in_c * kh * kw;
    const int p = d.out_h * d.out_w;

    ensure_dims(y, {batch, out_c, d.out_h, d.out_w});
    scratch.col.resize(static_cast<std::size_t>(k) * p);
    scratch.yt.resize(static_cast<std::size_t>(p) * out_c);
    for (int b = 0; b < batch; ++b) {
        detail::im2col_pm(x.ptr() + static_cast<std::size_t>(b) * in_c * in_h * in_w, in_c, in_h, in_w, kh,
                          kw, sh, sw, d, scratch.col.data());
        detail::gemm_nt(p, out_c, k, scratch.col.data(), w.ptr(), scratch.yt.data(), false);
        detail::transpose_add_bias(scratch.yt.data(), p, out_c, bias.ptr(),
                                   y.ptr() + static_cast<std::size_t>(b) * out_c * p);
    }
}

/// Gradients w.r.t. input, weights, and bias. dw/db accumulate in place; dx
/// is overwritten.
template <class T>
void conv2d_backward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int sh, int sw,
                          Padding pad, Tensor<T>& dw, Tensor<T>& db, ConvScratch<T>& scratch,
                          Tensor<T>& dx) {
    const int batch = x.dims[0], in_c = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    const int out_c = w.dims[0], kh = w.dims[2], kw = w.dims[3];
    if (kh == 1 && kw == 1 && sh == 1 && sw == 1) {
        conv1x1_backward_into(x, w, dy, dw, db, scratch, dx);
        return;
    }
    const auto d = conv_dims(in_h, in_w, kh, kw, sh, sw, pad);
    const int k = in_c * kh * kw;
    const int p = d.out_h * d.out_w;

    ensure_dims(dx, x.dims);
    std::fill(dx.data.begin(), dx.data.end(), T(0));
    scratch.col.resize(static_cast<std::size_t>(k) * p);
    scratch.dyt.resize(static_cast<std::size_t>(p) * out_c);
    scratch.dcol.resize(static_cast<std::size_t>(k) * p);
    for (int b = 0; b < batch; ++b) {
        const T* dyb = dy.ptr() + static_cast<std::size_t>(b) * out_c * p;
        for (int oc = 0; oc < out_c; ++oc) {
            T acc = T(0);
            const T* row = dyb + static_cast<std::size_t>(oc) * p;
            for (int j = 0; j < p; ++j) acc += row[j];
            db.data[oc] += acc;
        }
        detail::transpose(dyb, out_c, p, scratch.dyt.data());
        // dw[oc, :] += sum_p dy^T[p, oc] * col[p, :]
        detail::im2col_pm(x.ptr() + static_cast<std::size_t>(b) * in_c * in_h * in_w, in_c, in_h, in_w, kh,
                          kw, sh, sw, d, scratch.col.data());
        detail::gemm_tn(out_c, k, p, scratch.dyt.data(), scratch.col.data(), dw.ptr(), true, scratch.partial);
        // dcol[p, :] = sum_oc dy^T[p, oc] * w[oc, :]
        detail::gemm_nn(p, k, out_c, scratch.dyt.data(), w.ptr(), scratch.dcol.data(), false);
        detail::col2im_pm(scratch.dcol.data(), in_c, in_h, in_w, kh, kw, sh, sw, d,
                          dx.ptr() + static_cast<std::size_t>(b) * in_c * in_h * in_w);
    }
}

enum class PoolKind { Max, Avg };

/// Valid-padding pooling. Max pooling records the chosen element per window
/// (first maximum in row-major scan order) for the backward pass.
template <class T>
void pool2d_forward_into(const Tensor<T>& x, PoolKind kind, int kh, int kw, int sh, int sw,
                         std::vector<int>& argmax, Tensor<T>& y) {
    const int batch = x.dims[0], ch = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    const auto d = conv_dims(in_h, in_w, kh, kw, sh, sw, Padding::Valid);
    ensure_dims(y, {batch, ch, d.out_h, d.out_w});
    if (kind == PoolKind::Max) argmax.resize(y.numel());
    const T inv_area = T(1) / static_cast<T>(kh * kw);
    const std::size_t out_plane = static_cast<std::size_t>(d.out_h) * d.out_w;

#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * ch; ++bc) {
        const T* plane = x.ptr() + static_cast<std::size_t>(bc) * in_h * in_w;
        T* out = y.ptr() + static_cast<std::size_t>(bc) * out_plane;
        int* am = kind == PoolKind::Max ? argmax.data() + static_cast<std::size_t>(bc) * out_plane : nullptr;
        std::size_t oi = 0;
        for (int oh = 0; oh < d.out_h; ++oh) {
            for (int ow = 0; ow < d.out_w; ++ow, ++oi) {
                const int h0 = oh * sh, w0 = ow * sw;
                if (kind == PoolKind::Max) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_idx = 0;
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j) {
                            const int idx = (h0 + i) * in_w + (w0 + j);
                            if (plane[idx] > best) {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    out[oi] = best;
                    am[oi] = best_idx;
                } else {
                    T acc = T(0);
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j) acc += plane[(h0 + i) * in_w + (w0 + j)];
                    out[oi] = acc * inv_area;
                }
            }
        }
    }
}

template <class T>
void pool2d_backward_into(const Tensor<T>& x, const Tensor<T>& dy, PoolKind kind, int kh, int kw, int sh,
                          int sw, const std::vector<int>& argmax, Tensor<T>& dx) {
    const int batch = x.dims[0], ch = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    const auto d = conv_dims(in_h, in_w, kh, kw, sh, sw, Padding::Valid);
    ensure_dims(dx, x.dims);
    std::fill(dx.data.begin(), dx.data.end(), T(0));
    const T inv_area = T(1) / static_cast<T>(kh * kw);
    const std::size_t out_plane = static_cast<std::size_t>(d.out_h) * d.out_w;

#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * ch; ++bc) {
        T* plane = dx.ptr() + static_cast<std::size_t>(bc) * in_h * in_w;
        const T* g = dy.ptr() + static_cast<std::size_t>(bc) * out_plane;
        const int* am = kind == PoolKind::Max ? argmax.data() + static_cast<std::size_t>(bc) * out_plane : nullptr;
        std::size_t oi = 0;
        for (int oh = 0; oh < d.out_h; ++oh) {
            for (int ow = 0; ow < d.out_w; ++ow, ++oi) {
                if (kind == PoolKind::Max) {
                    plane[am[oi]] += g[oi];
                } else {
                    const int h0 = oh * sh, w0 = ow * sw;
                    const T share = g[oi] * inv_area;
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j) plane[(h0 + i) * in_w + (w0 + j)] += share;
                }
            }
        }
    }
}

/// Per-channel spatial mean: [b, c, h, w] -> [b, c].
template <class T>
void global_avg_pool_forward_into(const Tensor<T>& x, Tensor<T>& y) {
    const int batch = x.dims[0], ch = x.dims[1];
    const std::size_t area = static_cast<std::size_t>(x.dims[2]) * x.dims[3];
    ensure_dims(y, {batch, ch});
    const T inv = T(1) / static_cast<T>(area);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const T* plane = x.ptr() + (static_cast<std::size_t>(b) * ch + c) * area;
            T acc = T(0);
            for (std::size_t i = 0; i < area; ++i) acc += plane[i];
            y.at2(b, c) = acc * inv;
        }
}

template <class T>
void global_avg_pool_backward_into(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
    const int batch = x.dims[0], ch = x.dims[1];
    const std::size_t area = static_cast<std::size_t>(x.dims[2]) * x.dims[3];
    ensure_dims(dx, x.dims);
    const T inv = T(1) / static_cast<T>(area);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const T share = dy.at2(b, c) * inv;
            T* plane = dx.ptr() + (static_cast<std::size_t>(b) * ch + c) * area;
            for (std::size_t i = 0; i < area; ++i) plane[i] = share;
        }
}

template <class T>
void relu_forward_into(const Tensor<T>& x, Tensor<T>& y) {
    ensure_dims(y, x.dims);
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
}

template <class T>
void relu_backward_into(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
    ensure_dims(dx, x.dims);
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
}

/// Nearest-neighbor spatial upsampling by an integer factor.
template <class T>
void upsample_forward_into(const Tensor<T>& x, int factor, Tensor<T>& y) {
    const int batch = x.dims[0], ch = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    ensure_dims(y, {batch, ch, in_h * factor, in_w * factor});
#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * ch; ++bc) {
        const T* src = x.ptr() + static_cast<std::size_t>(bc) * in_h * in_w;
        T* dst = y.ptr() + static_cast<std::size_t>(bc) * in_h * in_w * factor * factor;
        for (int h = 0; h < in_h * factor; ++h)
            for (int w = 0; w < in_w * factor; ++w)
                dst[static_cast<std::size_t>(h) * in_w * factor + w] =
                    src[static_cast<std::size_t>(h / factor) * in_w + w / factor];
    }
}

template <class T>
void upsample_backward_into(const Tensor<T>& x, const Tensor<T>& dy, int factor, Tensor<T>& dx) {
    const int batch = x.dims[0], ch = x.dims[1], in_h = x.dims[2], in_w = x.dims[3];
    ensure_dims(dx, x.dims);
    std::fill(dx.data.begin(), dx.data.end(), T(0));
#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * ch; ++bc) {
        T* dst = dx.ptr() + static_cast<std::size_t>(bc) * in_h * in_w;
        const T* src = dy.ptr() + static_cast<std::size_t>(bc) * in_h * in_w * factor * factor;
        for (int h = 0; h < in_h * factor; ++h)
            for (int w = 0; w < in_w * factor; ++w)
                dst[static_cast<std::size_t>(h / factor) * in_w + w / factor] +=
                    src[static_cast<std::size_t>(h) * in_w * factor + w];
    }
}

/// y = x * W^T + b with x: [batch, in], W: [out, in].
template <class T>
void fully_connected_forward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                  Tensor<T>& y) {
    const int batch = x.dims[0];
    const int in = static_cast<int>(x.numel() / batch);
    const int out = w.dims[0];
    if (w.dims[1] != in) throw std::invalid_argument("fully_connected: feature mismatch");
    ensure_dims(y, {batch, out});
    detail::gemm_nt(batch, out, in, x.ptr(), w.ptr(), y.ptr(), false);
    for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o) y.at2(b, o) += bias.data[o];
}

template <class T>
void fully_connected_backward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                   Tensor<T>& dw, Tensor<T>& db, Tensor<T>& dx) {
    const int batch = x.dims[0];
    const int in = static_cast<int>(x.numel() / batch);
    const int out = w.dims[0];
    // dw[out, in] += dy^T[out, batch] * x[batch, in]
    detail::gemm_tn(out, in, batch, dy.ptr(), x.ptr(), dw.ptr(), true);
    for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o) db.data[o] += dy.at2(b, o);
    // dx[batch, in] = dy[batch, out] * w[out, in]
    ensure_dims(dx, x.dims);
    detail::gemm_nn(batch, in, out, dy.ptr(), w.ptr(), dx.ptr(), false);
    dx.dims = x.dims;
}

// --------------------------------------------------------------------------
// value-returning wrappers (tests and one-off uses)

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int sh, int sw,
                         Padding pad, std::vector<T>& col_buf) {
    ConvScratch<T> scratch;
    scratch.col = std::move(col_buf);
    Tensor<T> y;
    conv2d_forward_into(x, w, bias, sh, sw, pad, scratch, y);
    col_buf = std::move(scratch.col);
    return y;
}

template <class T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int sh, int sw,
                          Padding pad, Tensor<T>& dw, Tensor<T>& db, std::vector<T>& col_buf) {
    ConvScratch<T> scratch;
    scratch.col = std::move(col_buf);
    Tensor<T> dx;
    conv2d_backward_into(x, w, dy, sh, sw, pad, dw, db, scratch, dx);
    col_buf = std::move(scratch.col);
    return dx;
}

template <class T>
Tensor<T> pool2d_forward(const Tensor<T>& x, PoolKind kind, int kh, int kw, int sh, int sw,
                         std::vector<int>& argmax) {
    Tensor<T> y;
    pool2d_forward_into(x, kind, kh, kw, sh, sw, argmax, y);
    return y;
}

template <class T>
Tensor<T> pool2d_backward(const Tensor<T>& x, const Tensor<T>& dy, PoolKind kind, int kh, int kw, int sh,
                          int sw, const std::vector<int>& argmax) {
    Tensor<T> dx;
    pool2d_backward_into(x, dy, kind, kh, kw, sh, sw, argmax, dx);
    return dx;
}

template <class T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
    Tensor<T> y;
    global_avg_pool_forward_into(x, y);
    return y;
}

template <class T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx;
    global_avg_pool_backward_into(x, dy, dx);
    return dx;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y;
    relu_forward_into(x, y);
    return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx;
    relu_backward_into(x, dy, dx);
    return dx;
}

template <class T>
Tensor<T> upsample_forward(const Tensor<T>& x, int factor) {
    Tensor<T> y;
    upsample_forward_into(x, factor, y);
    return y;
}

template <class T>
Tensor<T> upsample_backward(const Tensor<T>& x, const Tensor<T>& dy, int factor) {
    Tensor<T> dx;
    upsample_backward_into(x, dy, factor, dx);
    return dx;
}

template <class T>
Tensor<T> fully_connected_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    Tensor<T> y;
    fully_connected_forward_into(x, w, bias, y);
    return y;
}

template <class T>
Tensor<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                   Tensor<T>& dw, Tensor<T>& db) {
    Tensor<T> dx;
    fully_connected_backward_into(x, w, dy, dw, db, dx);
    return dx;
}

}  // namespace sino::nn
