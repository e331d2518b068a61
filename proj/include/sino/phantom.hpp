#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sino/image.hpp"
#include "sino/rng.hpp"

namespace sino::phantom {

/// Additive ellipse in normalized [-1,1]^2 coordinates (y up).
struct EllipseSpec {
    double cx = 0.0, cy = 0.0;
    double a = 0.1, b = 0.1;
    double rotation = 0.0;
    double value = 0.0;  // additive HU
};

enum class Task { Region, Lesion };
enum class Split { Train, Validation, Test };

inline const char* to_string(Task t) { return t == Task::Region ? "region" : "lesion"; }
inline const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

inline Task task_from_string(const std::string& s) {
    if (s == "region") return Task::Region;
    if (s == "lesion") return Task::Lesion;
    throw std::invalid_argument("unknown task: " + s);
}
inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "validation") return Split::Validation;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split: " + s);
}

constexpr int kRegionClasses = 8;

/// Half-width of the anti-aliased edge band in pixels; outside
/// +-4*edge_sigma the coverage saturates to exactly 0 or 1, so an additive
/// ellipse touches nothing beyond its extent plus this margin.
inline double edge_band_px(double edge_sigma_px) { return 4.0 * edge_sigma_px; }

/// Renders additive ellipses over a background with a Gaussian-profile edge
/// (erfc of the approximate signed distance). Symmetric tables produce
/// bitwise mirror symmetric images. edge_sigma_px controls the edge softness.
inline ImageGrid render_ellipses(int side, const std::vector<EllipseSpec>& ellipses,
                                 double background_hu = -1000.0, double edge_sigma_px = 0.45) {
    ImageGrid img(side, ValueKind::HU, background_hu);
    const double center = (side - 1) / 2.0;
    const double px = 2.0 / side;  // pixel size in normalized units
    const double band = edge_band_px(edge_sigma_px);
    const double inv_denom = 1.0 / (edge_sigma_px * std::numbers::sqrt2);

    for (const auto& e : ellipses) {
        const double cphi = std::cos(e.rotation);
        const double sphi = std::sin(e.rotation);
        // bounding box of the rotated ellipse plus the edge band
        const double ex = std::hypot(e.a * cphi, e.b * sphi) + (band + 1.0) * px;
        const double ey = std::hypot(e.a * sphi, e.b * cphi) + (band + 1.0) * px;
        const int c0 = std::max(0, static_cast<int>(std::floor((e.cx - ex + 1.0) / px) - 1));
        const int c1 = std::min(side - 1, static_cast<int>(std::ceil((e.cx + ex + 1.0) / px) + 1));
        const int r0 = std::max(0, static_cast<int>(std::floor((-e.cy - ey + 1.0) / px) - 1));
        const int r1 = std::min(side - 1, static_cast<int>(std::ceil((-e.cy + ey + 1.0) / px) + 1));

        for (int r = r0; r <= r1; ++r) {
            const double y = -(r - center) * px;
            for (int c = c0; c <= c1; ++c) {
                const double x = (c - center) * px;
                const double dx = x - e.cx;
                const double dy = y - e.cy;
                const double xr = (dx * cphi + dy * sphi) / e.a;
                const double yr = (-dx * sphi + dy * cphi) / e.b;
                const double q2 = xr * xr + yr * yr;
                const double q = std::sqrt(q2);
                // signed distance to the ellipse boundary: (q-1)/|grad q|
                const double gx = cphi * xr / e.a - sphi * yr / e.b;
                const double gy = sphi * xr / e.a + cphi * yr / e.b;
                const double gn = std::hypot(gx, gy);
                const double d_px = gn > 1e-12 ? (q2 - q) / (gn * px) : (q - 1.0) / px;
                double cov;
                if (d_px <= -band) cov = 1.0;
                else if (d_px >= band) cov = 0.0;
                else cov = 0.5 * std::erfc(d_px * inv_denom);
                if (cov != 0.0) img.at(r, c) += e.value * cov;
            }
        }
    }
    for (auto& v : img.data) v = std::clamp(v, -1000.0, 3000.0);
    return img;
}

/// Ten-ellipse Shepp-Logan head phantom rescaled to HU in [-1000, 1000].
/// The eye and tumor ellipses are symmetrized about the vertical axis so the
/// rendering is exactly mirror symmetric.
inline ImageGrid shepp_logan(int side) {
    if (side < 32) throw std::invalid_argument("shepp_logan: side must be >= 32");
    const double deg = std::numbers::pi / 180.0;
    const std::vector<EllipseSpec> table = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 2.0},
        {0.0, -0.0184, 0.6624, 0.8740, 0.0, -0.98},
        {0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.02},
        {-0.22, 0.0, 0.11, 0.31, 18.0 * deg, -0.02},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.01},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.01},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.01},
        {-0.06, -0.605, 0.046, 0.023, 0.0, 0.01},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.01},
        {0.06, -0.605, 0.046, 0.023, 0.0, 0.01},
    };
    std::vector<EllipseSpec> scaled = table;
    for (auto& e : scaled) e.value *= 1000.0;  // density 0..2 -> -1000..1000 HU over the background
    // a softer edge than the task phantoms: this is the reconstruction
    // fidelity fixture, so its edge profile should be resolvable by the
    // scan geometry
    return render_ellipses(side, scaled, -1000.0, 1.0);
}

/// Seeded Shepp-Logan lookalike used as reconstruction training material:
/// same structure, jittered geometry and contrasts.
inline ImageGrid shepp_logan_variant(std::uint64_t seed, int side = 128) {
    if (side < 32) throw std::invalid_argument("shepp_logan_variant: side must be >= 32");
    const double deg = std::numbers::pi / 180.0;
    Rng rng(mix_seed(seed ^ 0x534c5641ULL));
    std::vector<EllipseSpec> t = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 2.0},
        {0.0, -0.0184, 0.6624, 0.8740, 0.0, -0.98},
        {0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.02},
        {-0.22, 0.0, 0.16, 0.41, 18.0 * deg, -0.02},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.01},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.01},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.01},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.01},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.01},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.01},
    };
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto& e = t[i];
        e.value *= 1000.0 * (1.0 + rng.uniform(-0.1, 0.1));
        const double shift = i < 2 ? 0.02 : 0.06;  // keep the skull near the center
        e.cx += rng.uniform(-shift, shift);
        e.cy += rng.uniform(-shift, shift);
        e.a *= 1.0 + rng.uniform(-0.12, 0.12);
        e.b *= 1.0 + rng.uniform(-0.12, 0.12);
        e.rotation += rng.uniform(-0.15, 0.15);
    }
    return render_ellipses(side, t, -1000.0, 1.0);
}

/// One slice of a synthetic study.
struct SliceRecord {
    ImageGrid image;
    int label = 0;
    long case_id = 0;
    Split split = Split::Train;
    std::uint64_t seed = 0;
};

namespace detail {

inline double jc(Rng& rng, double v) { return v + rng.uniform(-0.1, 0.1); }          // center jitter
inline double ja(Rng& rng, double v) { return v * (1.0 + rng.uniform(-0.2, 0.2)); }  // axis jitter
inline double jv(Rng& rng, double v) { return v + rng.uniform(-50.0, 50.0); }        // value jitter
inline double jr(Rng& rng) { return rng.uniform(-0.12, 0.12); }                      // rotation jitter

inline void push(std::vector<EllipseSpec>& out, Rng& rng, double cx, double cy, double a, double b,
                 double rot, double value) {
    out.push_back({jc(rng, cx), jc(rng, cy), ja(rng, a), ja(rng, b), rot + jr(rng), jv(rng, value)});
}

/// Eight structural families loosely mimicking axial body stations.
inline std::vector<EllipseSpec> region_family(int cls, Rng& rng) {
    std::vector<EllipseSpec> e;
    switch (cls) {
        case 0:  // head: skull ring, brain, ventricles
            push(e, rng, 0.0, 0.0, 0.72, 0.88, 0.0, 1950.0);
            push(e, rng, 0.0, 0.0, 0.60, 0.76, 0.0, -910.0);
            push(e, rng, -0.12, 0.08, 0.06, 0.16, 0.15, -55.0);
            push(e, rng, 0.12, 0.08, 0.06, 0.16, -0.15, -55.0);
            break;
        case 1:  // chest: lungs, heart, spine
            push(e, rng, 0.0, 0.0, 0.95, 0.68, 0.0, 1040.0);
            push(e, rng, -0.42, 0.06, 0.30, 0.44, 0.12, -820.0);
            push(e, rng, 0.42, 0.06, 0.30, 0.44, -0.12, -820.0);
            push(e, rng, 0.04, -0.12, 0.22, 0.26, 0.3, 60.0);
            push(e, rng, 0.0, -0.52, 0.09, 0.11, 0.0, 700.0);
            break;
        case 2:  // abdomen: liver, stomach, kidneys, spine
            push(e, rng, 0.0, 0.0, 0.86, 0.64, 0.0, 1050.0);
            push(e, rng, -0.30, 0.12, 0.36, 0.30, -0.25, 45.0);
            push(e, rng, 0.32, 0.16, 0.20, 0.22, 0.2, -75.0);
            push(e, rng, -0.40, -0.30, 0.10, 0.17, 0.25, 25.0);
            push(e, rng, 0.40, -0.30, 0.10, 0.17, -0.25, 25.0);
            push(e, rng, 0.0, -0.48, 0.09, 0.11, 0.0, 650.0);
            break;
        case 3:  // pelvis: iliac wings, bladder
            push(e, rng, 0.0, 0.0, 0.90, 0.58, 0.0, 1040.0);
            push(e, rng, -0.46, -0.02, 0.17, 0.36, 0.45, 850.0);
            push(e, rng, 0.46, -0.02, 0.17, 0.36, -0.45, 850.0);
            push(e, rng, 0.0, -0.14, 0.21, 0.18, 0.0, -55.0);
            break;
        case 4:  // neck: airway, spine, vessels
            push(e, rng, 0.0, 0.0, 0.46, 0.42, 0.0, 1045.0);
            push(e, rng, 0.0, 0.10, 0.07, 0.07, 0.0, -840.0);
            push(e, rng, 0.0, -0.22, 0.11, 0.12, 0.0, 750.0);
            push(e, rng, -0.20, 0.05, 0.05, 0.05, 0.0, 85.0);
            push(e, rng, 0.20, 0.05, 0.05, 0.05, 0.0, 85.0);
            break;
        case 5:  // upper legs: two muscle columns with femurs
            push(e, rng, -0.45, 0.0, 0.32, 0.37, 0.0, 1040.0);
            push(e, rng, 0.45, 0.0, 0.32, 0.37, 0.0, 1040.0);
            push(e, rng, -0.45, 0.02, 0.09, 0.10, 0.0, 900.0);
            push(e, rng, 0.45, 0.02, 0.09, 0.10, 0.0, 900.0);
            break;
        case 6:  // shoulders: wide section, humeral heads, trachea, scapulae
            push(e, rng, 0.0, -0.08, 0.97, 0.40, 0.0, 1040.0);
            push(e, rng, -0.70, 0.0, 0.12, 0.14, 0.0, 900.0);
            push(e, rng, 0.70, 0.0, 0.12, 0.14, 0.0, 900.0);
            push(e, rng, 0.0, 0.02, 0.06, 0.07, 0.0, -840.0);
            push(e, rng, -0.42, -0.18, 0.28, 0.07, 0.2, 500.0);
            push(e, rng, 0.42, -0.18, 0.28, 0.07, -0.2, 500.0);
            break;
        default:  // 7, bowel ring: six low-density loops around the center
            push(e, rng, 0.0, 0.0, 0.82, 0.66, 0.0, 1045.0);
            for (int k = 0; k < 6; ++k) {
                const double ang = k * std::numbers::pi / 3.0;
                push(e, rng, 0.42 * std::cos(ang), 0.34 * std::sin(ang), 0.11, 0.09, ang, -220.0);
            }
            break;
    }
    return e;
}

constexpr std::uint64_t kRegionTag = 0x7265670000000000ULL;
constexpr std::uint64_t kLesionBaseTag = 0x6c65730000000000ULL;
constexpr std::uint64_t kLesionBlobTag = 0x626c6f0000000000ULL;

}  // namespace detail

/// Deterministic region-task slice for one of the eight structural classes.
inline SliceRecord sample_region_phantom(int cls, std::uint64_t seed, int side = 128) {
    if (cls < 0 || cls >= kRegionClasses)
        throw std::invalid_argument("sample_region_phantom: class out of range");
    Rng rng(mix_seed(seed ^ (detail::kRegionTag + static_cast<std::uint64_t>(cls))));
    SliceRecord rec;
    rec.image = render_ellipses(side, detail::region_family(cls, rng));
    rec.label = cls;
    rec.seed = seed;
    return rec;
}

/// The additive lesion drawn for a given seed: a faint +25..+60 HU ellipse
/// with 0.02..0.08 semi-axes, placed uniformly inside the brain region. Its
/// brain-skull host geometry is rederived from the anatomy stream so the
/// placement stays inside the brain for any seed.
inline EllipseSpec lesion_ellipse(std::uint64_t seed) {
    Rng rng(mix_seed(seed ^ detail::kLesionBaseTag));
    const double sa = 0.74 * (1.0 + rng.uniform(-0.06, 0.06));
    const double sb = 0.90 * (1.0 + rng.uniform(-0.05, 0.05));
    const double ba = sa - 0.10;
    const double bb = sb - 0.10;

    Rng lesion_rng(mix_seed(seed ^ detail::kLesionBlobTag));
    EllipseSpec lesion;
    lesion.a = lesion_rng.uniform(0.02, 0.08);
    lesion.b = lesion_rng.uniform(0.02, 0.08);
    const double margin = std::max(lesion.a, lesion.b) + 0.06;
    const double ang = lesion_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double rad = std::sqrt(lesion_rng.uniform());
    lesion.cx = rad * std::cos(ang) * (ba - margin);
    lesion.cy = -0.02 + rad * std::sin(ang) * (bb - margin);
    lesion.rotation = lesion_rng.uniform(0.0, std::numbers::pi);
    lesion.value = lesion_rng.uniform(25.0, 60.0);
    return lesion;
}

/// Head-like phantom for the lesion task. The anatomy stream and the lesion
/// stream are derived independently from the seed, so the lesion-present and
/// lesion-absent images for one seed differ only inside the lesion ellipse
/// (plus its anti-aliasing band).
inline SliceRecord sample_lesion_phantom(bool has_lesion, std::uint64_t seed, int side = 128) {
    Rng rng(mix_seed(seed ^ detail::kLesionBaseTag));
    std::vector<EllipseSpec> e;
    // skull ring ~1900 HU over ~40 HU brain
    const double sa = 0.74 * (1.0 + rng.uniform(-0.03, 0.03));
    const double sb = 0.90 * (1.0 + rng.uniform(-0.03, 0.03));
    const double tilt = rng.uniform(-0.05, 0.05);
    e.push_back({0.0, -0.02, sa, sb, tilt, 2900.0});
    const double ba = sa - 0.10;
    const double bb = sb - 0.10;
    e.push_back({0.0, -0.02, ba, bb, tilt, -1860.0});  // interior lands at ~40 HU
    // faint internal structure: ventricles plus a few low-contrast blobs
    e.push_back({-0.10 + rng.uniform(-0.03, 0.03), 0.08, 0.055, 0.17, 0.18 + rng.uniform(-0.05, 0.05), -12.0});
    e.push_back({0.10 + rng.uniform(-0.03, 0.03), 0.08, 0.055, 0.17, -0.18 + rng.uniform(-0.05, 0.05), -12.0});
    const int blobs = 2 + static_cast<int>(rng.uniform_index(2));
    for (int i = 0; i < blobs; ++i) {
        const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rad = 0.55 * std::sqrt(rng.uniform());
        e.push_back({rad * std::cos(ang) * ba, -0.02 + rad * std::sin(ang) * bb,
                     rng.uniform(0.08, 0.20), rng.uniform(0.08, 0.20), rng.uniform(0.0, std::numbers::pi),
                     rng.uniform(-10.0, 10.0)});
    }

    if (has_lesion) e.push_back(lesion_ellipse(seed));

    SliceRecord rec;
    rec.image = render_ellipses(side, e);
    rec.label = has_lesion ? 1 : 0;
    rec.seed = seed;
    return rec;
}

/// Slice descriptor; images are rendered on demand from the seed.
struct SliceMeta {
    long id = 0;
    Task task = Task::Region;
    int label = 0;
    long case_id = 0;
    Split split = Split::Train;
    std::uint64_t seed = 0;
};

inline SliceRecord render_slice(const SliceMeta& meta, int side = 128) {
    SliceRecord rec = meta.task == Task::Region
                          ? sample_region_phantom(meta.label, meta.seed, side)
                          : sample_lesion_phantom(meta.label == 1, meta.seed, side);
    rec.case_id = meta.case_id;
    rec.split = meta.split;
    return rec;
}

struct SplitFractions {
    double train = 0.7, validation = 0.15, test = 0.15;
};

/// Deterministic dataset manifest. The lesion task is split at the case
/// level with label-stratified allocation; the region task is split at the
/// slice level. Class labels are balanced by construction.
inline std::vector<SliceMeta> build_dataset(Task task, int n_cases, int slices_per_case,
                                            SplitFractions fractions, std::uint64_t master_seed) {
    if (n_cases < 10) throw std::invalid_argument("build_dataset: need at least 10 cases");
    if (slices_per_case < 1) throw std::invalid_argument("build_dataset: slices_per_case must be >= 1");
    if (fractions.train <= 0.0 || fractions.validation <= 0.0 || fractions.test <= 0.0)
        throw std::invalid_argument("build_dataset: fractions must be positive");
    if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
        throw std::invalid_argument("build_dataset: fractions must sum to 1");

    const long n_slices = static_cast<long>(n_cases) * slices_per_case;
    std::vector<SliceMeta> manifest(n_slices);
    Rng rng(mix_seed(master_seed ^ (task == Task::Region ? 0x314159ULL : 0x271828ULL)));

    auto shuffled = [&rng](long n) {
        std::vector<long> idx(n);
        for (long i = 0; i < n; ++i) idx[i] = i;
        for (long i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);
        return idx;
    };
    auto take_counts = [](long n, const SplitFractions& f) {
        const long tr = std::lround(f.train * n);
        const long va = std::lround(f.validation * n);
        return std::pair<long, long>{tr, va};
    };

    const std::uint64_t slice_stream = mix_seed(master_seed ^ 0xabcd0000ULL);
    for (long i = 0; i < n_slices; ++i) {
        manifest[i].id = i;
        manifest[i].task = task;
        manifest[i].case_id = i / slices_per_case;
        manifest[i].seed = mix_seed(slice_stream + static_cast<std::uint64_t>(i));
    }

    if (task == Task::Region) {
        for (long i = 0; i < n_slices; ++i) manifest[i].label = static_cast<int>(i % kRegionClasses);
        const auto order = shuffled(n_slices);
        const auto [tr, va] = take_counts(n_slices, fractions);
        for (long pos = 0; pos < n_slices; ++pos) {
            Split s = pos < tr ? Split::Train : (pos < tr + va ? Split::Validation : Split::Test);
            manifest[order[pos]].split = s;
        }
    } else {
        // Whole cases move together. Shuffle each label group, then walk a
        // label-interleaved order and cut it at the split boundaries: split
        // sizes are exact and any prefix is balanced to within one case.
        std::vector<int> case_label(n_cases);
        for (int c = 0; c < n_cases; ++c) case_label[c] = c % 2;
        std::vector<long> group[2];
        for (int c = 0; c < n_cases; ++c) group[case_label[c]].push_back(c);
        for (auto& g : group) {
            const auto order = shuffled(static_cast<long>(g.size()));
            std::vector<long> tmp(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[order[i]];
            g = std::move(tmp);
        }
        std::vector<long> walk;
        walk.reserve(n_cases);
        for (std::size_t i = 0; i < std::max(group[0].size(), group[1].size()); ++i) {
            if (i < group[0].size()) walk.push_back(group[0][i]);
            if (i < group[1].size()) walk.push_back(group[1][i]);
        }
        const auto [tr, va] = take_counts(n_cases, fractions);
        std::vector<Split> case_split(n_cases);
        for (long pos = 0; pos < n_cases; ++pos)
            case_split[walk[pos]] = pos < tr ? Split::Train : (pos < tr + va ? Split::Validation : Split::Test);
        for (long i = 0; i < n_slices; ++i) {
            const long c = manifest[i].case_id;
            manifest[i].label = case_label[c];
            manifest[i].split = case_split[c];
        }
    }
    return manifest;
}

}  // namespace sino::phantom
