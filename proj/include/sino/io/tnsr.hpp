#pragma once

#include <unistd.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sino/image.hpp"
#include "sino/tomo.hpp"

namespace sino::io {

/// Malformed file (bad magic, truncation, inconsistent dims).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Well-formed file written by an incompatible format revision.
struct UnsupportedVersion : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// TNSR: "TNSR" magic, u32 version (1), u8 dtype (0 = f32, 1 = f64),
/// u32 rank, rank x u32 dims, then the payload, row-major. All fields
/// little-endian.
struct TnsrArray {
    std::vector<std::uint32_t> dims;
    bool f64 = true;
    std::vector<double> data;  // held as double regardless of file dtype

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "TNSR writer assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("TNSR: truncated file");
    return v;
}

inline void write_stream(std::ostream& os, const TnsrArray& arr) {
    os.write("TNSR", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint8_t>(os, arr.f64 ? 1 : 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(arr.dims.size()));
    for (auto d : arr.dims) put<std::uint32_t>(os, d);
    if (arr.data.size() != arr.numel()) throw FormatError("TNSR: dims do not match payload size");
    if (arr.f64) {
        os.write(reinterpret_cast<const char*>(arr.data.data()),
                 static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
    } else {
        std::vector<float> tmp(arr.data.begin(), arr.data.end());
        os.write(reinterpret_cast<const char*>(tmp.data()),
                 static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    }
}

inline TnsrArray read_stream(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TNSR", 4) != 0) throw FormatError("TNSR: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != 1) throw UnsupportedVersion("TNSR: unsupported version " + std::to_string(version));
    const auto dtype = get<std::uint8_t>(is);
    if (dtype > 1) throw FormatError("TNSR: unknown dtype");
    const auto rank = get<std::uint32_t>(is);
    if (rank > 8) throw FormatError("TNSR: implausible rank");
    TnsrArray arr;
    arr.f64 = dtype == 1;
    arr.dims.resize(rank);
    for (auto& d : arr.dims) d = get<std::uint32_t>(is);
    const std::size_t n = arr.numel();
    arr.data.resize(n);
    if (arr.f64) {
        is.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw FormatError("TNSR: truncated payload");
    } else {
        std::vector<float> tmp(n);
        is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw FormatError("TNSR: truncated payload");
        for (std::size_t i = 0; i < n; ++i) arr.data[i] = tmp[i];
    }
    return arr;
}

}  // namespace detail

/// Writes via a temp file plus atomic rename so concurrent writers never
/// expose a partial file.
inline void write_tnsr(const std::filesystem::path& path, const TnsrArray& arr) {
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw FormatError("TNSR: cannot open " + tmp.string());
        detail::write_stream(os, arr);
        if (!os) throw FormatError("TNSR: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline TnsrArray read_tnsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("TNSR: cannot open " + path.string());
    return detail::read_stream(is);
}

inline void write_grid(const std::filesystem::path& path, const ImageGrid& grid, bool f64 = true) {
    TnsrArray arr;
    arr.dims = {static_cast<std::uint32_t>(grid.side), static_cast<std::uint32_t>(grid.side)};
    arr.f64 = f64;
    arr.data = grid.data;
    write_tnsr(path, arr);
}

inline ImageGrid read_grid(const std::filesystem::path& path, ValueKind kind) {
    TnsrArray arr = read_tnsr(path);
    if (arr.dims.size() != 2 || arr.dims[0] != arr.dims[1])
        throw FormatError("TNSR: expected a square rank-2 grid in " + path.string());
    ImageGrid grid(static_cast<int>(arr.dims[0]), kind);
    grid.data = std::move(arr.data);
    return grid;
}

inline void write_sinogram(const std::filesystem::path& path, const tomo::Sinogram& sino, bool f64 = true) {
    TnsrArray arr;
    arr.dims = {static_cast<std::uint32_t>(sino.geometry.n_views),
                static_cast<std::uint32_t>(sino.geometry.n_detectors)};
    arr.f64 = f64;
    arr.data = sino.data;
    write_tnsr(path, arr);
}

inline tomo::Sinogram read_sinogram(const std::filesystem::path& path, const tomo::ScanGeometry& geometry) {
    TnsrArray arr = read_tnsr(path);
    if (arr.dims.size() != 2 || static_cast<int>(arr.dims[0]) != geometry.n_views ||
        static_cast<int>(arr.dims[1]) != geometry.n_detectors)
        throw FormatError("TNSR: sinogram dims do not match geometry in " + path.string());
    tomo::Sinogram sino(geometry);
    sino.data = std::move(arr.data);
    return sino;
}

}  // namespace sino::io
