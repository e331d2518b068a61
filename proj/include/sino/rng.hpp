#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sino {

/// Mixes a 64-bit value into a well-distributed seed (splitmix64 finalizer).
/// Used to derive independent child seeds from (seed, index) pairs.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic random source. The engine is std::mt19937_64, whose output
/// sequence is pinned by the standard; the distributions are implemented here
/// because the std::*_distribution algorithms are not portable across
/// standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// always tiny compared to 2^64, so the bias is far below any tolerance
    /// used in this project.
    std::uint64_t uniform_index(std::uint64_t n) { return eng_() % n; }

    /// Standard normal via Box-Muller (both uniforms drawn per call, second
    /// value cached for the next call).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sino
