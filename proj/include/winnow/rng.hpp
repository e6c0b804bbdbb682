#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace winnow {

// Deterministic random source. The std distributions are not pinned down by
// the standard, so uniform/normal are derived from raw mt19937_64 words here;
// identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1), clamped away from the endpoints.
    double uniform_open() {
        constexpr double eps = 1e-12;
        const double u = uniform();
        if (u < eps) return eps;
        if (u > 1.0 - eps) return 1.0 - eps;
        return u;
    }

    // Box-Muller; draws two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::swap(p[i - 1], p[index(i)]);
        }
        return p;
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a over bytes; used for stable token hashing and config fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Derives an independent stream seed for a named role within a run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role) {
    return fnv1a(role) ^ (seed * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull);
}

}  // namespace winnow
