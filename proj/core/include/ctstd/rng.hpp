#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace ctstd {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from (base, tag, index). Used so every
/// consumer of randomness (per slice, per phase, per kernel) gets its own
/// stream and results do not depend on evaluation order.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 1469598103934665603ull;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    h = splitmix64(h ^ splitmix64(base));
    return splitmix64(h ^ (index * 0x9e3779b97f4a7c15ull + 1));
}

/// Deterministic PRNG. xoshiro-free: a splitmix64 counter generator with a
/// hand-rolled Box-Muller transform, so sequences are identical across
/// standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc908ull)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], both inclusive.
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    /// Standard normal via Box-Muller (pairwise, cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = uniform_int(0, i);
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace ctstd
