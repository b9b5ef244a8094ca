#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace svs {

// Deterministic seed derivation. Every randomized component draws from its
// own stream keyed by (base seed, tag, indices) so results never depend on
// scheduling or call order.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(base ^ stable_hash(tag));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

// Thin wrapper over the (bit-exact, standardized) mt19937_64 engine with
// hand-rolled distributions; std distributions vary across library
// implementations and would break cross-toolchain reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool chance(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (single value; no cached spare so the
    // stream position is a pure function of the call count).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? eng_() % n : 0; }

private:
    std::mt19937_64 eng_;
};

}  // namespace svs
