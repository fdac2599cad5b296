#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sbb {

// Counter-based random numbers: every draw is a pure function of
// (seed, counter words), so parallel consumers get identical streams
// regardless of scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

// Uniform in (0,1): top 53 bits, offset so 0 is excluded.
inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const std::uint64_t h = counter_hash(seed, a, b, c);
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two counter-derived uniforms.
inline double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const double u1 = counter_uniform(seed, a, b, 2 * c);
    const double u2 = counter_uniform(seed, a, b, 2 * c + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Small stateful convenience wrapper for test/oracle instance generation.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * counter_uniform(seed_, 0, 0, n_++);
    }
    double normal() { return counter_normal(seed_, 1, 0, n_++); }
    std::uint64_t integer(std::uint64_t n) {  // in [0, n)
        return counter_hash(seed_, 2, 0, n_++) % n;
    }

private:
    std::uint64_t seed_;
    std::uint64_t n_ = 0;
};

}  // namespace sbb
