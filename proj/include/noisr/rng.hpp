#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace noisr {

// Counter-based generator: value i of stream `seed` is a pure function of
// (seed, i), so per-pixel draws are order-independent and parallel evaluation
// cannot change results. splitmix64 finalizer underneath.
inline std::uint64_t keyed_u64(std::uint64_t seed, std::uint64_t i) {
    std::uint64_t z = seed + (i + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Uniform in (0,1]; never returns 0 so it is safe under log().
inline double keyed_uniform_pos(std::uint64_t seed, std::uint64_t i) {
    return static_cast<double>((keyed_u64(seed, i) >> 11) + 1) * 0x1.0p-53;
}

// Uniform in [0,1).
inline double keyed_uniform(std::uint64_t seed, std::uint64_t i) {
    return static_cast<double>(keyed_u64(seed, i) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller, consuming counters 2i and 2i+1.
inline double keyed_normal(std::uint64_t seed, std::uint64_t i) {
    const double u1 = keyed_uniform_pos(seed, 2 * i);
    const double u2 = keyed_uniform(seed, 2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Unbiased-enough bounded draw via 128-bit multiply-shift (n << 2^64).
inline std::uint64_t keyed_below(std::uint64_t seed, std::uint64_t i, std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(keyed_u64(seed, i)) * n) >> 64);
}

// Deterministic Fisher-Yates; does not depend on the standard library's
// unspecified std::shuffle ordering.
template <typename T>
inline void keyed_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::uint64_t ctr = 0;
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::uint64_t j = keyed_below(seed, ctr++, i);
        std::swap(v[i - 1], v[j]);
    }
}

// Sequential convenience wrapper over the keyed stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}
    std::uint64_t next_u64() { return keyed_u64(seed_, ctr_++); }
    double uniform() { return keyed_uniform(seed_, ctr_++); }
    double normal() {
        const double u1 = keyed_uniform_pos(seed_, ctr_);
        const double u2 = keyed_uniform(seed_, ctr_ + 1);
        ctr_ += 2;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t below(std::uint64_t n) { return keyed_below(seed_, ctr_++, n); }

private:
    std::uint64_t seed_;
    std::uint64_t ctr_ = 0;
};

} // namespace noisr
