#include "amlm/rng.hpp"

#include <cmath>

namespace amlm {

namespace {

// splitmix64 output function (Vigna 2015).
uint64_t scramble(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

uint64_t SplitMix64::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return scramble(state_);
}

double SplitMix64::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint32_t SplitMix64::next_below(uint32_t n) {
    // Lemire's multiply-shift; bias is negligible for the ranges used here.
    return static_cast<uint32_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

double SplitMix64::next_gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

SplitMix64 SplitMix64::stream(uint64_t seed, std::string_view name, uint64_t index) {
    uint64_t s = scramble(seed ^ fnv1a64(name));
    if (index != 0) {
        s = scramble(s ^ (index * 0x9E3779B97F4A7C15ULL));
    }
    return SplitMix64(s);
}

}  // namespace amlm
