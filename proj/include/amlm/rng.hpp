#pragma once

#include <cstdint>
#include <string_view>

namespace amlm {

// 64-bit FNV-1a. Used for rng stream derivation and manifest input digests.
uint64_t fnv1a64(std::string_view bytes);

// splitmix64: 64-bit state, one scramble per draw. The state is the whole
// generator, which keeps checkpointing trivial.
class SplitMix64 {
public:
    SplitMix64() = default;
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();

    // Uniform in [0, 1), 53 bits of mantissa.
    double next_double();

    // Uniform in {0, ..., n-1}, n >= 1.
    uint32_t next_below(uint32_t n);

    // Standard normal via Box-Muller.
    double next_gaussian();

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // Named sub-stream derivation: a single master seed fans out into
    // independent streams keyed by (name, index), so masking, corruption,
    // initialization and data ordering each consume their own stream.
    static SplitMix64 stream(uint64_t seed, std::string_view name, uint64_t index = 0);

private:
    uint64_t state_ = 0;
};

}  // namespace amlm
