#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fbkan {

// Deterministic labeled random stream (xoshiro256++ seeded via splitmix64).
// Two streams agree iff (seed, label, sequence) agree; results are identical
// across platforms, which std:: distributions do not guarantee.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view label, std::uint64_t sequence = 0);

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double next_uniform();

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi);

    // Standard normal via Box-Muller (second value cached).
    double next_normal();

private:
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// 64-bit mix used for stream derivation (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

}  // namespace fbkan
