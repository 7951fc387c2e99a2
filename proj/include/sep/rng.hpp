#pragma once

#include <cstdint>

namespace sep {

/// Counter-based stream keyed by (seed, path index): every path draws from
/// its own splitmix64 sequence, so results do not depend on the order in
/// which paths are simulated.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path) {
        state_ = mix(seed + 0x9E3779B97F4A7C15ULL * (path + 1));
        state_ = mix(state_ ^ path);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1).
    double next_unit() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// Fair +-1 step.
    int next_step() {
        if (bits_left_ == 0) {
            bit_buf_ = next_u64();
            bits_left_ = 64;
        }
        const int s = (bit_buf_ & 1u) ? 1 : -1;
        bit_buf_ >>= 1;
        --bits_left_;
        return s;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_ = 0;
    std::uint64_t bit_buf_ = 0;
    int bits_left_ = 0;
};

}  // namespace sep
