#pragma once

#include <cstdint>
#include <initializer_list>

namespace gvg {

// splitmix64. One 64-bit word of state, fully portable output sequence.
// Standard-library distributions are not used anywhere: their output is
// implementation-defined, which would break the cross-platform determinism
// contract for generated datasets and training runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n), unbiased via rejection.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n; // 2^64 mod n
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform integer in [lo, hi], both ends inclusive.
    int int_in(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Child stream derived from a master seed and a path of indices, e.g.
// (step, batch slot, response index). Streams are independent of each other
// and of how many draws earlier streams consumed, so rollouts can run in any
// order (or concurrently) and still reproduce the sequential result.
inline Rng derive_rng(uint64_t master, std::initializer_list<uint64_t> path) {
    uint64_t h = mix64(master ^ 0xA0761D6478BD642Full);
    for (uint64_t p : path) {
        h = mix64(h + 0x9E3779B97F4A7C15ull + p);
    }
    return Rng(h);
}

} // namespace gvg
