#pragma once

#include <cstdint>
#include <random>

namespace pfcache {

// splitmix64 step, used both as a mixer and for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (master, tag, id). Streams for
// different (tag, id) pairs never collide in practice, so adding a server
// or a new role leaves existing streams untouched.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t id = 0) {
    return splitmix64(master ^ splitmix64(tag ^ splitmix64(id)));
}

// Stream roles. Request and agent streams are separate so every policy and
// federation mode sees the same workload under one master seed.
namespace seed_tag {
inline constexpr std::uint64_t catalog = 0x01;
inline constexpr std::uint64_t network = 0x02;
inline constexpr std::uint64_t requests = 0x03;
inline constexpr std::uint64_t agent = 0x04;
inline constexpr std::uint64_t ranks = 0x05;
}  // namespace seed_tag

// Seeded random source. Wraps mt19937_64 (bit-portable engine) and avoids
// std distributions, whose algorithms are implementation-defined; the
// helpers below produce identical sequences on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform_double() < p; }

    bool coin() { return (engine_() & 1ULL) != 0; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pfcache
