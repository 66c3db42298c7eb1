#pragma once

#include <cstdint>
#include <cmath>

namespace dncl {

// xoshiro256++ with splitmix64 seeding. Self-contained so that corpora,
// noise draws and training runs are bit-reproducible across platforms and
// standard libraries (std::normal_distribution is not).
class Rng {
public:
    Rng() : Rng(0x9e3779b97f4a7c15ULL) {}

    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    // Independent stream derived from (seed, stream). Used for per-expression
    // and per-step RNGs: parallel work and checkpoint resume both rely on
    // streams being a pure function of their ids.
    static Rng derive(uint64_t seed, uint64_t stream) {
        uint64_t x = seed ^ (0xbf58476d1ce4e5b9ULL * (stream + 1));
        return Rng(splitmix64(x));
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible for
    // the n used here (<< 2^32), but do it properly anyway.
    uint64_t uniform_int(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = next(); } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (no cached second value: keeps the
    // draw count per sample fixed, which stream-derivation tests rely on).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // single splitmix64 output for a value (stream-id hashing)
    static uint64_t mix(uint64_t x) { return splitmix64(x); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
};

} // namespace dncl
