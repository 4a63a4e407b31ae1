#ifndef ANONLAB_RNG_HPP
#define ANONLAB_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace anonlab {

// xoshiro256** seeded through splitmix64.  Standard-library distributions are
// not bit-reproducible across implementations, so every random draw the
// simulator makes goes through this generator.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, bound) by rejection sampling.
    uint64_t uniform(uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("Rng::uniform: bound 0");
        const uint64_t threshold = -bound % bound;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform_double() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform_double() < p; }

    // Number of failures before the first success, success probability p.
    uint64_t geometric(double p) {
        if (!(p > 0.0 && p <= 1.0))
            throw std::invalid_argument("Rng::geometric: p out of range");
        if (p == 1.0) return 0;
        double u = uniform_double();
        // Avoid log(0).
        if (u <= 0.0) u = 0x1.0p-53;
        return uint64_t(std::floor(std::log1p(-u) / std::log1p(-p)));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[uniform(i)]);
    }

    // Fisher-Yates permutation of {0..n-1}.
    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    // Derive an independent child generator; keeps sub-streams decoupled from
    // draw order in the parent.
    Rng fork(uint64_t tag) {
        uint64_t x = next_u64() ^ (tag * 0x9e3779b97f4a7c15ULL);
        return Rng(splitmix64(x));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::array<uint64_t, 4> state_;
};

} // namespace anonlab

#endif
