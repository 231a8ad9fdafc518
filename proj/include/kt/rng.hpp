#pragma once

#include <cmath>
#include <cstdint>

namespace kt {

// xoshiro256++ seeded through splitmix64. The algorithm is fixed so that
// datasets regenerate bit-identically from a seed; see README "Reproducibility".
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : s_) s = splitmix64(x);
    }

    // Derive an independent stream seed from a root seed (per-stage / per-sample split).
    static uint64_t derive(uint64_t root, uint64_t stream) {
        uint64_t x = root ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
        uint64_t a = splitmix64(x);
        uint64_t b = splitmix64(x);
        return a ^ (b >> 1);
    }

    uint64_t next_u64() {
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

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one spare cached per pair.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates shuffle of [0, n) index vectors.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kt
