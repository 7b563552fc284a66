#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace usid {

// splitmix64, used for seeding and for hashing seed components together.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Folds a list of parts into one stream seed. Used to derive independent,
// schedule-free streams per (seed, frame, polarity, ...) tuple.
inline uint64_t derive_seed(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x243f6a8885a308d3ULL;
    for (uint64_t p : parts) {
        h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        uint64_t s = h;
        h = splitmix64(s);
    }
    return h;
}

// xoshiro256** by Blackman & Vigna (public domain reference implementation).
class Xoshiro256 {
public:
    explicit Xoshiro256(uint64_t seed = 1) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Deterministic random stream. Distributions are implemented explicitly
// (not via <random>) so that a given seed yields the same values on every
// standard library implementation.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed = 1) : eng_(seed) {}

    uint64_t next_u64() { return eng_.next(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_.next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; both values of each pair are consumed in order.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double ang = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(ang);
        have_spare_ = true;
        return mean + stddev * r * std::cos(ang);
    }

    // Gaussian truncated at +/- 3 sigma (rejection).
    double gaussian_truncated3(double mean, double stddev) {
        if (stddev <= 0.0) return mean;
        for (;;) {
            double g = gaussian(0.0, 1.0);
            if (g >= -3.0 && g <= 3.0) return mean + stddev * g;
        }
    }

private:
    Xoshiro256 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace usid
