#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace usid {

using cplx = std::complex<double>;

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace detail {

// Flattened twiddle table: entries [len/2, len) hold e^{-2*pi*i*k/len} for
// k in [0, len/2). Cached per transform size.
inline const std::vector<cplx>& twiddle_table(size_t n) {
    static std::map<size_t, std::vector<cplx>> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<cplx> table(n);
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        for (size_t k = 0; k < len / 2; ++k)
            table[len / 2 + k] = cplx(std::cos(ang * static_cast<double>(k)),
                                      std::sin(ang * static_cast<double>(k)));
    }
    return cache.emplace(n, std::move(table)).first->second;
}

} // namespace detail

// Iterative radix-2 Cooley-Tukey. Length must be a power of two.
// inverse=true applies the 1/N scaling.
inline void fft_inplace(std::vector<cplx>& x, bool inverse) {
    const size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_inplace: length must be a power of two");
    if (n == 1) return;

    // bit reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }

    const std::vector<cplx>& tw = detail::twiddle_table(n);
    for (size_t len = 2; len <= n; len <<= 1) {
        const cplx* stage = &tw[len / 2];
        for (size_t i = 0; i < n; i += len) {
            for (size_t k = 0; k < len / 2; ++k) {
                const cplx w = inverse ? std::conj(stage[k]) : stage[k];
                cplx u = x[i + k];
                cplx v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& v : x) v *= inv;
    }
}

inline std::vector<cplx> fft(std::vector<cplx> x) {
    fft_inplace(x, false);
    return x;
}

inline std::vector<cplx> ifft(std::vector<cplx> x) {
    fft_inplace(x, true);
    return x;
}

} // namespace usid
