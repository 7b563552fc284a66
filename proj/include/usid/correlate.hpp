#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "usid/fft.hpp"

namespace usid {

enum class CorrMode {
    global,   // normalize by sqrt(Raa[0] * Rbb[0]) -- geometric mean of both autocorrelations
    windowed, // normalize per lag by the energy of the overlapping segment of the longer input
};

// Normalized correlation magnitudes over every full- and partial-overlap lag.
// Lag 0 means aligned starts; positive lag means b delayed relative to a.
struct CorrelationSeries {
    int lag_min = 0;              // lag of values[0]; full range is [-(M-1), N-1]
    std::vector<double> values;   // |normalized correlation| per lag

    int lag_at(size_t i) const { return lag_min + static_cast<int>(i); }

    double value_at_lag(int lag) const {
        int i = lag - lag_min;
        if (i < 0 || static_cast<size_t>(i) >= values.size())
            throw std::out_of_range("CorrelationSeries: lag out of range");
        return values[static_cast<size_t>(i)];
    }

    // Peak by magnitude; ties resolved toward the smallest lag.
    struct Peak {
        int lag;
        double value;
    };
    Peak peak() const {
        size_t best = 0;
        for (size_t i = 1; i < values.size(); ++i)
            if (values[i] > values[best]) best = i;
        return {lag_at(best), values[best]};
    }
};

namespace detail {

inline double energy(std::span<const double> x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
}

// Raw linear cross-correlation r[k] = sum_n a[k+n] * b[n] for
// k in [-(M-1), N-1], computed via a zero-padded FFT product.
inline std::vector<double> raw_xcorr_fft(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size(), m = b.size();
    const size_t p = next_pow2(n + m - 1);
    std::vector<cplx> fa(p, cplx(0, 0)), fb(p, cplx(0, 0));
    for (size_t i = 0; i < n; ++i) fa[i] = cplx(a[i], 0);
    for (size_t i = 0; i < m; ++i) fb[i] = cplx(b[i], 0);
    fft_inplace(fa, false);
    fft_inplace(fb, false);
    for (size_t i = 0; i < p; ++i) fa[i] *= std::conj(fb[i]);
    fft_inplace(fa, true);

    std::vector<double> r(n + m - 1);
    const int lag_min = -static_cast<int>(m) + 1;
    for (size_t i = 0; i < r.size(); ++i) {
        int k = lag_min + static_cast<int>(i);
        size_t idx = k >= 0 ? static_cast<size_t>(k) : p + static_cast<size_t>(static_cast<long long>(k));
        r[i] = fa[idx].real();
    }
    return r;
}

} // namespace detail

// Normalized cross-correlation of two real sequences. Frequency-domain
// implementation; tests hold it to a direct-sum oracle within 1e-9.
inline CorrelationSeries xcorr_normalized(std::span<const double> a, std::span<const double> b,
                                          CorrMode mode) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("xcorr_normalized: inputs must be nonempty");
    const double ea = detail::energy(a);
    const double eb = detail::energy(b);
    if (ea == 0.0 && eb == 0.0)
        throw std::invalid_argument("xcorr_normalized: both inputs are all-zero; normalization undefined");

    const size_t n = a.size(), m = b.size();
    std::vector<double> r = detail::raw_xcorr_fft(a, b);
    CorrelationSeries out;
    out.lag_min = -static_cast<int>(m) + 1;
    out.values.resize(r.size());

    if (mode == CorrMode::global) {
        const double denom = std::sqrt(ea * eb);
        for (size_t i = 0; i < r.size(); ++i)
            out.values[i] = denom > 0.0 ? std::abs(r[i]) / denom : 0.0;
        return out;
    }

    // windowed: normalize by the full energy of the shorter input and the
    // energy of the longer input restricted to the overlapping segment.
    const bool a_longer = n >= m;
    std::span<const double> longer = a_longer ? a : b;
    const double e_short = a_longer ? eb : ea;
    std::vector<double> prefix(longer.size() + 1, 0.0);
    for (size_t i = 0; i < longer.size(); ++i) prefix[i + 1] = prefix[i] + longer[i] * longer[i];

    for (size_t i = 0; i < r.size(); ++i) {
        const int k = out.lag_min + static_cast<int>(i);
        // overlap of the longer sequence at this lag
        long long lo, hi; // [lo, hi) indices into `longer`
        if (a_longer) {
            lo = std::max<long long>(0, k);
            hi = std::min<long long>(static_cast<long long>(n), static_cast<long long>(m) + k);
        } else {
            lo = std::max<long long>(0, -k);
            hi = std::min<long long>(static_cast<long long>(m), static_cast<long long>(n) - k);
        }
        double e_ov = (hi > lo) ? prefix[static_cast<size_t>(hi)] - prefix[static_cast<size_t>(lo)] : 0.0;
        double denom = std::sqrt(e_short * e_ov);
        out.values[i] = denom > 0.0 ? std::abs(r[i]) / denom : 0.0;
    }
    return out;
}

} // namespace usid
