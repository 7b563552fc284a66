#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace usid {

// Real waveform sampled at fs (MHz); t0 is the time (us) of samples[0]
// relative to whatever clock the producer documents.
struct SampledWaveform {
    double fs_mhz = 0.0;
    double t0_us = 0.0;
    std::vector<double> samples;

    double duration_us() const {
        return samples.empty() ? 0.0 : static_cast<double>(samples.size()) / fs_mhz;
    }

    double energy() const {
        double e = 0.0;
        for (double v : samples) e += v * v;
        return e;
    }

    // Linear interpolation at time t (us, same clock as t0); zero outside.
    double sample_at(double t_us) const {
        double u = (t_us - t0_us) * fs_mhz;
        if (u < 0.0) return 0.0;
        size_t j = static_cast<size_t>(u);
        if (j + 1 >= samples.size()) return 0.0;
        double frac = u - static_cast<double>(j);
        return samples[j] + frac * (samples[j + 1] - samples[j]);
    }
};

// Bipolar pulse train for a chip sequence: for each chip the first duty_cycle
// of the chip period is held at chip*amplitude, the rest at zero. A sample is
// active only if it lies entirely inside the duty window, so an integer
// samples-per-chip grid yields floor(duty * spc) active samples per chip.
inline SampledWaveform synthesize_chip_train(std::span<const int8_t> chips, double chip_rate_mhz,
                                             double duty_cycle, double amplitude, double fs_mhz) {
    if (chip_rate_mhz <= 0.0) throw std::invalid_argument("synthesize_chip_train: chip_rate must be > 0");
    if (duty_cycle <= 0.0 || duty_cycle >= 1.0)
        throw std::invalid_argument("synthesize_chip_train: duty_cycle must be in (0, 1)");
    if (fs_mhz < 4.0 * chip_rate_mhz)
        throw std::invalid_argument("synthesize_chip_train: fs must be >= 4x chip rate");

    const double duration = static_cast<double>(chips.size()) / chip_rate_mhz;
    const size_t n = static_cast<size_t>(std::ceil(duration * fs_mhz));
    SampledWaveform w;
    w.fs_mhz = fs_mhz;
    w.t0_us = 0.0;
    w.samples.assign(n, 0.0);
    const double dt_chips = chip_rate_mhz / fs_mhz; // chip periods per sample
    for (size_t i = 0; i < n; ++i) {
        double pos = static_cast<double>(i) * dt_chips;
        size_t c = static_cast<size_t>(pos);
        if (c >= chips.size()) break;
        double phase_end = pos - static_cast<double>(c) + dt_chips;
        if (phase_end <= duty_cycle + 1e-12)
            w.samples[i] = amplitude * static_cast<double>(chips[c]);
    }
    return w;
}

// Unit-energy Gaussian-enveloped cosine bandpass kernel; fractional_bandwidth
// is the -6 dB fractional bandwidth. center_index carries the group delay.
struct BandpassKernel {
    std::vector<double> samples;
    size_t center_index = 0;
};

inline BandpassKernel gaussian_bandpass_kernel(double center_mhz, double fractional_bandwidth,
                                               double fs_mhz) {
    if (center_mhz <= 0.0) throw std::invalid_argument("bandpass kernel: center must be > 0");
    if (fractional_bandwidth <= 0.0 || fractional_bandwidth > 2.0)
        throw std::invalid_argument("bandpass kernel: fractional bandwidth must be in (0, 2]");
    if (fs_mhz <= 2.0 * center_mhz)
        throw std::invalid_argument("bandpass kernel: fs must exceed 2x center frequency");

    // -6 dB full width b*f0  ->  sigma_f = b*f0 / (2*sqrt(2 ln 2)), sigma_t = 1/(2 pi sigma_f)
    const double sigma_t = std::sqrt(2.0 * std::log(2.0)) / (3.14159265358979323846 * fractional_bandwidth * center_mhz);
    const size_t half = static_cast<size_t>(std::ceil(3.5 * sigma_t * fs_mhz));
    BandpassKernel k;
    k.center_index = half;
    k.samples.resize(2 * half + 1);
    std::vector<double> env(k.samples.size());
    double env_sum = 0.0, mod_sum = 0.0;
    for (size_t i = 0; i < k.samples.size(); ++i) {
        double tau = (static_cast<double>(i) - static_cast<double>(half)) / fs_mhz;
        env[i] = std::exp(-tau * tau / (2.0 * sigma_t * sigma_t));
        k.samples[i] = env[i] * std::cos(2.0 * 3.14159265358979323846 * center_mhz * tau);
        env_sum += env[i];
        mod_sum += k.samples[i];
    }
    // the crystal is AC coupled: cancel the DC gain with an envelope-shaped
    // correction (Morlet admissibility term), then set unit energy
    const double kappa = mod_sum / env_sum;
    double e = 0.0;
    for (size_t i = 0; i < k.samples.size(); ++i) {
        k.samples[i] -= kappa * env[i];
        e += k.samples[i] * k.samples[i];
    }
    const double inv = 1.0 / std::sqrt(e);
    for (auto& v : k.samples) v *= inv;
    return k;
}

// Convolution with the crystal's bandpass kernel. Output length is
// input + kernel - 1 and t0 is advanced by the kernel group delay.
inline SampledWaveform apply_crystal_response(const SampledWaveform& w, double center_mhz,
                                              double fractional_bandwidth) {
    BandpassKernel k = gaussian_bandpass_kernel(center_mhz, fractional_bandwidth, w.fs_mhz);
    SampledWaveform out;
    out.fs_mhz = w.fs_mhz;
    out.t0_us = w.t0_us - static_cast<double>(k.center_index) / w.fs_mhz;
    if (w.samples.empty()) return out;
    out.samples.assign(w.samples.size() + k.samples.size() - 1, 0.0);
    for (size_t i = 0; i < w.samples.size(); ++i) {
        const double x = w.samples[i];
        if (x == 0.0) continue;
        for (size_t j = 0; j < k.samples.size(); ++j) out.samples[i + j] += x * k.samples[j];
    }
    return out;
}

} // namespace usid
