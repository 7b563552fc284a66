#pragma once

#include <cmath>
#include <utility>

#include "usid/rf_frame.hpp"
#include "usid/scene.hpp"

namespace usid {

namespace detail {

// Scalar path loss at the transmit center frequency.
inline double attenuation_gain(double path_mm, double alpha_db_cm_mhz, double f_mhz) {
    return std::pow(10.0, -alpha_db_cm_mhz * f_mhz * (path_mm / 10.0) / 20.0);
}

// 1/r spreading with the radius clamped below 1 mm.
inline double spreading_gain(double dist_mm) { return 1.0 / std::max(dist_mm, 1.0); }

} // namespace detail

// Synthesizes channel data for one plane-wave transmit of the given polarity.
//
// Scatterers respond linearly (echo flips with polarity); clips trigger off
// the incident pulse magnitude and emit their code waveform regardless of
// polarity. pair_member is 0/1 within a PI pair and selects the per-
// acquisition jitter/miss and noise streams.
inline RfFrame simulate_acquisition(Scene& scene, int polarity, uint32_t frame_number = 0,
                                    int pair_member = 0) {
    const double c = scene.c_mm_us();
    const double fs = scene.fs_mhz;
    const double alpha = scene.attenuation_db_cm_mhz;
    const double f_tx = scene.pulse.center_mhz;
    const uint32_t acq_index = 2 * frame_number + static_cast<uint32_t>(pair_member);
    const double now = static_cast<double>(acq_index) * scene.pri_us;

    RfFrame frame;
    frame.polarity = polarity;
    frame.fs_mhz = fs;
    frame.n_elements = static_cast<size_t>(scene.geometry.n_elements);
    frame.n_samples = scene.n_samples();
    frame.frame_index = acq_index;
    frame.samples.assign(frame.n_elements * frame.n_samples, 0.0);

    const double pol_eff = static_cast<double>(polarity * scene.pulse.polarity);
    const double pulse_T = scene.pulse.duration_us();

    // linear scatterer echoes: plane wave in (path z), spherical back
    for (const auto& sc : scene.scatterers) {
        const double t_tx = sc.z_mm / c;
        const double a0 = pol_eff * sc.reflectivity * detail::attenuation_gain(sc.z_mm, alpha, f_tx);
        for (size_t e = 0; e < frame.n_elements; ++e) {
            const double dx = sc.x_mm - scene.geometry.element_x_mm(static_cast<int>(e));
            const double d = std::hypot(dx, sc.z_mm);
            const double t_arr = t_tx + d / c;
            const double amp =
                a0 * detail::attenuation_gain(d, alpha, f_tx) * detail::spreading_gain(d);
            const auto i0 = static_cast<long long>(std::ceil(t_arr * fs));
            const auto i1 = std::min<long long>(static_cast<long long>(frame.n_samples),
                                                static_cast<long long>((t_arr + pulse_T) * fs) + 1);
            double* row = &frame.samples[e * frame.n_samples];
            for (long long i = std::max<long long>(0, i0); i < i1; ++i)
                row[i] += amp * scene.pulse.eval(static_cast<double>(i) / fs - t_arr);
        }
    }

    // clips: threshold trigger on the incident plane wave, then one-way
    // propagation of the emitted waveform to every element
    for (auto& clip : scene.clips) {
        if (!clip.active) continue;
        const double t_inc = clip.cfg.z_mm / c;
        const double inc_gain = detail::attenuation_gain(clip.cfg.z_mm, alpha, f_tx);
        SampledWaveform incident;
        incident.fs_mhz = fs;
        incident.t0_us = t_inc;
        const auto n_inc = static_cast<size_t>(std::ceil(pulse_T * fs)) + 1;
        incident.samples.resize(n_inc);
        for (size_t i = 0; i < n_inc; ++i)
            incident.samples[i] = pol_eff * inc_gain * scene.pulse.eval(static_cast<double>(i) / fs);

        RandomStream rng(derive_seed({scene.rng_seed, 0x636c6970ULL, static_cast<uint64_t>(clip.cfg.id),
                                      frame_number, static_cast<uint64_t>(pair_member)}));
        auto ev = step_trigger(clip.state, clip.cfg, incident, now, rng, pair_member == 1);
        if (!ev) continue;

        SampledWaveform em = emit(clip.cfg, *ev, clip.code, fs);
        const double em_end = em.t0_us + em.duration_us();
        for (size_t e = 0; e < frame.n_elements; ++e) {
            const double dx = clip.cfg.x_mm - scene.geometry.element_x_mm(static_cast<int>(e));
            const double d = std::hypot(dx, clip.cfg.z_mm);
            const double amp = detail::attenuation_gain(d, alpha, f_tx) * detail::spreading_gain(d);
            const double delay = d / c;
            const auto i0 = static_cast<long long>(std::ceil((em.t0_us + delay) * fs));
            const auto i1 = std::min<long long>(static_cast<long long>(frame.n_samples),
                                                static_cast<long long>((em_end + delay) * fs) + 1);
            double* row = &frame.samples[e * frame.n_samples];
            for (long long i = std::max<long long>(0, i0); i < i1; ++i)
                row[i] += amp * em.sample_at(static_cast<double>(i) / fs - delay);
        }
    }

    if (scene.noise_std > 0.0) {
        RandomStream rng(derive_seed({scene.rng_seed, 0x6e6f697365ULL, frame_number,
                                      static_cast<uint64_t>(pair_member)}));
        for (auto& v : frame.samples) v += rng.gaussian(0.0, scene.noise_std);
    }

    if (!scene.tgc.empty()) {
        const double dz = c / (2.0 * fs);
        for (size_t i = 0; i < frame.n_samples; ++i) {
            const double g = scene.tgc.gain_at(static_cast<double>(i) * dz);
            for (size_t e = 0; e < frame.n_elements; ++e) frame.samples[e * frame.n_samples + i] *= g;
        }
    }
    return frame;
}

// Opposite-polarity acquisition pair. Scene randomness (phantom, noise seeds)
// is shared through the scene; jitter/miss draws are independent per
// acquisition. Acquisition indices are 2*frame_number and 2*frame_number+1.
inline std::pair<RfFrame, RfFrame> simulate_pi_pair(Scene& scene, uint32_t frame_number = 0) {
    RfFrame pos = simulate_acquisition(scene, +1, frame_number, 0);
    RfFrame neg = simulate_acquisition(scene, -1, frame_number, 1);
    return {std::move(pos), std::move(neg)};
}

// Per-depth-sample gain. Gains must be strictly positive (the operation is
// invertible); sample s maps to depth s*c/(2*fs).
inline RfFrame apply_tgc(const RfFrame& frame, const TgcCurve& curve, double sound_speed_m_s) {
    curve.validate();
    if (curve.empty()) return frame;
    RfFrame out = frame;
    const double dz = sound_speed_m_s / 1000.0 / (2.0 * frame.fs_mhz);
    for (size_t i = 0; i < frame.n_samples; ++i) {
        const double g = curve.gain_at(static_cast<double>(i) * dz);
        if (!(g > 0.0)) throw std::invalid_argument("apply_tgc: gain must be > 0 over the depth range");
        for (size_t e = 0; e < frame.n_elements; ++e) out.samples[e * frame.n_samples + i] *= g;
    }
    return out;
}

} // namespace usid
