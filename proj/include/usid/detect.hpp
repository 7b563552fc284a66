#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "usid/beamform.hpp"
#include "usid/clip.hpp"
#include "usid/codebook.hpp"
#include "usid/correlate.hpp"
#include "usid/parallel.hpp"
#include "usid/simulate.hpp"

namespace usid {

// Unit-energy reference waveform per codebook ID: the clip model's
// crystal-filtered chip train sampled at the image rate. lead_offset is the
// sample index of the chip train's leading edge inside each reference.
struct ReferenceSet {
    std::vector<std::vector<double>> waveforms; // index id-1
    double fs_mhz = 0.0;
    size_t lead_offset = 0;

    size_t n_ids() const { return waveforms.size(); }
};

inline ReferenceSet build_references(const Codebook& cb, const ClipConfig& clip_cfg, double fs_mhz) {
    ReferenceSet refs;
    refs.fs_mhz = fs_mhz;
    BandpassKernel k = gaussian_bandpass_kernel(clip_cfg.crystal_center_mhz,
                                                clip_cfg.crystal_fractional_bandwidth, fs_mhz);
    refs.lead_offset = k.center_index;
    for (const auto& code : cb.codes) {
        SampledWaveform train = synthesize_chip_train(
            std::span<const int8_t>(code.chips.data(), code.chips.size()), clip_cfg.chip_rate_mhz,
            clip_cfg.duty_cycle, 1.0, fs_mhz);
        SampledWaveform filt = apply_crystal_response(train, clip_cfg.crystal_center_mhz,
                                                      clip_cfg.crystal_fractional_bandwidth);
        double e = filt.energy();
        const double inv = e > 0.0 ? 1.0 / std::sqrt(e) : 0.0;
        for (auto& v : filt.samples) v *= inv;
        refs.waveforms.push_back(std::move(filt.samples));
    }
    return refs;
}

struct DetectorConfig {
    double on_threshold = 0.3;
    CorrMode normalization = CorrMode::global;
    double axial_offset_mm = 0.0; // one-way vs two-way travel bias, see calibrate_axial_offset
    // Candidate lines must hold at least this fraction of the strongest
    // line's energy. The clip's fan tail smears weak code-like residue across
    // distant lines; in near-noise-free images those wisps correlate with the
    // wrong codes well above the codebook separation. Noise levels the
    // per-line energies, so the gate is inactive in ordinary noisy scenes.
    double min_line_energy_fraction = 0.1;

    void validate() const {
        if (on_threshold <= 0.0 || on_threshold >= 1.0)
            throw std::invalid_argument("detector: on_threshold must be in (0, 1)");
        if (min_line_energy_fraction < 0.0 || min_line_energy_fraction >= 1.0)
            throw std::invalid_argument("detector: min_line_energy_fraction must be in [0, 1)");
    }
};

struct Detection {
    int id = 0;
    double lateral_mm = 0.0;
    double axial_mm = 0.0;
    double score = 0.0;
    uint32_t frame_index = 0;
};

// Best |normalized correlation| per ID over every line and every lag at which
// the reference lies fully inside the line.
struct IdPeak {
    double score = 0.0;
    int line = -1;
    int lag = -1;
};

namespace detail {

// Per-line frequency-domain correlation against each reference. Peaks are
// reduced line-ascending / lag-ascending with strict improvement, which makes
// the argmax unique and independent of scheduling.
inline std::vector<IdPeak> compute_id_peaks(const BeamformedImage& img, const ReferenceSet& refs,
                                            const DetectorConfig& cfg, int only_id = 0,
                                            unsigned workers = 0) {
    if (refs.n_ids() == 0) throw std::invalid_argument("detector: empty reference set");
    if (img.fs_mhz != refs.fs_mhz)
        throw std::invalid_argument("detector: reference fs does not match image fs");
    const size_t n = img.depth_samples;
    size_t m_max = 0;
    for (const auto& r : refs.waveforms) m_max = std::max(m_max, r.size());
    if (m_max == 0 || m_max > n)
        throw std::invalid_argument("detector: reference length must be in [1, depth_samples]");
    const size_t p = next_pow2(n + m_max - 1);

    const size_t n_ids = refs.n_ids();
    std::vector<std::vector<cplx>> ref_fft(n_ids);
    for (size_t q = 0; q < n_ids; ++q) {
        if (only_id != 0 && static_cast<int>(q) + 1 != only_id) continue;
        std::vector<cplx> spec(p, cplx(0, 0));
        const auto& w = refs.waveforms[q];
        for (size_t i = 0; i < w.size(); ++i) spec[i] = cplx(w[i], 0.0);
        fft_inplace(spec, false);
        for (auto& v : spec) v = std::conj(v);
        ref_fft[q] = std::move(spec);
    }

    // line-energy gate: see DetectorConfig::min_line_energy_fraction
    std::vector<double> line_energy(static_cast<size_t>(img.n_lines), 0.0);
    double max_line_energy = 0.0;
    for (int l = 0; l < img.n_lines; ++l) {
        const double* line = &img.values[static_cast<size_t>(l) * n];
        double e = 0.0;
        for (size_t i = 0; i < n; ++i) e += line[i] * line[i];
        line_energy[static_cast<size_t>(l)] = e;
        max_line_energy = std::max(max_line_energy, e);
    }
    const double energy_gate = cfg.min_line_energy_fraction * max_line_energy;

    std::vector<IdPeak> per_line(static_cast<size_t>(img.n_lines) * n_ids);
    parallel_for(static_cast<size_t>(img.n_lines), [&](size_t l) {
        if (line_energy[l] < energy_gate || line_energy[l] == 0.0) return;
        const double* line = &img.values[l * n];
        std::vector<cplx> line_fft(p, cplx(0, 0));
        const double e_line = line_energy[l];
        for (size_t i = 0; i < n; ++i) line_fft[i] = cplx(line[i], 0.0);
        std::vector<double> prefix;
        if (cfg.normalization == CorrMode::windowed) {
            prefix.resize(n + 1, 0.0);
            for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + line[i] * line[i];
        }
        fft_inplace(line_fft, false);

        std::vector<cplx> prod(p);
        for (size_t q = 0; q < n_ids; ++q) {
            if (only_id != 0 && static_cast<int>(q) + 1 != only_id) continue;
            const size_t m = refs.waveforms[q].size();
            for (size_t i = 0; i < p; ++i) prod[i] = line_fft[i] * ref_fft[q][i];
            fft_inplace(prod, true);

            IdPeak best;
            const size_t k_max = n - m; // full containment only
            if (cfg.normalization == CorrMode::global) {
                const double denom = std::sqrt(e_line); // references are unit energy
                if (denom > 0.0) {
                    for (size_t k = 0; k <= k_max; ++k) {
                        const double v = std::abs(prod[k].real()) / denom;
                        if (v > best.score) {
                            best.score = v;
                            best.lag = static_cast<int>(k);
                        }
                    }
                }
            } else {
                for (size_t k = 0; k <= k_max; ++k) {
                    const double e_win = prefix[k + m] - prefix[k];
                    if (e_win <= 0.0) continue;
                    const double v = std::abs(prod[k].real()) / std::sqrt(e_win);
                    if (v > best.score) {
                        best.score = v;
                        best.lag = static_cast<int>(k);
                    }
                }
            }
            best.line = static_cast<int>(l);
            per_line[l * n_ids + q] = best;
        }
    }, workers);

    std::vector<IdPeak> out(n_ids);
    for (int l = 0; l < img.n_lines; ++l) {
        for (size_t q = 0; q < n_ids; ++q) {
            const IdPeak& cand = per_line[static_cast<size_t>(l) * n_ids + q];
            if (cand.line >= 0 && cand.score > out[q].score) out[q] = cand;
        }
    }
    return out;
}

inline Detection peak_to_detection(const BeamformedImage& img, const ReferenceSet& refs,
                                   const DetectorConfig& cfg, int id, const IdPeak& peak) {
    Detection d;
    d.id = id;
    d.lateral_mm = img.line_x_mm(peak.line);
    d.axial_mm = img.depth_mm(static_cast<double>(peak.lag) +
                              static_cast<double>(refs.lead_offset)) -
                 cfg.axial_offset_mm;
    d.score = peak.score;
    d.frame_index = img.frame_index;
    return d;
}

// Best |normalized correlation| of one reference on one line, restricted to
// lags in [lag_lo, lag_hi]. Direct sums; used on single candidate lines.
inline double line_score_in_window(const BeamformedImage& img, const ReferenceSet& refs,
                                   const DetectorConfig& cfg, int line, size_t ref_index,
                                   long long lag_lo, long long lag_hi) {
    const size_t n = img.depth_samples;
    const auto& ref = refs.waveforms[ref_index];
    const size_t m = ref.size();
    const double* lv = &img.values[static_cast<size_t>(line) * n];
    double e_line = 0.0;
    for (size_t i = 0; i < n; ++i) e_line += lv[i] * lv[i];
    std::vector<double> prefix;
    if (cfg.normalization == CorrMode::windowed) {
        prefix.resize(n + 1, 0.0);
        for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + lv[i] * lv[i];
    }
    lag_lo = std::max<long long>(0, lag_lo);
    lag_hi = std::min<long long>(static_cast<long long>(n - m), lag_hi);
    double best = 0.0;
    for (long long k = lag_lo; k <= lag_hi; ++k) {
        double r = 0.0;
        for (size_t i = 0; i < m; ++i) r += lv[static_cast<size_t>(k) + i] * ref[i];
        double denom;
        if (cfg.normalization == CorrMode::global) {
            denom = std::sqrt(e_line);
        } else {
            denom = std::sqrt(prefix[static_cast<size_t>(k) + m] - prefix[static_cast<size_t>(k)]);
        }
        if (denom > 0.0) best = std::max(best, std::abs(r) / denom);
    }
    return best;
}

// A candidate stands only if its code explains its line better than every
// other code within one reference length of its lag. The clip's smeared tail
// correlates with wrong codes at up to the codebook separation plus a
// beamforming-induced margin; the true code always scores higher on the same
// segment.
inline bool verify_against_other_ids(const BeamformedImage& img, const ReferenceSet& refs,
                                     const DetectorConfig& cfg, int id, const IdPeak& cand) {
    const auto m = static_cast<long long>(refs.waveforms[static_cast<size_t>(id) - 1].size());
    for (size_t q = 0; q < refs.n_ids(); ++q) {
        if (static_cast<int>(q) + 1 == id) continue;
        double other = line_score_in_window(img, refs, cfg, cand.line, q,
                                            static_cast<long long>(cand.lag) - m,
                                            static_cast<long long>(cand.lag) + m);
        if (other > cand.score) return false;
    }
    return true;
}

} // namespace detail

namespace detail {

inline std::optional<Detection> selected_from_peaks(const BeamformedImage& img,
                                                    const ReferenceSet& refs,
                                                    const DetectorConfig& cfg, int id,
                                                    std::span<const IdPeak> peaks) {
    const IdPeak& peak = peaks[static_cast<size_t>(id) - 1];
    if (peak.line < 0 || peak.score < cfg.on_threshold) return std::nullopt;
    if (!verify_against_other_ids(img, refs, cfg, id, peak)) return std::nullopt;
    return peak_to_detection(img, refs, cfg, id, peak);
}

inline std::optional<Detection> freewheel_from_peaks(const BeamformedImage& img,
                                                     const ReferenceSet& refs,
                                                     const DetectorConfig& cfg,
                                                     std::span<const IdPeak> peaks) {
    int best_id = 0;
    for (size_t q = 0; q < peaks.size(); ++q) {
        if (peaks[q].line < 0 || peaks[q].score < cfg.on_threshold) continue;
        if (best_id == 0 || peaks[q].score > peaks[static_cast<size_t>(best_id) - 1].score)
            best_id = static_cast<int>(q) + 1;
    }
    if (best_id == 0) return std::nullopt;
    return peak_to_detection(img, refs, cfg, best_id, peaks[static_cast<size_t>(best_id) - 1]);
}

inline std::vector<Detection> multi_from_peaks(const BeamformedImage& img, const ReferenceSet& refs,
                                               const DetectorConfig& cfg,
                                               std::span<const IdPeak> peaks) {
    std::vector<Detection> cands;
    for (size_t q = 0; q < peaks.size(); ++q) {
        if (peaks[q].line < 0 || peaks[q].score < cfg.on_threshold) continue;
        if (!verify_against_other_ids(img, refs, cfg, static_cast<int>(q) + 1, peaks[q])) continue;
        cands.push_back(peak_to_detection(img, refs, cfg, static_cast<int>(q) + 1, peaks[q]));
    }
    std::sort(cands.begin(), cands.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    constexpr double kNmsRadiusMm = 2.0;
    std::vector<Detection> kept;
    for (const auto& c : cands) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.id == c.id) continue;
            const double dist = std::hypot(k.lateral_mm - c.lateral_mm, k.axial_mm - c.axial_mm);
            if (dist <= kNmsRadiusMm) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) { return a.id < b.id; });
    return kept;
}

} // namespace detail

// Selected-ID mode: search one code across all lines; its peak is a detection
// when it crosses the ON threshold and no other code explains that segment
// better.
inline std::optional<Detection> detect_selected(const BeamformedImage& img, int id,
                                                const ReferenceSet& refs, const DetectorConfig& cfg,
                                                unsigned workers = 0) {
    cfg.validate();
    if (id < 1 || static_cast<size_t>(id) > refs.n_ids())
        throw std::invalid_argument("detect_selected: id not in reference set");
    auto peaks = detail::compute_id_peaks(img, refs, cfg, id, workers);
    return detail::selected_from_peaks(img, refs, cfg, id, peaks);
}

// Freewheeling mode: correlate against every code; the highest-scoring ID that
// crosses the threshold wins, ties to the lower ID.
inline std::optional<Detection> detect_freewheeling(const BeamformedImage& img,
                                                    const ReferenceSet& refs,
                                                    const DetectorConfig& cfg,
                                                    unsigned workers = 0) {
    cfg.validate();
    auto peaks = detail::compute_id_peaks(img, refs, cfg, 0, workers);
    return detail::freewheel_from_peaks(img, refs, cfg, peaks);
}

// Multi-ID mode: per-ID detection plus non-maximum suppression — detections of
// different IDs within a 2 mm radius are removed in favor of the higher score.
inline std::vector<Detection> detect_multi(const BeamformedImage& img, const ReferenceSet& refs,
                                           const DetectorConfig& cfg, unsigned workers = 0) {
    cfg.validate();
    auto peaks = detail::compute_id_peaks(img, refs, cfg, 0, workers);
    return detail::multi_from_peaks(img, refs, cfg, peaks);
}

// All three modes from one correlation pass; behaviorally identical to the
// mode-specific functions above.
struct FrameDetections {
    std::vector<IdPeak> peaks;
    std::optional<Detection> selected;
    std::optional<Detection> freewheel;
    std::vector<Detection> multi;
};

inline FrameDetections detect_all(const BeamformedImage& img, const ReferenceSet& refs,
                                  const DetectorConfig& cfg, int selected_id,
                                  unsigned workers = 0) {
    cfg.validate();
    FrameDetections out;
    out.peaks = detail::compute_id_peaks(img, refs, cfg, 0, workers);
    if (selected_id >= 1 && static_cast<size_t>(selected_id) <= refs.n_ids())
        out.selected = detail::selected_from_peaks(img, refs, cfg, selected_id, out.peaks);
    out.freewheel = detail::freewheel_from_peaks(img, refs, cfg, out.peaks);
    out.multi = detail::multi_from_peaks(img, refs, cfg, out.peaks);
    return out;
}

// The clip emits one-way while the beamformer assumes two-way travel, so the
// correlation peak sits below the true depth. Measures that bias once per
// configuration from a clean simulated clip at a known depth.
inline double calibrate_axial_offset(const Scene& base_scene, const ClipConfig& clip_template,
                                     const Codebook& cb, const ReferenceSet& refs,
                                     const BeamformConfig& bf_cfg, const DetectorConfig& det_cfg,
                                     double depth_mm = 20.0) {
    Scene scene = base_scene;
    scene.scatterers.clear();
    scene.clips.clear();
    scene.noise_std = 0.0;
    scene.tgc = TgcCurve{};
    scene.warnings.clear();

    ClipInstance inst;
    inst.cfg = clip_template;
    inst.cfg.id = 1;
    inst.cfg.x_mm = 0.0;
    inst.cfg.z_mm = depth_mm;
    inst.cfg.jitter_std_us = 0.0;
    inst.cfg.miss_probability_second_pulse = 0.0;
    scene.clips.push_back(inst);
    bind_codebook(scene, cb);
    scene.validate();

    auto [pos, neg] = simulate_pi_pair(scene, 0);
    RfFrame summed = pi_sum(pos, neg);
    BeamformedImage img = das_beamform(summed, scene.geometry, scene.sound_speed_m_s, bf_cfg);

    DetectorConfig cal = det_cfg;
    cal.axial_offset_mm = 0.0;
    auto peaks = detail::compute_id_peaks(img, refs, cal, 1);
    if (peaks[0].line < 0)
        throw std::runtime_error("calibrate_axial_offset: no correlation peak found");
    Detection d = detail::peak_to_detection(img, refs, cal, 1, peaks[0]);
    return d.axial_mm - depth_mm;
}

} // namespace usid
