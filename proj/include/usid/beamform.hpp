#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "usid/binary_io.hpp"
#include "usid/fft.hpp"
#include "usid/parallel.hpp"
#include "usid/rf_frame.hpp"
#include "usid/scene.hpp"

namespace usid {

enum class SourceKind : uint8_t { single = 0, summed = 1, subtracted = 2 };

// Line-by-depth image; one line per array element, depth sample s at
// z = s*c/(2*fs).
struct BeamformedImage {
    int n_lines = 0;
    size_t depth_samples = 0;
    double fs_mhz = 0.0;
    double sound_speed_m_s = 1540.0;
    double line_pitch_mm = 0.3;
    SourceKind source_kind = SourceKind::single;
    uint32_t frame_index = 0;
    std::vector<double> values; // line-major

    double& at(int line, size_t d) { return values[static_cast<size_t>(line) * depth_samples + d]; }
    double at(int line, size_t d) const {
        return values[static_cast<size_t>(line) * depth_samples + d];
    }

    double line_x_mm(int line) const {
        return (static_cast<double>(line) - (n_lines - 1) / 2.0) * line_pitch_mm;
    }

    double depth_mm(double sample) const {
        return sample * sound_speed_m_s / 1000.0 / (2.0 * fs_mhz);
    }
};

// Sample-wise PI combination. Inputs must share shape and carry opposite
// polarity tags; the result's polarity tag is cleared.
inline RfFrame pi_sum(const RfFrame& f_pos, const RfFrame& f_neg) {
    if (!f_pos.same_shape(f_neg))
        throw std::invalid_argument("pi_sum: frame shape/fs mismatch");
    if (f_pos.polarity + f_neg.polarity != 0 || f_pos.polarity == 0)
        throw std::invalid_argument("pi_sum: frames must have opposite polarity");
    RfFrame out = f_pos;
    out.polarity = 0;
    for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += f_neg.samples[i];
    return out;
}

inline RfFrame pi_diff(const RfFrame& f_pos, const RfFrame& f_neg) {
    if (!f_pos.same_shape(f_neg))
        throw std::invalid_argument("pi_diff: frame shape/fs mismatch");
    if (f_pos.polarity + f_neg.polarity != 0 || f_pos.polarity == 0)
        throw std::invalid_argument("pi_diff: frames must have opposite polarity");
    RfFrame out = f_pos;
    out.polarity = 0;
    for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] -= f_neg.samples[i];
    return out;
}

struct BeamformConfig {
    int aperture = 0;      // receive elements per line; 0 = full array
    bool hann_apodization = false;
};

// Plane-wave delay-and-sum: image point (x_l, z) sums element e sampled at
// t = z/c + dist((x_l, z), e)/c with linear interpolation; out-of-range taps
// contribute zero. Lines sit on the element positions. Per-line sums are
// sequential so results do not depend on scheduling.
inline BeamformedImage das_beamform(const RfFrame& frame, const ArrayGeometry& geometry,
                                    double sound_speed_m_s, const BeamformConfig& cfg = {},
                                    unsigned workers = 0) {
    if (frame.n_elements != static_cast<size_t>(geometry.n_elements))
        throw std::invalid_argument("das_beamform: frame/geometry element count mismatch");

    BeamformedImage img;
    img.n_lines = geometry.n_elements;
    img.depth_samples = frame.n_samples;
    img.fs_mhz = frame.fs_mhz;
    img.sound_speed_m_s = sound_speed_m_s;
    img.line_pitch_mm = geometry.pitch_mm;
    img.source_kind = frame.polarity == 0 ? SourceKind::summed : SourceKind::single;
    img.frame_index = frame.frame_index;
    img.values.assign(static_cast<size_t>(img.n_lines) * img.depth_samples, 0.0);

    const double c = sound_speed_m_s / 1000.0;
    const double fs = frame.fs_mhz;
    const double dz = c / (2.0 * fs);
    const int n_el = geometry.n_elements;
    const int half_ap = cfg.aperture > 0 ? cfg.aperture / 2 : n_el;

    parallel_for(static_cast<size_t>(img.n_lines), [&](size_t l) {
        const int line = static_cast<int>(l);
        const double x_l = geometry.element_x_mm(line);
        const int e_lo = std::max(0, line - half_ap);
        const int e_hi = std::min(n_el - 1, line + half_ap);
        const int n_ap = e_hi - e_lo + 1;
        double* out = &img.values[l * img.depth_samples];
        for (int e = e_lo; e <= e_hi; ++e) {
            const double dx = x_l - geometry.element_x_mm(e);
            const double dx2 = dx * dx;
            double w = 1.0;
            if (cfg.hann_apodization && n_ap > 1) {
                const double u = static_cast<double>(e - e_lo) / static_cast<double>(n_ap - 1);
                w = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * u);
            }
            const double* ch = &frame.samples[static_cast<size_t>(e) * frame.n_samples];
            const auto n_samp = static_cast<long long>(frame.n_samples);
            for (size_t d = 0; d < img.depth_samples; ++d) {
                const double z = static_cast<double>(d) * dz;
                const double t = (z + std::sqrt(dx2 + z * z)) / c;
                const double u = t * fs;
                const auto j = static_cast<long long>(u);
                if (j < 0 || j + 1 >= n_samp) continue;
                const double frac = u - static_cast<double>(j);
                out[d] += w * (ch[j] + frac * (ch[j + 1] - ch[j]));
            }
        }
        const double inv = 1.0 / static_cast<double>(n_ap);
        for (size_t d = 0; d < img.depth_samples; ++d) out[d] *= inv;
    }, workers);
    return img;
}

// Envelope via the analytic signal per line, log-compressed to [0, 1] over
// dynamic_range_db. 0 dB corresponds to unit envelope amplitude; callers scale
// beforehand if they want peak-referenced display.
inline std::vector<double> envelope_bmode(const BeamformedImage& img, double dynamic_range_db) {
    if (dynamic_range_db <= 0.0)
        throw std::invalid_argument("envelope_bmode: dynamic range must be > 0");
    std::vector<double> disp(img.values.size(), 0.0);
    const size_t n = img.depth_samples;
    if (n == 0) return disp;
    const size_t p = next_pow2(n);
    for (int l = 0; l < img.n_lines; ++l) {
        std::vector<cplx> line(p, cplx(0, 0));
        for (size_t d = 0; d < n; ++d) line[d] = cplx(img.at(l, d), 0.0);
        fft_inplace(line, false);
        // analytic signal: zero negative frequencies, double positives
        for (size_t k = 1; k < p / 2; ++k) line[k] *= 2.0;
        for (size_t k = p / 2 + 1; k < p; ++k) line[k] = cplx(0, 0);
        fft_inplace(line, true);
        for (size_t d = 0; d < n; ++d) {
            const double mag = std::abs(line[d]);
            if (mag <= 0.0) continue;
            const double db = 20.0 * std::log10(mag);
            disp[static_cast<size_t>(l) * n + d] = std::clamp(1.0 + db / dynamic_range_db, 0.0, 1.0);
        }
    }
    return disp;
}

// --- USBF container ----------------------------------------------------------
//
// Mirrors USRF with the polarity byte replaced by source_kind and two extra
// f64 fields (sound speed, line pitch) that the image needs for coordinates:
//   magic 'USBF' | version u16 | n_lines u32 | depth_samples u32 | fs f64
//   | sound_speed_m_s f64 | line_pitch_mm f64 | source_kind u8 | frame_index u32
//   | payload f32 line-major

inline constexpr uint16_t kBfFormatVersion = 1;

inline void write_bf_image(std::ostream& os, const BeamformedImage& img) {
    os.write("USBF", 4);
    bin::put_u16(os, kBfFormatVersion);
    bin::put_u32(os, static_cast<uint32_t>(img.n_lines));
    bin::put_u32(os, static_cast<uint32_t>(img.depth_samples));
    bin::put_f64(os, img.fs_mhz);
    bin::put_f64(os, img.sound_speed_m_s);
    bin::put_f64(os, img.line_pitch_mm);
    bin::put_u8(os, static_cast<uint8_t>(img.source_kind));
    bin::put_u32(os, img.frame_index);
    for (double v : img.values) bin::put_f32(os, static_cast<float>(v));
    if (!os) throw std::runtime_error("USBF: write failed");
}

inline BeamformedImage read_bf_image(std::istream& is) {
    char magic[4];
    bin::get_bytes(is, magic, 4, "magic");
    if (std::string(magic, 4) != "USBF") throw std::runtime_error("USBF: bad magic");
    uint16_t version = bin::get_u16(is, "version");
    if (version != kBfFormatVersion) throw std::runtime_error("USBF: unsupported version");
    BeamformedImage img;
    img.n_lines = static_cast<int>(bin::get_u32(is, "n_lines"));
    img.depth_samples = bin::get_u32(is, "depth_samples");
    img.fs_mhz = bin::get_f64(is, "fs");
    img.sound_speed_m_s = bin::get_f64(is, "sound_speed");
    img.line_pitch_mm = bin::get_f64(is, "line_pitch");
    img.source_kind = static_cast<SourceKind>(bin::get_u8(is, "source_kind"));
    img.frame_index = bin::get_u32(is, "frame_index");
    img.values.resize(static_cast<size_t>(img.n_lines) * img.depth_samples);
    for (auto& v : img.values) v = static_cast<double>(bin::get_f32(is, "value"));
    return img;
}

inline void save_bf_image(const std::string& path, const BeamformedImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("USBF: cannot open '" + path + "' for writing");
    write_bf_image(os, img);
}

inline BeamformedImage load_bf_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("USBF: cannot open '" + path + "'");
    return read_bf_image(is);
}

} // namespace usid
