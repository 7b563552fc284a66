#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "usid/binary_io.hpp"

namespace usid {

// Per-element channel data for one plane-wave transmit. Samples are stored
// element-major; polarity 0 marks a PI-combined frame.
struct RfFrame {
    int polarity = 1;
    double fs_mhz = 0.0;
    size_t n_elements = 0;
    size_t n_samples = 0;
    uint32_t frame_index = 0;
    std::vector<double> samples; // n_elements * n_samples

    double& at(size_t element, size_t sample) { return samples[element * n_samples + sample]; }
    double at(size_t element, size_t sample) const { return samples[element * n_samples + sample]; }

    double energy() const {
        double e = 0.0;
        for (double v : samples) e += v * v;
        return e;
    }

    bool same_shape(const RfFrame& o) const {
        return n_elements == o.n_elements && n_samples == o.n_samples && fs_mhz == o.fs_mhz;
    }
};

// --- USRF container ----------------------------------------------------------
//
//   magic 'USRF' | version u16 | n_elements u32 | n_samples u32 | fs f64 (MHz)
//   | polarity i8 | frame_index u32 | payload f32, element-major, little-endian

inline constexpr uint16_t kRfFormatVersion = 1;

inline void write_rf_frame(std::ostream& os, const RfFrame& f) {
    os.write("USRF", 4);
    bin::put_u16(os, kRfFormatVersion);
    bin::put_u32(os, static_cast<uint32_t>(f.n_elements));
    bin::put_u32(os, static_cast<uint32_t>(f.n_samples));
    bin::put_f64(os, f.fs_mhz);
    bin::put_i8(os, static_cast<int8_t>(f.polarity));
    bin::put_u32(os, f.frame_index);
    for (double v : f.samples) bin::put_f32(os, static_cast<float>(v));
    if (!os) throw std::runtime_error("USRF: write failed");
}

inline RfFrame read_rf_frame(std::istream& is) {
    char magic[4];
    bin::get_bytes(is, magic, 4, "magic");
    if (std::string(magic, 4) != "USRF") throw std::runtime_error("USRF: bad magic");
    uint16_t version = bin::get_u16(is, "version");
    if (version != kRfFormatVersion) throw std::runtime_error("USRF: unsupported version");
    RfFrame f;
    f.n_elements = bin::get_u32(is, "n_elements");
    f.n_samples = bin::get_u32(is, "n_samples");
    f.fs_mhz = bin::get_f64(is, "fs");
    f.polarity = bin::get_i8(is, "polarity");
    f.frame_index = bin::get_u32(is, "frame_index");
    f.samples.resize(f.n_elements * f.n_samples);
    for (auto& v : f.samples) v = static_cast<double>(bin::get_f32(is, "sample"));
    return f;
}

inline void save_rf_frame(const std::string& path, const RfFrame& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("USRF: cannot open '" + path + "' for writing");
    write_rf_frame(os, f);
}

inline RfFrame load_rf_frame(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("USRF: cannot open '" + path + "'");
    return read_rf_frame(is);
}

} // namespace usid
