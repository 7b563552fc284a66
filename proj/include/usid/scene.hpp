#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "usid/clip.hpp"
#include "usid/codebook.hpp"
#include "usid/rng.hpp"

namespace usid {

struct ArrayGeometry {
    int n_elements = 128;
    double pitch_mm = 0.3;

    // Element lateral positions on the z=0 line, symmetric about 0.
    double element_x_mm(int e) const {
        return (static_cast<double>(e) - (n_elements - 1) / 2.0) * pitch_mm;
    }

    double half_extent_mm() const { return (n_elements - 1) / 2.0 * pitch_mm; }

    void validate() const {
        if (n_elements < 1) throw std::invalid_argument("geometry: n_elements must be >= 1");
        if (pitch_mm <= 0.0) throw std::invalid_argument("geometry: pitch must be > 0");
    }
};

struct TransmitPulse {
    double center_mhz = 5.0;
    double cycles = 1.0; // -6 dB envelope width in carrier periods
    double amplitude = 1.0;
    int polarity = 1;

    // Envelope sigma from the -6 dB width; support is +-3 sigma, which keeps
    // the spectrum inside Nyquist at the default 25 MHz sampling rate.
    double envelope_sigma_us() const { return cycles / center_mhz / 2.3548200450309493; }
    double duration_us() const { return 6.0 * envelope_sigma_us(); }

    double eval(double tau_us) const {
        const double T = duration_us();
        if (tau_us < 0.0 || tau_us > T) return 0.0;
        const double sigma = envelope_sigma_us();
        const double d = tau_us - T / 2.0;
        return amplitude * std::exp(-d * d / (2.0 * sigma * sigma)) *
               std::sin(2.0 * 3.14159265358979323846 * center_mhz * tau_us);
    }
};

struct Scatterer {
    double x_mm = 0.0;
    double z_mm = 0.0;
    double reflectivity = 1.0;
};

// Depth-dependent gain as piecewise-linear control points (depth mm, linear
// gain). Empty curve is unity gain.
struct TgcCurve {
    std::vector<std::pair<double, double>> points;

    bool empty() const { return points.empty(); }

    void validate() const {
        for (const auto& [d, g] : points) {
            (void)d;
            if (!(g > 0.0)) throw std::invalid_argument("tgc: gains must be > 0");
        }
        for (size_t i = 1; i < points.size(); ++i)
            if (points[i].first <= points[i - 1].first)
                throw std::invalid_argument("tgc: depths must be strictly increasing");
    }

    double gain_at(double depth_mm) const {
        if (points.empty()) return 1.0;
        if (depth_mm <= points.front().first) return points.front().second;
        if (depth_mm >= points.back().first) return points.back().second;
        for (size_t i = 1; i < points.size(); ++i) {
            if (depth_mm <= points[i].first) {
                const auto& [d0, g0] = points[i - 1];
                const auto& [d1, g1] = points[i];
                double f = (depth_mm - d0) / (d1 - d0);
                return g0 + f * (g1 - g0);
            }
        }
        return points.back().second;
    }
};

// A clip placed in a scene: config, bound code, and runtime trigger state.
struct ClipInstance {
    ClipConfig cfg;
    PnCode code;
    ClipState state;
    bool active = true;
};

struct Scene {
    ArrayGeometry geometry;
    double sound_speed_m_s = 1540.0;
    double fs_mhz = 25.0;
    double acquisition_window_us = 112.0;
    double pri_us = 150.0; // spacing between successive acquisitions
    TransmitPulse pulse;
    std::vector<Scatterer> scatterers;
    std::vector<ClipInstance> clips;
    double noise_std = 0.0;
    double attenuation_db_cm_mhz = 0.5;
    TgcCurve tgc;
    uint64_t rng_seed = 1;
    std::vector<std::string> warnings;

    double c_mm_us() const { return sound_speed_m_s / 1000.0; }
    size_t n_samples() const {
        return static_cast<size_t>(std::llround(acquisition_window_us * fs_mhz));
    }
    double max_depth_mm() const { return acquisition_window_us * c_mm_us() / 2.0; }

    void validate() {
        geometry.validate();
        if (fs_mhz <= 0.0) throw std::invalid_argument("scene: fs must be > 0");
        if (acquisition_window_us <= 0.0)
            throw std::invalid_argument("scene: acquisition_window must be > 0");
        if (sound_speed_m_s <= 0.0) throw std::invalid_argument("scene: sound_speed must be > 0");
        if (noise_std < 0.0) throw std::invalid_argument("scene: noise_std must be >= 0");
        tgc.validate();
        for (const auto& s : scatterers) {
            if (!std::isfinite(s.reflectivity) || !std::isfinite(s.x_mm) || !std::isfinite(s.z_mm))
                throw std::invalid_argument("scene: scatterer fields must be finite");
            if (s.z_mm <= 0.0) throw std::invalid_argument("scene: scatterer axial positions must be > 0");
            if (s.z_mm > max_depth_mm())
                throw std::invalid_argument("scene: acquisition window does not cover the deepest scatterer");
        }
        for (auto& c : clips) {
            c.cfg.validate();
            const double margin = geometry.pitch_mm;
            if (std::abs(c.cfg.x_mm) > geometry.half_extent_mm() + margin || c.cfg.z_mm <= 0.0 ||
                c.cfg.z_mm > max_depth_mm()) {
                std::ostringstream os;
                os << "clip id " << c.cfg.id << " at (" << c.cfg.x_mm << ", " << c.cfg.z_mm
                   << ") mm is outside the insonified region; it will never trigger";
                warnings.push_back(os.str());
                c.active = false;
            }
        }
    }
};

// Uniformly random scatterer field. Count is round(density * area_cm2);
// deterministic for a fixed seed.
inline std::vector<Scatterer> make_phantom(uint64_t rng_seed, double density_per_cm2,
                                           double lateral_lo_mm, double lateral_hi_mm,
                                           double axial_lo_mm, double axial_hi_mm,
                                           double reflectivity_lo = 0.2,
                                           double reflectivity_hi = 1.0) {
    if (density_per_cm2 <= 0.0)
        throw std::invalid_argument("make_phantom: density must be > 0");
    if (lateral_hi_mm <= lateral_lo_mm || axial_hi_mm <= axial_lo_mm)
        throw std::invalid_argument("make_phantom: region must be nonempty");
    const double area_cm2 =
        (lateral_hi_mm - lateral_lo_mm) / 10.0 * (axial_hi_mm - axial_lo_mm) / 10.0;
    const auto n = static_cast<size_t>(std::llround(density_per_cm2 * area_cm2));
    RandomStream rng(derive_seed({rng_seed, 0x7068616e746f6dULL}));
    std::vector<Scatterer> out(n);
    for (auto& s : out) {
        s.x_mm = rng.uniform(lateral_lo_mm, lateral_hi_mm);
        s.z_mm = rng.uniform(axial_lo_mm, axial_hi_mm);
        s.reflectivity = rng.uniform(reflectivity_lo, reflectivity_hi);
    }
    return out;
}

// --- JSON scene configuration -------------------------------------------------

namespace cfgjson {

using nlohmann::json;

inline void require_keys(const json& obj, const std::string& ctx,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok)
            throw std::runtime_error("config: unknown key '" + key + "' in " + ctx);
    }
}

inline ClipConfig clip_from_json(const json& j) {
    require_keys(j, "clip",
                 {"id", "x_mm", "z_mm", "trigger_threshold", "trigger_delay_mean_us",
                  "jitter_std_us", "miss_probability_second_pulse", "lockout_duration_us",
                  "chip_rate_mhz", "duty_cycle", "amplitude", "crystal_center_mhz",
                  "crystal_fractional_bandwidth"});
    ClipConfig c;
    c.id = j.value("id", c.id);
    c.x_mm = j.value("x_mm", c.x_mm);
    c.z_mm = j.value("z_mm", c.z_mm);
    c.trigger_threshold = j.value("trigger_threshold", c.trigger_threshold);
    c.trigger_delay_mean_us = j.value("trigger_delay_mean_us", c.trigger_delay_mean_us);
    c.jitter_std_us = j.value("jitter_std_us", c.jitter_std_us);
    c.miss_probability_second_pulse =
        j.value("miss_probability_second_pulse", c.miss_probability_second_pulse);
    c.lockout_duration_us = j.value("lockout_duration_us", c.lockout_duration_us);
    c.chip_rate_mhz = j.value("chip_rate_mhz", c.chip_rate_mhz);
    c.duty_cycle = j.value("duty_cycle", c.duty_cycle);
    c.amplitude = j.value("amplitude", c.amplitude);
    c.crystal_center_mhz = j.value("crystal_center_mhz", c.crystal_center_mhz);
    c.crystal_fractional_bandwidth =
        j.value("crystal_fractional_bandwidth", c.crystal_fractional_bandwidth);
    return c;
}

} // namespace cfgjson

// Parses a scene from JSON text. Unknown keys anywhere are rejected. Clips are
// parsed but not yet bound to codes; call bind_codebook before simulating.
inline Scene scene_from_json(const nlohmann::json& j) {
    using cfgjson::require_keys;
    require_keys(j, "scene",
                 {"geometry", "sound_speed_m_s", "fs_mhz", "acquisition_window_us", "pri_us",
                  "pulse", "phantom", "scatterers", "clips", "noise_std", "attenuation_db_cm_mhz",
                  "tgc", "rng_seed"});
    Scene s;
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        require_keys(g, "geometry", {"n_elements", "pitch_mm"});
        s.geometry.n_elements = g.value("n_elements", s.geometry.n_elements);
        s.geometry.pitch_mm = g.value("pitch_mm", s.geometry.pitch_mm);
    }
    s.sound_speed_m_s = j.value("sound_speed_m_s", s.sound_speed_m_s);
    s.fs_mhz = j.value("fs_mhz", s.fs_mhz);
    s.acquisition_window_us = j.value("acquisition_window_us", s.acquisition_window_us);
    s.pri_us = j.value("pri_us", s.pri_us);
    if (j.contains("pulse")) {
        const auto& p = j["pulse"];
        require_keys(p, "pulse", {"center_mhz", "cycles", "amplitude", "polarity"});
        s.pulse.center_mhz = p.value("center_mhz", s.pulse.center_mhz);
        s.pulse.cycles = p.value("cycles", s.pulse.cycles);
        s.pulse.amplitude = p.value("amplitude", s.pulse.amplitude);
        s.pulse.polarity = p.value("polarity", s.pulse.polarity);
    }
    if (j.contains("phantom")) {
        const auto& p = j["phantom"];
        require_keys(p, "phantom",
                     {"rng_seed", "density_per_cm2", "lateral_mm", "axial_mm", "reflectivity"});
        uint64_t seed = p.value("rng_seed", uint64_t{7});
        double density = p.value("density_per_cm2", 10.0);
        auto lat = p.value("lateral_mm", std::vector<double>{-19.2, 19.2});
        auto ax = p.value("axial_mm", std::vector<double>{2.0, 50.0});
        auto refl = p.value("reflectivity", std::vector<double>{0.2, 1.0});
        if (lat.size() != 2 || ax.size() != 2 || refl.size() != 2)
            throw std::runtime_error("config: phantom ranges must be [lo, hi] pairs");
        s.scatterers = make_phantom(seed, density, lat[0], lat[1], ax[0], ax[1], refl[0], refl[1]);
    }
    if (j.contains("scatterers")) {
        for (const auto& row : j["scatterers"]) {
            if (!row.is_array() || row.size() != 3)
                throw std::runtime_error("config: scatterers must be [x_mm, z_mm, reflectivity] triples");
            s.scatterers.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
        }
    }
    if (j.contains("clips")) {
        for (const auto& cj : j["clips"]) {
            ClipInstance inst;
            inst.cfg = cfgjson::clip_from_json(cj);
            s.clips.push_back(inst);
        }
    }
    s.noise_std = j.value("noise_std", s.noise_std);
    s.attenuation_db_cm_mhz = j.value("attenuation_db_cm_mhz", s.attenuation_db_cm_mhz);
    if (j.contains("tgc")) {
        for (const auto& row : j["tgc"]) {
            if (!row.is_array() || row.size() != 2)
                throw std::runtime_error("config: tgc must be [depth_mm, gain] pairs");
            s.tgc.points.emplace_back(row[0].get<double>(), row[1].get<double>());
        }
    }
    s.rng_seed = j.value("rng_seed", s.rng_seed);
    s.validate();
    return s;
}

// Reports JSON parse errors with line/column resolved from the byte offset.
inline nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string text = buf.str();
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << "config: parse error in " << path << " at line " << line << ", column " << col << ": "
           << e.what();
        throw std::runtime_error(os.str());
    }
}

inline Scene scene_from_json_file(const std::string& path) {
    return scene_from_json(parse_json_file(path));
}

// Attaches each clip's PN code from the codebook (by clip id).
inline void bind_codebook(Scene& s, const Codebook& cb) {
    for (auto& c : s.clips) {
        if (c.cfg.id < 1 || static_cast<size_t>(c.cfg.id) > cb.codes.size())
            throw std::runtime_error("scene: clip id " + std::to_string(c.cfg.id) +
                                     " not present in codebook");
        c.code = cb.codes[static_cast<size_t>(c.cfg.id) - 1];
    }
}

} // namespace usid
