#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "usid/codebook.hpp"
#include "usid/rng.hpp"
#include "usid/waveform.hpp"

namespace usid {

// Behavioral parameters of one USID clip. Amplitudes are in normalized
// simulation units; trigger_threshold is a fraction of the nominal incident
// pulse amplitude (the simulator has no absolute voltage calibration).
struct ClipConfig {
    int id = 1;
    double x_mm = 0.0;
    double z_mm = 20.0;
    double trigger_threshold = 0.05;
    double trigger_delay_mean_us = 0.5;
    double jitter_std_us = 0.05;
    double miss_probability_second_pulse = 0.05;
    double lockout_duration_us = -1.0; // <0: resolved to 2x code duration
    double chip_rate_mhz = 3.90;
    double duty_cycle = 0.33;
    double amplitude = 1.0;
    double crystal_center_mhz = 1.2;
    double crystal_fractional_bandwidth = 1.0;

    double code_duration_us() const { return kChipCount / chip_rate_mhz; }

    double lockout_us() const {
        return lockout_duration_us < 0.0 ? 2.0 * code_duration_us() : lockout_duration_us;
    }

    void validate() const {
        if (chip_rate_mhz <= 0.0) throw std::invalid_argument("clip: chip_rate must be > 0");
        if (duty_cycle <= 0.0 || duty_cycle >= 1.0)
            throw std::invalid_argument("clip: duty_cycle must be in (0, 1)");
        if (amplitude <= 0.0) throw std::invalid_argument("clip: amplitude must be > 0");
        if (miss_probability_second_pulse < 0.0 || miss_probability_second_pulse > 1.0)
            throw std::invalid_argument("clip: miss_probability_second_pulse must be in [0, 1]");
        if (lockout_us() < code_duration_us())
            throw std::invalid_argument("clip: lockout_duration must cover the code duration");
        if (trigger_threshold <= 0.0) throw std::invalid_argument("clip: trigger_threshold must be > 0");
        if (jitter_std_us < 0.0) throw std::invalid_argument("clip: jitter_std must be >= 0");
    }
};

struct ClipState {
    bool armed = true;
    double lockout_until_us = -1e300;              // absolute clock
    std::optional<double> last_trigger_time_us;    // absolute clock
};

struct TriggerEvent {
    double time_us = 0.0; // emission start, same clock as the incident waveform's t0
    bool late = false;    // second-pulse anomaly resolved as extra delay
};

// Threshold trigger with comparator jitter and lockout. `incident` times are
// relative to the acquisition start; `now_us` is the acquisition start on the
// absolute clock used for lockout bookkeeping. The second acquisition of a PI
// pair can miss or fire late with probability miss_probability_second_pulse.
inline std::optional<TriggerEvent> step_trigger(ClipState& state, const ClipConfig& cfg,
                                                const SampledWaveform& incident, double now_us,
                                                RandomStream& rng, bool second_of_pair = false) {
    if (!state.armed || now_us < state.lockout_until_us) return std::nullopt;

    size_t cross = incident.samples.size();
    for (size_t i = 0; i < incident.samples.size(); ++i) {
        if (std::abs(incident.samples[i]) >= cfg.trigger_threshold) {
            cross = i;
            break;
        }
    }
    if (cross == incident.samples.size()) return std::nullopt;

    double t_cross = incident.t0_us + static_cast<double>(cross) / incident.fs_mhz;
    double jitter = cfg.jitter_std_us > 0.0 ? rng.gaussian_truncated3(0.0, cfg.jitter_std_us) : 0.0;
    TriggerEvent ev;
    ev.time_us = t_cross + cfg.trigger_delay_mean_us + jitter;

    if (second_of_pair && cfg.miss_probability_second_pulse > 0.0) {
        if (rng.uniform() < cfg.miss_probability_second_pulse) {
            if (rng.uniform() < 0.5) return std::nullopt; // missed entirely
            ev.time_us += rng.uniform(0.3, 1.0);          // fired with extra delay
            ev.late = true;
        }
    }

    state.lockout_until_us = now_us + ev.time_us + cfg.lockout_us();
    state.last_trigger_time_us = now_us + ev.time_us;
    return ev;
}

// The transmitted USID waveform for one trigger: crystal-filtered chip train
// starting at the trigger event. Independent of the incident pulse polarity.
inline SampledWaveform emit(const ClipConfig& cfg, const TriggerEvent& trigger, const PnCode& code,
                            double fs_mhz) {
    SampledWaveform train = synthesize_chip_train(
        std::span<const int8_t>(code.chips.data(), code.chips.size()), cfg.chip_rate_mhz,
        cfg.duty_cycle, cfg.amplitude, fs_mhz);
    SampledWaveform out =
        apply_crystal_response(train, cfg.crystal_center_mhz, cfg.crystal_fractional_bandwidth);
    out.t0_us += trigger.time_us;
    return out;
}

} // namespace usid
