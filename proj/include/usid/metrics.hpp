#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "usid/beamform.hpp"
#include "usid/detect.hpp"

namespace usid {

struct SnrMeasurement {
    double sigma2_signal_plus_noise = 0.0;
    double sigma2_noise = 0.0;
    double snr_db = 0.0;
};

namespace detail {

// population variance (divide by N)
inline double variance(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    return var / static_cast<double>(x.size());
}

} // namespace detail

// Background line for the SNR measurement: shifted toward the image center,
// flipped outward when the shift would cross the center.
inline int snr_noise_line(int signal_line, int n_lines, int lateral_offset_lines) {
    const int center = n_lines / 2;
    int noise_line =
        signal_line + (signal_line <= center ? lateral_offset_lines : -lateral_offset_lines);
    const bool crosses = (signal_line <= center && noise_line > center) ||
                         (signal_line > center && noise_line < center);
    if (crosses)
        noise_line =
            signal_line + (signal_line <= center ? -lateral_offset_lines : lateral_offset_lines);
    return noise_line;
}

// SNR = 10*log10(sigma2_{s+n}/sigma2_n - 1), with variances taken on the
// frame-averaged image: the signal window on signal_line, and the same axial
// window on a line shifted lateral_offset_lines toward the image center
// (flipped away if the shift would cross the center).
inline SnrMeasurement compute_snr(std::span<const BeamformedImage> frames, int signal_line,
                                  std::pair<size_t, size_t> signal_axial_range,
                                  int lateral_offset_lines = 20) {
    if (frames.empty()) throw std::invalid_argument("compute_snr: need at least one frame");
    const auto& first = frames.front();
    const auto [lo, hi] = signal_axial_range;
    if (signal_line < 0 || signal_line >= first.n_lines)
        throw std::invalid_argument("compute_snr: signal_line out of range");
    if (lo >= hi || hi > first.depth_samples)
        throw std::invalid_argument("compute_snr: axial range out of bounds");

    const int noise_line = snr_noise_line(signal_line, first.n_lines, lateral_offset_lines);
    if (noise_line < 0 || noise_line >= first.n_lines)
        throw std::invalid_argument("compute_snr: noise line out of range");

    std::vector<double> sig(hi - lo, 0.0), noi(hi - lo, 0.0);
    for (const auto& f : frames) {
        if (f.n_lines != first.n_lines || f.depth_samples != first.depth_samples)
            throw std::invalid_argument("compute_snr: frames must share shape");
        for (size_t d = lo; d < hi; ++d) {
            sig[d - lo] += f.at(signal_line, d);
            noi[d - lo] += f.at(noise_line, d);
        }
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (auto& v : sig) v *= inv;
    for (auto& v : noi) v *= inv;

    SnrMeasurement m;
    m.sigma2_signal_plus_noise = detail::variance(sig);
    m.sigma2_noise = detail::variance(noi);
    if (!(m.sigma2_signal_plus_noise > m.sigma2_noise) || !(m.sigma2_noise > 0.0))
        throw std::runtime_error("compute_snr: signal variance does not exceed noise variance; SNR undefined");
    m.snr_db = 10.0 * std::log10(m.sigma2_signal_plus_noise / m.sigma2_noise - 1.0);
    return m;
}

// Per-trial statistics. Mean/variance are over successful detections only and
// absent when the trial had none; failed frames still count in the rate.
struct TrialReport {
    int id = 0;
    double depth_mm = 0.0;
    int n_frames = 0;
    int detections = 0;
    double detection_rate = 0.0;
    std::optional<double> mean_error_mm;
    std::optional<double> error_variance_mm2;
    std::vector<int> confusion_row; // counts per calculated id, index id-1
    int failed_frames = 0;
    double snr_db = std::numeric_limits<double>::quiet_NaN();
};

inline TrialReport error_stats(std::span<const std::optional<Detection>> per_frame,
                               std::pair<double, double> ground_truth_mm) {
    if (per_frame.empty()) throw std::invalid_argument("error_stats: need at least one frame");
    TrialReport r;
    r.n_frames = static_cast<int>(per_frame.size());
    std::vector<double> errors;
    for (const auto& d : per_frame) {
        if (!d) continue;
        errors.push_back(std::hypot(d->lateral_mm - ground_truth_mm.first,
                                    d->axial_mm - ground_truth_mm.second));
    }
    r.detections = static_cast<int>(errors.size());
    r.failed_frames = r.n_frames - r.detections;
    r.detection_rate = static_cast<double>(r.detections) / static_cast<double>(r.n_frames);
    if (!errors.empty()) {
        double mean = 0.0;
        for (double e : errors) mean += e;
        mean /= static_cast<double>(errors.size());
        r.mean_error_mm = mean;
        r.error_variance_mm2 = detail::variance(errors);
    }
    return r;
}

struct ConfusionRow {
    std::vector<int> counts; // calculated id 1..n_ids at index id-1
    int failed = 0;          // frames with no detection, tallied separately
};

// calculated_ids uses 0 for frames with no detection.
inline ConfusionRow confusion_histogram(std::span<const int> calculated_ids, int transmitted_id,
                                        int n_ids) {
    (void)transmitted_id;
    ConfusionRow row;
    row.counts.assign(static_cast<size_t>(n_ids), 0);
    for (int id : calculated_ids) {
        if (id == 0) {
            ++row.failed;
        } else if (id >= 1 && id <= n_ids) {
            ++row.counts[static_cast<size_t>(id) - 1];
        } else {
            throw std::invalid_argument("confusion_histogram: calculated id out of range");
        }
    }
    return row;
}

// Cross-trial aggregate: unweighted means over the trials that had at least
// one detection for the error terms; detection rates average over every trial.
struct AggregateSummary {
    int n_trials = 0;
    int n_trials_with_detections = 0;
    double mean_detection_rate = 0.0;      // arithmetic mean of per-trial rates
    double overall_detection_rate = 0.0;   // frame-weighted, over all frames
    std::optional<double> mean_error_mm;
    std::optional<double> mean_error_variance_mm2;
};

inline AggregateSummary aggregate(std::span<const TrialReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: need at least one report");
    AggregateSummary s;
    s.n_trials = static_cast<int>(reports.size());
    long long frames = 0, detections = 0;
    double rate_sum = 0.0, err_sum = 0.0, var_sum = 0.0;
    for (const auto& r : reports) {
        frames += r.n_frames;
        detections += r.detections;
        rate_sum += r.detection_rate;
        if (r.mean_error_mm) {
            ++s.n_trials_with_detections;
            err_sum += *r.mean_error_mm;
            var_sum += r.error_variance_mm2.value_or(0.0);
        }
    }
    s.mean_detection_rate = rate_sum / static_cast<double>(s.n_trials);
    s.overall_detection_rate =
        frames > 0 ? static_cast<double>(detections) / static_cast<double>(frames) : 0.0;
    if (s.n_trials_with_detections > 0) {
        s.mean_error_mm = err_sum / s.n_trials_with_detections;
        s.mean_error_variance_mm2 = var_sum / s.n_trials_with_detections;
    }
    return s;
}

// --- serialization -----------------------------------------------------------

inline nlohmann::json trial_report_to_json(const TrialReport& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["depth_mm"] = r.depth_mm;
    j["n_frames"] = r.n_frames;
    j["detections"] = r.detections;
    j["detection_rate"] = r.detection_rate;
    if (r.mean_error_mm) j["mean_error_mm"] = *r.mean_error_mm;
    else j["mean_error_mm"] = nullptr;
    if (r.error_variance_mm2) j["error_variance_mm2"] = *r.error_variance_mm2;
    else j["error_variance_mm2"] = nullptr;
    j["failed_frames"] = r.failed_frames;
    if (std::isfinite(r.snr_db)) j["snr_db"] = r.snr_db;
    else j["snr_db"] = nullptr;
    j["confusion_row"] = r.confusion_row;
    return j;
}

inline std::string optional_to_csv(const std::optional<double>& v) {
    if (!v) return "null";
    std::ostringstream os;
    os << *v;
    return os.str();
}

} // namespace usid
