#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "usid/beamform.hpp"
#include "usid/detect.hpp"
#include "usid/metrics.hpp"
#include "usid/parallel.hpp"
#include "usid/png.hpp"
#include "usid/scene.hpp"
#include "usid/simulate.hpp"

namespace usid {

enum class DetectMode { selected, freewheel, multi };

inline std::string to_string(DetectMode m) {
    switch (m) {
        case DetectMode::selected: return "selected";
        case DetectMode::freewheel: return "freewheel";
        case DetectMode::multi: return "multi";
    }
    return "selected";
}

inline DetectMode detect_mode_from_string(const std::string& s) {
    if (s == "selected") return DetectMode::selected;
    if (s == "freewheel") return DetectMode::freewheel;
    if (s == "multi") return DetectMode::multi;
    throw std::runtime_error("config: unknown detect mode '" + s + "'");
}

struct ExperimentConfig {
    std::string scene_path;
    std::string codebook_path;
    std::vector<int> ids = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> depths_mm = {12.0, 23.0};
    int frames_per_trial = 100;
    int n_trials = 3;
    DetectorConfig detector;
    bool auto_axial_offset = true;
    BeamformConfig beamform;
    std::vector<std::pair<double, double>> noise_std_by_depth; // (depth_mm, noise_std)
    ClipConfig clip_template;
    std::string out_dir = "usid_out";
    uint64_t rng_seed = 20230710;
    DetectMode mode = DetectMode::selected;
    bool save_rf = false;
    unsigned workers = 0;

    double noise_std_for_depth(double depth_mm) const {
        for (const auto& [d, n] : noise_std_by_depth)
            if (std::abs(d - depth_mm) < 1e-9) return n;
        return -1.0; // fall back to the scene's own value
    }

    void validate() const {
        if (frames_per_trial < 1) throw std::invalid_argument("experiment: frames_per_trial must be >= 1");
        if (n_trials < 1) throw std::invalid_argument("experiment: n_trials must be >= 1");
        if (ids.empty()) throw std::invalid_argument("experiment: ids must be nonempty");
        for (double d : depths_mm)
            if (d <= 0.0) throw std::invalid_argument("experiment: depths must be positive");
        detector.validate();
    }
};

inline ExperimentConfig experiment_from_json_file(const std::string& path) {
    using cfgjson::require_keys;
    nlohmann::json j = parse_json_file(path);
    require_keys(j, "experiment",
                 {"scene", "codebook", "ids", "depths_mm", "frames_per_trial", "n_trials",
                  "detector", "beamform", "noise_std_by_depth", "clip", "out_dir", "rng_seed",
                  "mode", "save_rf"});
    ExperimentConfig cfg;
    const auto dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (dir / fp).string();
    };
    if (!j.contains("scene") || !j.contains("codebook"))
        throw std::runtime_error("config: experiment requires 'scene' and 'codebook' paths");
    cfg.scene_path = resolve(j["scene"].get<std::string>());
    cfg.codebook_path = resolve(j["codebook"].get<std::string>());
    if (j.contains("ids")) cfg.ids = j["ids"].get<std::vector<int>>();
    if (j.contains("depths_mm")) cfg.depths_mm = j["depths_mm"].get<std::vector<double>>();
    cfg.frames_per_trial = j.value("frames_per_trial", cfg.frames_per_trial);
    cfg.n_trials = j.value("n_trials", cfg.n_trials);
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        require_keys(d, "detector",
                     {"on_threshold", "normalization", "axial_offset_mm", "min_line_energy_fraction"});
        cfg.detector.on_threshold = d.value("on_threshold", cfg.detector.on_threshold);
        if (d.contains("normalization")) {
            std::string norm = d["normalization"].get<std::string>();
            if (norm == "global") cfg.detector.normalization = CorrMode::global;
            else if (norm == "windowed") cfg.detector.normalization = CorrMode::windowed;
            else throw std::runtime_error("config: unknown normalization '" + norm + "'");
        }
        if (d.contains("axial_offset_mm") && !d["axial_offset_mm"].is_null()) {
            cfg.detector.axial_offset_mm = d["axial_offset_mm"].get<double>();
            cfg.auto_axial_offset = false;
        }
        cfg.detector.min_line_energy_fraction =
            d.value("min_line_energy_fraction", cfg.detector.min_line_energy_fraction);
    }
    if (j.contains("beamform")) {
        const auto& b = j["beamform"];
        require_keys(b, "beamform", {"aperture", "hann_apodization"});
        cfg.beamform.aperture = b.value("aperture", cfg.beamform.aperture);
        cfg.beamform.hann_apodization = b.value("hann_apodization", cfg.beamform.hann_apodization);
    }
    if (j.contains("noise_std_by_depth")) {
        for (const auto& row : j["noise_std_by_depth"]) {
            if (!row.is_array() || row.size() != 2)
                throw std::runtime_error("config: noise_std_by_depth must be [depth_mm, std] pairs");
            cfg.noise_std_by_depth.emplace_back(row[0].get<double>(), row[1].get<double>());
        }
    }
    if (j.contains("clip")) cfg.clip_template = cfgjson::clip_from_json(j["clip"]);
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
    if (j.contains("mode")) cfg.mode = detect_mode_from_string(j["mode"].get<std::string>());
    cfg.save_rf = j.value("save_rf", cfg.save_rf);
    cfg.validate();
    return cfg;
}

// One JSON-line detection record per frame. A failed detection keeps the best
// sub-threshold score and is written with id 0 at the origin.
struct FrameRecord {
    uint32_t frame = 0;
    std::string mode;
    int id = 0;
    double lateral_mm = 0.0;
    double axial_mm = 0.0;
    double score = 0.0;

    std::string to_json_line() const {
        nlohmann::json j;
        j["frame"] = frame;
        j["mode"] = mode;
        j["id"] = id;
        j["lateral_mm"] = lateral_mm;
        j["axial_mm"] = axial_mm;
        j["score"] = score;
        return j.dump();
    }
};

inline FrameRecord parse_frame_record(const std::string& line, const std::string& file,
                                      size_t line_no) {
    try {
        nlohmann::json j = nlohmann::json::parse(line);
        FrameRecord r;
        r.frame = j.at("frame").get<uint32_t>();
        r.mode = j.at("mode").get<std::string>();
        r.id = j.at("id").get<int>();
        r.lateral_mm = j.at("lateral_mm").get<double>();
        r.axial_mm = j.at("axial_mm").get<double>();
        r.score = j.at("score").get<double>();
        return r;
    } catch (const std::exception& e) {
        std::ostringstream os;
        os << "detection log " << file << ": bad record at line " << line_no << ": " << e.what();
        throw std::runtime_error(os.str());
    }
}

struct TrialOutcome {
    int id = 0;
    double depth_mm = 0.0;
    int trial = 0;
    TrialReport report;
    std::vector<FrameRecord> records;
    std::vector<std::optional<Detection>> per_frame; // the configured mode's detection
    std::vector<int> freewheel_ids;                  // 0 = none, per frame
};

struct PreparedExperiment {
    Scene base_scene;
    Codebook codebook;
    ReferenceSet refs;
    DetectorConfig detector;
};

inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg) {
    PreparedExperiment prep;
    prep.base_scene = scene_from_json_file(cfg.scene_path);
    prep.codebook = load_codebook(cfg.codebook_path);
    prep.refs = build_references(prep.codebook, cfg.clip_template, prep.base_scene.fs_mhz);
    prep.detector = cfg.detector;
    if (cfg.auto_axial_offset) {
        prep.detector.axial_offset_mm = calibrate_axial_offset(
            prep.base_scene, cfg.clip_template, prep.codebook, prep.refs, cfg.beamform,
            prep.detector);
    }
    for (int id : cfg.ids)
        if (id < 1 || static_cast<size_t>(id) > prep.codebook.codes.size())
            throw std::runtime_error("experiment: id " + std::to_string(id) + " not in codebook");
    return prep;
}

namespace detail {

inline uint64_t depth_key(double depth_mm) { return std::bit_cast<uint64_t>(depth_mm); }

inline int nearest_line(const BeamformedImage& img, double x_mm) {
    int best = 0;
    double bd = 1e300;
    for (int l = 0; l < img.n_lines; ++l) {
        double d = std::abs(img.line_x_mm(l) - x_mm);
        if (d < bd) {
            bd = d;
            best = l;
        }
    }
    return best;
}

} // namespace detail

// Runs one (id, depth, trial): frames_per_trial PI pairs through beamforming
// and detection. Frames are independent and may run on several workers; the
// per-frame seeds make the result identical for any worker count.
inline TrialOutcome run_trial(const ExperimentConfig& cfg, const PreparedExperiment& prep, int id,
                              double depth_mm, int trial,
                              std::vector<BeamformedImage>* save_bmode = nullptr,
                              std::vector<RfFrame>* save_rf = nullptr) {
    Scene scene = prep.base_scene;
    scene.clips.clear();
    ClipInstance inst;
    inst.cfg = cfg.clip_template;
    inst.cfg.id = id;
    inst.cfg.x_mm = 0.0;
    inst.cfg.z_mm = depth_mm;
    scene.clips.push_back(inst);
    bind_codebook(scene, prep.codebook);
    double ns = cfg.noise_std_for_depth(depth_mm);
    if (ns >= 0.0) scene.noise_std = ns;
    scene.rng_seed = derive_seed({cfg.rng_seed, static_cast<uint64_t>(id),
                                  detail::depth_key(depth_mm), static_cast<uint64_t>(trial)});
    scene.validate();

    const int nf = cfg.frames_per_trial;
    TrialOutcome out;
    out.id = id;
    out.depth_mm = depth_mm;
    out.trial = trial;
    out.records.resize(static_cast<size_t>(nf));
    out.per_frame.resize(static_cast<size_t>(nf));
    out.freewheel_ids.assign(static_cast<size_t>(nf), 0);

    // SNR needs the frame average only on the signal line and the shifted
    // background line; keeping per-frame copies of those two lines lets the
    // average be reduced in frame order, independent of worker scheduling.
    const int n_lines = scene.geometry.n_elements;
    int sig_line = 0;
    {
        double best = 1e300;
        for (int l = 0; l < n_lines; ++l) {
            double x = (static_cast<double>(l) - (n_lines - 1) / 2.0) * scene.geometry.pitch_mm;
            if (std::abs(x) < best) {
                best = std::abs(x);
                sig_line = l;
            }
        }
    }
    const int noi_line = snr_noise_line(sig_line, n_lines, 20);
    std::vector<std::vector<double>> sig_rows(static_cast<size_t>(nf)), noi_rows(static_cast<size_t>(nf));
    if (save_rf) save_rf->resize(static_cast<size_t>(nf) * 2);

    parallel_for(static_cast<size_t>(nf), [&](size_t f) {
        Scene local = scene; // private clip state per frame
        auto [pos, neg] = simulate_pi_pair(local, static_cast<uint32_t>(f));
        RfFrame summed = pi_sum(pos, neg);
        BeamformedImage img =
            das_beamform(summed, local.geometry, local.sound_speed_m_s, cfg.beamform, 1);
        img.frame_index = static_cast<uint32_t>(f);
        FrameDetections det = detect_all(img, prep.refs, prep.detector, id, 1);

        std::optional<Detection> chosen;
        double fallback_score = 0.0;
        switch (cfg.mode) {
            case DetectMode::selected:
                chosen = det.selected;
                fallback_score = det.peaks[static_cast<size_t>(id) - 1].score;
                break;
            case DetectMode::freewheel:
                chosen = det.freewheel;
                for (const auto& p : det.peaks) fallback_score = std::max(fallback_score, p.score);
                break;
            case DetectMode::multi:
                for (const auto& m : det.multi)
                    if (m.id == id) chosen = m;
                fallback_score = det.peaks[static_cast<size_t>(id) - 1].score;
                break;
        }
        FrameRecord rec;
        rec.frame = static_cast<uint32_t>(f);
        rec.mode = to_string(cfg.mode);
        if (chosen) {
            rec.id = chosen->id;
            rec.lateral_mm = chosen->lateral_mm;
            rec.axial_mm = chosen->axial_mm;
            rec.score = chosen->score;
        } else {
            rec.id = 0; // the paper plots failed detections at the origin
            rec.lateral_mm = 0.0;
            rec.axial_mm = 0.0;
            rec.score = fallback_score;
        }
        out.records[f] = std::move(rec);
        out.per_frame[f] = chosen;
        out.freewheel_ids[f] = det.freewheel ? det.freewheel->id : 0;

        sig_rows[f].resize(img.depth_samples);
        noi_rows[f].resize(img.depth_samples);
        for (size_t d = 0; d < img.depth_samples; ++d) {
            sig_rows[f][d] = img.at(sig_line, d);
            noi_rows[f][d] = img.at(noi_line, d);
        }
        if (save_bmode && f == 0) {
            RfFrame diff = pi_diff(pos, neg);
            auto bimg = das_beamform(diff, local.geometry, local.sound_speed_m_s, cfg.beamform, 1);
            bimg.source_kind = SourceKind::subtracted;
            save_bmode->push_back(std::move(bimg));
        }
        if (save_rf) {
            (*save_rf)[2 * f] = std::move(pos);
            (*save_rf)[2 * f + 1] = std::move(neg);
        }
    }, cfg.workers);

    // per-trial statistics against the clip's true position
    out.report = error_stats(out.per_frame, {0.0, depth_mm});
    out.report.id = id;
    out.report.depth_mm = depth_mm;
    auto conf = confusion_histogram(out.freewheel_ids, id,
                                    static_cast<int>(prep.codebook.codes.size()));
    out.report.confusion_row = conf.counts;

    // Eq. 1 SNR on the frame-averaged lines, reduced in frame order
    const size_t n_depth = sig_rows[0].size();
    std::vector<double> sig_avg(n_depth, 0.0), noi_avg(n_depth, 0.0);
    for (int f = 0; f < nf; ++f) {
        for (size_t d = 0; d < n_depth; ++d) {
            sig_avg[d] += sig_rows[static_cast<size_t>(f)][d];
            noi_avg[d] += noi_rows[static_cast<size_t>(f)][d];
        }
    }
    for (size_t d = 0; d < n_depth; ++d) {
        sig_avg[d] /= nf;
        noi_avg[d] /= nf;
    }
    const double c = scene.c_mm_us();
    const auto lo = static_cast<size_t>(std::max(0.0, (depth_mm - 1.0) * 2.0 * scene.fs_mhz / c));
    auto hi = static_cast<size_t>((depth_mm + 13.0) * 2.0 * scene.fs_mhz / c);
    hi = std::min(hi, n_depth);
    out.report.snr_db = std::numeric_limits<double>::quiet_NaN();
    if (lo < hi) {
        const double s2 = detail::variance(std::span<const double>(sig_avg).subspan(lo, hi - lo));
        const double n2 = detail::variance(std::span<const double>(noi_avg).subspan(lo, hi - lo));
        if (s2 > n2 && n2 > 0.0) out.report.snr_db = 10.0 * std::log10(s2 / n2 - 1.0);
    }
    return out;
}

namespace detail {

inline std::string trial_stem(int id, double depth_mm, int trial) {
    std::ostringstream os;
    os << "trial_id" << id << "_depth" << format_double(depth_mm) << "_t" << trial;
    return os.str();
}

} // namespace detail

inline void write_trial_outputs(const ExperimentConfig& cfg, const TrialOutcome& t) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string stem = detail::trial_stem(t.id, t.depth_mm, t.trial);

    std::ofstream log(fs::path(cfg.out_dir) / (stem + ".jsonl"), std::ios::binary);
    if (!log) throw std::runtime_error("experiment: cannot write log for " + stem);
    for (const auto& r : t.records) log << r.to_json_line() << "\n";

    nlohmann::json meta = trial_report_to_json(t.report);
    meta["trial"] = t.trial;
    meta["mode"] = to_string(cfg.mode);
    meta["clip_x_mm"] = 0.0;
    meta["clip_z_mm"] = t.depth_mm;
    std::ofstream mf(fs::path(cfg.out_dir) / (stem + ".meta.json"), std::ios::binary);
    mf << meta.dump(2) << "\n";
}

struct ExperimentSummary {
    long long total_frames = 0;
    long long total_detections = 0;
    double overall_detection_rate = 0.0;
    std::vector<TrialOutcome> trials;
};

// Full run: every (id, depth, trial) cell, logs and metadata written per
// trial, timestamps confined to run_meta.json.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, bool progress = true) {
    cfg.validate();
    PreparedExperiment prep = prepare_experiment(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    ExperimentSummary summary;
    for (double depth : cfg.depths_mm) {
        for (int id : cfg.ids) {
            for (int trial = 0; trial < cfg.n_trials; ++trial) {
                std::vector<BeamformedImage> bmode;
                std::vector<RfFrame> rf;
                TrialOutcome t = run_trial(cfg, prep, id, depth, trial,
                                           trial == 0 ? &bmode : nullptr,
                                           cfg.save_rf ? &rf : nullptr);
                write_trial_outputs(cfg, t);
                if (!bmode.empty()) {
                    std::ostringstream os;
                    os << "bmode_id" << id << "_depth" << detail::format_double(depth) << ".usbf";
                    save_bf_image((fs::path(cfg.out_dir) / os.str()).string(), bmode.front());
                }
                if (cfg.save_rf) {
                    fs::create_directories(fs::path(cfg.out_dir) / "rf");
                    for (size_t i = 0; i < rf.size(); ++i) {
                        std::ostringstream os;
                        os << detail::trial_stem(id, depth, trial) << "_acq" << i << ".usrf";
                        save_rf_frame((fs::path(cfg.out_dir) / "rf" / os.str()).string(), rf[i]);
                    }
                }
                summary.total_frames += t.report.n_frames;
                summary.total_detections += t.report.detections;
                if (progress) {
                    std::fprintf(stderr, "[run] id %d depth %s trial %d: rate %.0f%% snr %s\n", id,
                                 detail::format_double(depth).c_str(), trial,
                                 100.0 * t.report.detection_rate,
                                 std::isfinite(t.report.snr_db)
                                     ? detail::format_double(t.report.snr_db).c_str()
                                     : "n/a");
                }
                summary.trials.push_back(std::move(t));
            }
        }
    }
    summary.overall_detection_rate =
        summary.total_frames > 0
            ? static_cast<double>(summary.total_detections) / static_cast<double>(summary.total_frames)
            : 0.0;

    nlohmann::json rm;
    rm["timestamp_utc"] = static_cast<long long>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    rm["config"] = {{"scene", cfg.scene_path},
                    {"codebook", cfg.codebook_path},
                    {"rng_seed", cfg.rng_seed},
                    {"mode", to_string(cfg.mode)},
                    {"frames_per_trial", cfg.frames_per_trial},
                    {"n_trials", cfg.n_trials}};
    rm["overall_detection_rate"] = summary.overall_detection_rate;
    std::ofstream rmf(fs::path(cfg.out_dir) / "run_meta.json", std::ios::binary);
    rmf << rm.dump(2) << "\n";
    return summary;
}

// --- threshold sweep ----------------------------------------------------------

struct SweepRow {
    double threshold = 0.0;
    double detection_rate = 0.0;
    double false_id_rate = 0.0;
};

inline std::vector<SweepRow> sweep_thresholds_over_peaks(
    const std::vector<std::vector<IdPeak>>& per_frame_peaks, int transmitted_id,
    std::span<const double> grid) {
    std::vector<SweepRow> rows;
    for (double tau : grid) {
        long long det = 0, wrong = 0;
        for (const auto& peaks : per_frame_peaks) {
            int best = 0;
            for (size_t q = 0; q < peaks.size(); ++q) {
                if (peaks[q].line < 0 || peaks[q].score < tau) continue;
                if (best == 0 || peaks[q].score > peaks[static_cast<size_t>(best) - 1].score)
                    best = static_cast<int>(q) + 1;
            }
            if (best != 0) {
                ++det;
                if (best != transmitted_id) ++wrong;
            }
        }
        SweepRow r;
        r.threshold = tau;
        r.detection_rate = per_frame_peaks.empty()
                               ? 0.0
                               : static_cast<double>(det) / static_cast<double>(per_frame_peaks.size());
        r.false_id_rate = det > 0 ? static_cast<double>(wrong) / static_cast<double>(det) : 0.0;
        rows.push_back(r);
    }
    return rows;
}

// Re-runs detection over the frames of one (id, depth) trial across a
// threshold grid. Frames are re-simulated from the trial's seed (identical to
// the ones cmd_run produced) unless pre-beamformed images are supplied.
inline std::vector<SweepRow> threshold_sweep_trial(const ExperimentConfig& cfg, int id,
                                                   double depth_mm, int trial,
                                                   std::span<const double> grid,
                                                   const std::vector<BeamformedImage>* stored = nullptr) {
    PreparedExperiment prep = prepare_experiment(cfg);
    std::vector<std::vector<IdPeak>> per_frame;
    if (stored) {
        for (const auto& img : *stored)
            per_frame.push_back(detail::compute_id_peaks(img, prep.refs, prep.detector));
    } else {
        Scene scene = prep.base_scene;
        scene.clips.clear();
        ClipInstance inst;
        inst.cfg = cfg.clip_template;
        inst.cfg.id = id;
        inst.cfg.z_mm = depth_mm;
        scene.clips.push_back(inst);
        bind_codebook(scene, prep.codebook);
        double ns = cfg.noise_std_for_depth(depth_mm);
        if (ns >= 0.0) scene.noise_std = ns;
        scene.rng_seed = derive_seed({cfg.rng_seed, static_cast<uint64_t>(id),
                                      detail::depth_key(depth_mm), static_cast<uint64_t>(trial)});
        scene.validate();
        per_frame.resize(static_cast<size_t>(cfg.frames_per_trial));
        parallel_for(static_cast<size_t>(cfg.frames_per_trial), [&](size_t f) {
            Scene local = scene;
            auto [pos, neg] = simulate_pi_pair(local, static_cast<uint32_t>(f));
            auto img = das_beamform(pi_sum(pos, neg), local.geometry, local.sound_speed_m_s,
                                    cfg.beamform, 1);
            per_frame[f] = detail::compute_id_peaks(img, prep.refs, prep.detector, 0, 1);
        }, cfg.workers);
    }
    return sweep_thresholds_over_peaks(per_frame, id, grid);
}


// --- reports -------------------------------------------------------------------

struct TrialMeta {
    int id = 0;
    double depth_mm = 0.0;
    int trial = 0;
    int n_frames = 0;
    int detections = 0;
    double detection_rate = 0.0;
    std::optional<double> mean_error_mm;
    std::optional<double> error_variance_mm2;
    std::vector<int> confusion_row;
    double snr_db = std::numeric_limits<double>::quiet_NaN();
    double clip_x_mm = 0.0, clip_z_mm = 0.0;
    std::string stem;
};

inline std::vector<TrialMeta> load_trial_metas(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<TrialMeta> metas;
    if (!fs::is_directory(dir)) throw std::runtime_error("report: '" + dir + "' is not a directory");
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("trial_", 0) == 0 && name.size() > 10 &&
            name.substr(name.size() - 10) == ".meta.json")
            paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        nlohmann::json j = parse_json_file(p.string());
        TrialMeta m;
        m.id = j.at("id").get<int>();
        m.depth_mm = j.at("depth_mm").get<double>();
        m.trial = j.at("trial").get<int>();
        m.n_frames = j.at("n_frames").get<int>();
        m.detections = j.at("detections").get<int>();
        m.detection_rate = j.at("detection_rate").get<double>();
        if (!j.at("mean_error_mm").is_null()) m.mean_error_mm = j["mean_error_mm"].get<double>();
        if (!j.at("error_variance_mm2").is_null())
            m.error_variance_mm2 = j["error_variance_mm2"].get<double>();
        m.confusion_row = j.at("confusion_row").get<std::vector<int>>();
        if (!j.at("snr_db").is_null()) m.snr_db = j["snr_db"].get<double>();
        m.clip_x_mm = j.value("clip_x_mm", 0.0);
        m.clip_z_mm = j.value("clip_z_mm", m.depth_mm);
        std::string name = p.filename().string();
        m.stem = name.substr(0, name.size() - 10);
        metas.push_back(std::move(m));
    }
    if (metas.empty()) throw std::runtime_error("report: no trial metadata found in '" + dir + "'");
    return metas;
}

inline std::vector<FrameRecord> load_detection_log(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("report: cannot open log '" + path + "'");
    std::vector<FrameRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        records.push_back(parse_frame_record(line, path, line_no));
    }
    return records;
}

// Table II analog: one aggregated row per (id, depth). Error statistics are
// unweighted means over the trials that had at least one detection; the rate
// averages over every trial.
inline std::string error_table_csv(const std::vector<TrialMeta>& metas) {
    std::map<std::pair<double, int>, std::vector<const TrialMeta*>> groups;
    for (const auto& m : metas) groups[{m.depth_mm, m.id}].push_back(&m);
    std::ostringstream os;
    os << "id,depth_mm,n_trials,n_trials_with_detections,mean_error_mm,error_variance_mm2,"
          "detection_rate_pct\n";
    for (const auto& [key, trials] : groups) {
        std::vector<TrialReport> reports;
        for (const auto* m : trials) {
            TrialReport r;
            r.id = m->id;
            r.depth_mm = m->depth_mm;
            r.n_frames = m->n_frames;
            r.detections = m->detections;
            r.detection_rate = m->detection_rate;
            r.mean_error_mm = m->mean_error_mm;
            r.error_variance_mm2 = m->error_variance_mm2;
            reports.push_back(r);
        }
        auto agg = aggregate(reports);
        os << key.second << "," << detail::format_double(key.first) << "," << agg.n_trials << ","
           << agg.n_trials_with_detections << "," << optional_to_csv(agg.mean_error_mm) << ","
           << optional_to_csv(agg.mean_error_variance_mm2) << ","
           << detail::format_double(100.0 * agg.mean_detection_rate) << "\n";
    }
    return os.str();
}

// Table I analog: mean Eq. 1 SNR per (id, depth) across trials.
inline std::string snr_table_csv(const std::vector<TrialMeta>& metas) {
    std::map<std::pair<int, double>, std::pair<double, int>> acc;
    for (const auto& m : metas) {
        if (!std::isfinite(m.snr_db)) continue;
        auto& [sum, count] = acc[{m.id, m.depth_mm}];
        sum += m.snr_db;
        ++count;
    }
    std::ostringstream os;
    os << "id,depth_mm,snr_db\n";
    for (const auto& [key, val] : acc)
        os << key.first << "," << detail::format_double(key.second) << ","
           << detail::format_double(val.first / val.second) << "\n";
    return os.str();
}

// Fig. 5 analog: per transmitted id, counts of each calculated id plus the
// failed tally, summed across trials at one depth.
inline std::string confusion_csv(const std::vector<TrialMeta>& metas, double depth_mm) {
    size_t n_ids = 0;
    for (const auto& m : metas) n_ids = std::max(n_ids, m.confusion_row.size());
    std::map<int, std::vector<long long>> rows; // transmitted id -> counts + failed
    for (const auto& m : metas) {
        if (std::abs(m.depth_mm - depth_mm) > 1e-9) continue;
        auto& row = rows[m.id];
        row.resize(n_ids + 1, 0);
        for (size_t q = 0; q < m.confusion_row.size(); ++q) row[q] += m.confusion_row[q];
        long long detected = 0;
        for (int v : m.confusion_row) detected += v;
        row[n_ids] += m.n_frames - detected;
    }
    std::ostringstream os;
    os << "transmitted_id";
    for (size_t q = 1; q <= n_ids; ++q) os << ",calc_" << q;
    os << ",failed\n";
    for (const auto& [id, row] : rows) {
        os << id;
        for (long long v : row) os << "," << v;
        os << "\n";
    }
    return os.str();
}

namespace detail {

inline void heatmap_png(const std::string& out_path, const BeamformedImage& bmode,
                        const std::vector<FrameRecord>& records, double truth_x_mm,
                        double truth_z_mm) {
    const int depth_stride = 4;
    const int lat_scale = 4;
    const size_t h = bmode.depth_samples / depth_stride;
    const size_t w = static_cast<size_t>(bmode.n_lines) * lat_scale;
    double peak = 0.0;
    for (double v : bmode.values) peak = std::max(peak, std::abs(v));
    BeamformedImage scaled = bmode;
    if (peak > 0.0)
        for (auto& v : scaled.values) v /= peak;
    auto disp = envelope_bmode(scaled, 45.0);

    std::vector<uint8_t> rgb(w * h * 3, 0);
    for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
            int line = static_cast<int>(x / lat_scale);
            double v = disp[static_cast<size_t>(line) * bmode.depth_samples + y * depth_stride];
            auto g = static_cast<uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0);
            size_t o = (y * w + x) * 3;
            rgb[o] = rgb[o + 1] = rgb[o + 2] = g;
        }
    }
    const double dz = bmode.depth_mm(1.0) * depth_stride;
    auto to_px = [&](double x_mm, double z_mm, long long& px, long long& py) {
        double line = (x_mm / bmode.line_pitch_mm) + (bmode.n_lines - 1) / 2.0;
        px = std::llround(line * lat_scale);
        py = std::llround(z_mm / dz);
    };
    auto blend = [&](long long px, long long py, int radius, uint8_t r, uint8_t g, uint8_t b,
                     double alpha) {
        for (long long y = py - radius; y <= py + radius; ++y) {
            for (long long x = px - radius; x <= px + radius; ++x) {
                if (x < 0 || y < 0 || x >= static_cast<long long>(w) || y >= static_cast<long long>(h))
                    continue;
                size_t o = (static_cast<size_t>(y) * w + static_cast<size_t>(x)) * 3;
                rgb[o] = static_cast<uint8_t>(alpha * r + (1 - alpha) * rgb[o]);
                rgb[o + 1] = static_cast<uint8_t>(alpha * g + (1 - alpha) * rgb[o + 1]);
                rgb[o + 2] = static_cast<uint8_t>(alpha * b + (1 - alpha) * rgb[o + 2]);
            }
        }
    };
    for (const auto& rec : records) {
        long long px, py;
        to_px(rec.lateral_mm, rec.axial_mm, px, py);
        blend(px, py, 3, 255, 105, 180, 0.25); // low-opacity markers build a heat map
    }
    long long px, py;
    to_px(truth_x_mm, truth_z_mm, px, py);
    blend(px, py, 4, 0, 255, 64, 0.9);
    png::write_rgb(out_path, w, h, rgb);
}

inline void confusion_png(const std::string& out_path,
                          const std::map<int, std::vector<long long>>& rows, size_t n_ids) {
    const int cell = 28;
    const size_t w = (n_ids + 1) * cell, h = rows.size() * cell;
    std::vector<uint8_t> rgb(w * h * 3, 255);
    size_t r = 0;
    for (const auto& [id, row] : rows) {
        long long total = 0;
        for (long long v : row) total += v;
        for (size_t q = 0; q < row.size() && q < n_ids + 1; ++q) {
            double frac = total > 0 ? static_cast<double>(row[q]) / static_cast<double>(total) : 0.0;
            auto shade = static_cast<uint8_t>(255.0 * (1.0 - frac));
            bool diag = q == static_cast<size_t>(id - 1);
            for (int y = 1; y < cell - 1; ++y) {
                for (int x = 1; x < cell - 1; ++x) {
                    size_t o = ((r * cell + y) * w + q * cell + x) * 3;
                    rgb[o] = shade;
                    rgb[o + 1] = diag ? 255 : shade;
                    rgb[o + 2] = shade;
                }
            }
        }
        ++r;
    }
    png::write_rgb(out_path, w, h, rgb);
}

} // namespace detail

// Emits the Table I/II-style CSVs, confusion data, and best-effort plots from
// the artifacts of a previous run.
inline void generate_report(const std::string& run_dir, const std::string& report_dir) {
    namespace fs = std::filesystem;
    auto metas = load_trial_metas(run_dir);
    fs::create_directories(report_dir);

    auto write_text = [&](const std::string& name, const std::string& text) {
        std::ofstream f(fs::path(report_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("report: cannot write " + name);
        f << text;
    };
    write_text("error_table.csv", error_table_csv(metas));
    write_text("snr_table.csv", snr_table_csv(metas));

    std::vector<double> depths;
    size_t n_ids = 0;
    for (const auto& m : metas) {
        if (std::find(depths.begin(), depths.end(), m.depth_mm) == depths.end())
            depths.push_back(m.depth_mm);
        n_ids = std::max(n_ids, m.confusion_row.size());
    }
    std::sort(depths.begin(), depths.end());
    for (double depth : depths) {
        std::string csv = confusion_csv(metas, depth);
        write_text("confusion_depth" + detail::format_double(depth) + ".csv", csv);
        std::map<int, std::vector<long long>> rows;
        for (const auto& m : metas) {
            if (std::abs(m.depth_mm - depth) > 1e-9) continue;
            auto& row = rows[m.id];
            row.resize(n_ids + 1, 0);
            for (size_t q = 0; q < m.confusion_row.size(); ++q) row[q] += m.confusion_row[q];
            long long detected = 0;
            for (int v : m.confusion_row) detected += v;
            row[n_ids] += m.n_frames - detected;
        }
        detail::confusion_png(
            (fs::path(report_dir) / ("confusion_depth" + detail::format_double(depth) + ".png"))
                .string(),
            rows, n_ids);
    }

    // heat-map overlays where a B-mode background was stored
    for (const auto& m : metas) {
        if (m.trial != 0) continue;
        std::ostringstream bm;
        bm << "bmode_id" << m.id << "_depth" << detail::format_double(m.depth_mm) << ".usbf";
        fs::path bpath = fs::path(run_dir) / bm.str();
        if (!fs::exists(bpath)) continue;
        auto bmode = load_bf_image(bpath.string());
        std::vector<FrameRecord> records;
        for (const auto& m2 : metas) {
            if (m2.id != m.id || m2.depth_mm != m.depth_mm) continue;
            auto logpath = fs::path(run_dir) / (m2.stem + ".jsonl");
            auto recs = load_detection_log(logpath.string());
            records.insert(records.end(), recs.begin(), recs.end());
        }
        std::ostringstream out;
        out << "heatmap_id" << m.id << "_depth" << detail::format_double(m.depth_mm) << ".png";
        detail::heatmap_png((fs::path(report_dir) / out.str()).string(), bmode, records, m.clip_x_mm,
                            m.clip_z_mm);
    }

    // overall summary
    long long frames = 0, detections = 0;
    for (const auto& m : metas) {
        frames += m.n_frames;
        detections += m.detections;
    }
    nlohmann::json summary;
    summary["total_frames"] = frames;
    summary["total_detections"] = detections;
    summary["overall_detection_rate"] =
        frames > 0 ? static_cast<double>(detections) / static_cast<double>(frames) : 0.0;
    write_text("summary.json", summary.dump(2) + "\n");
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "threshold,detection_rate,false_id_rate\n";
    for (const auto& r : rows)
        os << detail::format_double(r.threshold) << "," << detail::format_double(r.detection_rate)
           << "," << detail::format_double(r.false_id_rate) << "\n";
    return os.str();
}

} // namespace usid
