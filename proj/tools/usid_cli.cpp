// Command-line front end: codebook generation/validation, Monte-Carlo runs,
// report generation, and threshold sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "usid/codebook.hpp"
#include "usid/experiment.hpp"

using namespace usid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIoConfig = 2;

int cmd_gen_codebook(const std::string& out_path, int n_codes, uint64_t seed, double threshold,
                     int max_attempts, bool no_screen) {
    FilteredScreen screen;
    screen.enabled = !no_screen;
    Codebook cb;
    try {
        cb = build_codebook(n_codes, seed, max_attempts, threshold, screen);
    } catch (const std::runtime_error& e) {
        std::cerr << e.what() << "\n";
        return kExitValidation; // separation bound unmet
    }
    auto report = validate_codebook(cb, threshold);
    std::cout << report.to_string();
    save_codebook(out_path, cb);
    std::cout << "wrote " << cb.codes.size() << " codes to " << out_path << "\n";
    return report.pass ? kExitOk : kExitValidation;
}

int cmd_validate(const std::string& path, double threshold) {
    Codebook cb = load_codebook(path);
    auto report = validate_codebook(cb, threshold);
    std::cout << report.to_string();
    return report.pass ? kExitOk : kExitValidation;
}

int cmd_run(ExperimentConfig cfg) {
    auto summary = run_experiment(cfg);
    std::fprintf(stderr, "[run] done: %lld/%lld frames detected (%.1f%%), logs in %s\n",
                 summary.total_detections, summary.total_frames,
                 100.0 * summary.overall_detection_rate, cfg.out_dir.c_str());
    return kExitOk;
}

int cmd_report(const std::string& run_dir, const std::string& report_dir) {
    generate_report(run_dir, report_dir);
    std::cout << "report written to " << report_dir << "\n";
    return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, int id, double depth, int trial,
              const std::vector<double>& grid, const std::string& frames_dir,
              const std::string& out_file) {
    std::vector<SweepRow> rows;
    if (!frames_dir.empty()) {
        std::vector<BeamformedImage> images;
        std::vector<std::filesystem::path> paths;
        for (const auto& e : std::filesystem::directory_iterator(frames_dir))
            if (e.path().extension() == ".usbf") paths.push_back(e.path());
        std::sort(paths.begin(), paths.end());
        for (const auto& p : paths) images.push_back(load_bf_image(p.string()));
        if (images.empty()) throw std::runtime_error("sweep: no .usbf frames in " + frames_dir);
        rows = threshold_sweep_trial(cfg, id, depth, trial, grid, &images);
    } else {
        rows = threshold_sweep_trial(cfg, id, depth, trial, grid);
    }
    std::string csv = sweep_csv(rows);
    if (out_file.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(out_file, std::ios::binary);
        if (!f) throw std::runtime_error("sweep: cannot open '" + out_file + "'");
        f << csv;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"usid - ultrasound identification simulation toolkit"};
    app.require_subcommand(1);

    // gen-codebook
    auto* gen = app.add_subcommand("gen-codebook", "generate and validate a PN codebook");
    std::string gen_out = "codebook.txt";
    int gen_n = 8, gen_attempts = 400000;
    uint64_t gen_seed = 42;
    double gen_threshold = 0.3;
    bool gen_noscreen = false;
    gen->add_option("--out", gen_out, "output codebook file");
    gen->add_option("--n-codes", gen_n, "number of codes");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--threshold", gen_threshold, "max pairwise |xcorr| bound");
    gen->add_option("--max-attempts", gen_attempts, "search budget");
    gen->add_flag("--no-filter-screen", gen_noscreen,
                  "skip the crystal-filtered waveform screening");

    // validate
    auto* val = app.add_subcommand("validate", "check a codebook against a threshold");
    std::string val_path;
    double val_threshold = 0.3;
    val->add_option("--codebook", val_path, "codebook file")->required();
    val->add_option("--threshold", val_threshold, "separation threshold");

    // run
    auto* run = app.add_subcommand("run", "run the Monte-Carlo detection experiment");
    std::string run_config;
    std::string run_mode, run_out;
    uint64_t run_seed = 0;
    bool run_seed_set = false, run_save_rf = false;
    int run_frames = 0, run_trials = 0;
    unsigned run_workers = 0;
    std::vector<int> run_ids;
    std::vector<double> run_depths;
    double run_threshold = 0.0;
    run->add_option("--config", run_config, "experiment config JSON")->required();
    run->add_option_function<uint64_t>(
           "--seed", [&](uint64_t v) { run_seed = v; run_seed_set = true; }, "override rng seed");
    run->add_option("--mode", run_mode, "selected|freewheel|multi");
    run->add_option("--id", run_ids, "override ids to test");
    run->add_option("--ids", run_ids, "override ids to test");
    run->add_option("--depths", run_depths, "override depths (mm)");
    run->add_option("--frames", run_frames, "override frames per trial");
    run->add_option("--trials", run_trials, "override trial count");
    run->add_option("--threshold", run_threshold, "override ON threshold");
    run->add_option("--out", run_out, "override output directory");
    run->add_option("--workers", run_workers, "worker threads (0 = auto)");
    run->add_flag("--save-rf", run_save_rf, "persist raw RF frames");

    // report
    auto* rep = app.add_subcommand("report", "tables and plots from run artifacts");
    std::string rep_run = "usid_out", rep_out;
    rep->add_option("--run-dir", rep_run, "directory with run artifacts");
    rep->add_option("--out", rep_out, "report output directory (default <run-dir>/report)");

    // sweep
    auto* sw = app.add_subcommand("sweep", "detection rate vs ON threshold");
    std::string sw_config, sw_frames_dir, sw_out;
    int sw_id = 0, sw_trial = 0;
    double sw_depth = 0.0;
    std::vector<double> sw_grid;
    sw->add_option("--config", sw_config, "experiment config JSON")->required();
    sw->add_option("--id", sw_id, "transmitted id (default: first in config)");
    sw->add_option("--depth", sw_depth, "clip depth in mm (default: first in config)");
    sw->add_option("--trial", sw_trial, "trial index");
    sw->add_option("--thresholds", sw_grid, "threshold grid");
    sw->add_option("--frames-dir", sw_frames_dir, "use stored .usbf frames instead of simulating");
    sw->add_option("--out", sw_out, "CSV output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_codebook(gen_out, gen_n, gen_seed, gen_threshold, gen_attempts,
                                    gen_noscreen);
        if (val->parsed()) return cmd_validate(val_path, val_threshold);
        if (run->parsed()) {
            ExperimentConfig cfg = experiment_from_json_file(run_config);
            if (run_seed_set) cfg.rng_seed = run_seed;
            if (!run_mode.empty()) cfg.mode = detect_mode_from_string(run_mode);
            if (!run_ids.empty()) cfg.ids = run_ids;
            if (!run_depths.empty()) cfg.depths_mm = run_depths;
            if (run_frames > 0) cfg.frames_per_trial = run_frames;
            if (run_trials > 0) cfg.n_trials = run_trials;
            if (run_threshold > 0.0) cfg.detector.on_threshold = run_threshold;
            if (!run_out.empty()) cfg.out_dir = run_out;
            cfg.workers = run_workers;
            cfg.save_rf = cfg.save_rf || run_save_rf;
            cfg.validate();
            return cmd_run(cfg);
        }
        if (rep->parsed()) {
            std::string out = rep_out.empty()
                                  ? (std::filesystem::path(rep_run) / "report").string()
                                  : rep_out;
            return cmd_report(rep_run, out);
        }
        if (sw->parsed()) {
            ExperimentConfig cfg = experiment_from_json_file(sw_config);
            if (sw_id == 0) sw_id = cfg.ids.front();
            if (sw_depth == 0.0) sw_depth = cfg.depths_mm.front();
            if (sw_grid.empty())
                for (int i = 1; i <= 9; ++i) sw_grid.push_back(0.1 * i);
            return cmd_sweep(cfg, sw_id, sw_depth, sw_trial, sw_grid, sw_frames_dir, sw_out);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIoConfig;
    }
    return kExitOk;
}
