#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "usid/codebook.hpp"
#include "usid/experiment.hpp"

namespace {

std::string g_cli;
std::string g_configs;

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    fs::path out = fs::temp_directory_path() / ("usid_cli_out_" + std::to_string(counter++) + ".txt");
    std::string cmd = g_cli + " " + args + " > " + out.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream f(out);
    std::ostringstream os;
    os << f.rdbuf();
    r.output = os.str();
    fs::remove(out);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

size_t count_lines(const fs::path& p) {
    std::ifstream f(p);
    std::string line;
    size_t n = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++n;
    return n;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("gen-codebook writes a loadable book and reports validation") {
    auto dir = fresh_dir("usid_cli_gen");
    auto out = dir / "book.txt";
    auto r = run_cli("gen-codebook --out " + out.string() + " --n-codes 3 --seed 5");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("PASS") != std::string::npos);
    auto cb = usid::load_codebook(out.string());
    CHECK(cb.codes.size() == 3);
    CHECK(cb.separation < 0.3);
}

TEST_CASE("gen-codebook: unwritable path exits with the I/O code") {
    auto r = run_cli("gen-codebook --out /nonexistent_dir_xyz/book.txt --n-codes 2 --seed 5");
    CHECK(r.exit_code == 2);
}

TEST_CASE("validate: shipped default book passes at 0.3; duplicate code fails") {
    auto r = run_cli("validate --codebook " + (fs::path(g_configs) / "codebook_default.txt").string() +
                     " --threshold 0.3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("PASS") != std::string::npos);

    auto dir = fresh_dir("usid_cli_dup");
    auto cb = usid::build_codebook(2, 5);
    cb.codes[1].chips = cb.codes[0].chips;
    usid::save_codebook((dir / "dup.txt").string(), cb);
    auto bad = run_cli("validate --codebook " + (dir / "dup.txt").string() + " --threshold 0.3");
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("FAIL") != std::string::npos);
}

TEST_CASE("run: single frame produces exactly one record") {
    auto dir = fresh_dir("usid_cli_one");
    auto cfg = (fs::path(g_configs) / "experiment_smoke.json").string();
    auto r = run_cli("run --config " + cfg + " --frames 1 --ids 3 --depths 23 --trials 1 --out " +
                     dir.string());
    REQUIRE(r.exit_code == 0);
    auto log = dir / "trial_id3_depth23_t0.jsonl";
    REQUIRE(fs::exists(log));
    CHECK(count_lines(log) == 1);
}

TEST_CASE("run: identical seeds give byte-identical logs for 1 and N workers") {
    auto cfg = (fs::path(g_configs) / "experiment_smoke.json").string();
    auto d1 = fresh_dir("usid_cli_det1");
    auto d2 = fresh_dir("usid_cli_det2");
    auto r1 = run_cli("run --config " + cfg + " --frames 4 --workers 1 --out " + d1.string());
    auto r2 = run_cli("run --config " + cfg + " --frames 4 --workers 2 --out " + d2.string());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    for (const char* stem : {"trial_id2_depth23_t0", "trial_id3_depth23_t0"}) {
        CHECK(slurp(d1 / (std::string(stem) + ".jsonl")) ==
              slurp(d2 / (std::string(stem) + ".jsonl")));
        CHECK(slurp(d1 / (std::string(stem) + ".meta.json")) ==
              slurp(d2 / (std::string(stem) + ".meta.json")));
    }
}

TEST_CASE("report: tables from run artifacts; failures reported cleanly") {
    auto cfg = (fs::path(g_configs) / "experiment_smoke.json").string();
    auto dir = fresh_dir("usid_cli_rep");
    auto rep = fresh_dir("usid_cli_rep_out");
    auto r = run_cli("run --config " + cfg + " --out " + dir.string());
    REQUIRE(r.exit_code == 0);
    auto rr = run_cli("report --run-dir " + dir.string() + " --out " + rep.string());
    REQUIRE(rr.exit_code == 0);
    // 2 ids x 1 depth = 2 aggregated rows + header
    CHECK(count_lines(rep / "error_table.csv") == 3);
    CHECK(fs::exists(rep / "snr_table.csv"));
    CHECK(fs::exists(rep / "confusion_depth23.csv"));
    CHECK(fs::exists(rep / "summary.json"));

    SUBCASE("empty run dir exits with a message") {
        auto empty = fresh_dir("usid_cli_repempty");
        auto bad = run_cli("report --run-dir " + empty.string());
        CHECK(bad.exit_code == 2);
        CHECK(bad.output.find("no trial metadata") != std::string::npos);
    }

    SUBCASE("corrupted log line is named") {
        auto log = dir / "trial_id2_depth23_t0.jsonl";
        std::string text = slurp(log);
        {
            std::ofstream f(log, std::ios::binary);
            f << text << "{ broken\n";
        }
        auto bad = run_cli("report --run-dir " + dir.string() + " --out " + rep.string());
        CHECK(bad.exit_code == 2);
        CHECK(bad.output.find("line 7") != std::string::npos);
    }
}

TEST_CASE("sweep: rates are monotone and vanish at extreme thresholds") {
    auto cfg = (fs::path(g_configs) / "experiment_smoke.json").string();
    auto dir = fresh_dir("usid_cli_sweep");
    auto out = dir / "sweep.csv";
    auto r = run_cli("sweep --config " + cfg + " --id 3 --depth 23 --thresholds 0.1 0.3 0.5 0.999 --out " +
                     out.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream f(out);
    std::string header;
    std::getline(f, header);
    CHECK(header == "threshold,detection_rate,false_id_rate");
    double prev_rate = 1.1, rate = 0, tau = 0, fid = 0;
    char comma;
    std::vector<double> rates;
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream is(line);
        is >> tau >> comma >> rate >> comma >> fid;
        CHECK(rate <= prev_rate);
        prev_rate = rate;
        rates.push_back(rate);
    }
    REQUIRE(rates.size() == 4);
    CHECK(rates.back() < 0.05); // threshold 0.999
}

int main(int argc, char** argv) {
    doctest::Context ctx;
    std::vector<char*> rest;
    for (int i = 0; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) {
            g_cli = argv[++i];
        } else if (a == "--configs" && i + 1 < argc) {
            g_configs = argv[++i];
        } else {
            rest.push_back(argv[i]);
        }
    }
    if (g_cli.empty() || g_configs.empty()) {
        std::fprintf(stderr, "usage: test_cli --cli <usid binary> --configs <configs dir>\n");
        return 2;
    }
    ctx.applyCommandLine(static_cast<int>(rest.size()), rest.data());
    return ctx.run();
}
