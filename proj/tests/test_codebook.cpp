#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "usid/codebook.hpp"
#include "usid/correlate.hpp"

using namespace usid;

namespace {

// Direct-sum oracle, independent of the FFT implementation path.
std::vector<double> oracle_xcorr(const std::vector<double>& a, const std::vector<double>& b,
                                 CorrMode mode) {
    const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
    double ea = 0.0, eb = 0.0;
    for (double v : a) ea += v * v;
    for (double v : b) eb += v * v;
    std::vector<double> out;
    for (int k = -(m - 1); k <= n - 1; ++k) {
        double r = 0.0;
        for (int i = 0; i < m; ++i) {
            int j = k + i;
            if (j >= 0 && j < n) r += a[j] * b[i];
        }
        double denom;
        if (mode == CorrMode::global) {
            denom = std::sqrt(ea * eb);
        } else {
            const bool a_longer = n >= m;
            double e_ov = 0.0;
            if (a_longer) {
                for (int j = std::max(0, k); j < std::min(n, m + k); ++j) e_ov += a[j] * a[j];
                denom = std::sqrt(eb * e_ov);
            } else {
                for (int i = std::max(0, -k); i < std::min(m, n - k); ++i) e_ov += b[i] * b[i];
                denom = std::sqrt(ea * e_ov);
            }
        }
        out.push_back(denom > 0.0 ? std::abs(r) / denom : 0.0);
    }
    return out;
}

// Cyclic +/-1 correlation, used as the m-sequence oracle.
double cyclic_corr(const std::vector<int8_t>& s, int lag) {
    const int n = static_cast<int>(s.size());
    int sum = 0;
    for (int i = 0; i < n; ++i) sum += int(s[i]) * int(s[(i + lag) % n]);
    return static_cast<double>(sum) / n;
}

std::vector<double> random_signal(std::mt19937& gen, size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

// frozen from the shipped defaults: build_codebook(8, 42)
constexpr double kDefaultBookSeparation = 0.28125; // 18/64

} // namespace

TEST_CASE("generate_mseq: degree 3 has the m-sequence autocorrelation") {
    auto seq = generate_mseq(3, {3, 2}, 0b001);
    REQUIRE(seq.size() == 7);
    CHECK(cyclic_corr(seq, 0) == doctest::Approx(1.0));
    for (int lag = 1; lag < 7; ++lag)
        CHECK(cyclic_corr(seq, lag) == doctest::Approx(-1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("generate_mseq: zero seed and unknown taps are rejected") {
    CHECK_THROWS_AS(generate_mseq(3, {3, 2}, 0), std::invalid_argument);
    CHECK_THROWS_AS(generate_mseq(3, {3}, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_mseq(6, {6, 4}, 1), std::invalid_argument);
}

TEST_CASE("generate_mseq: degree 6 balance") {
    auto seq = generate_mseq(6, {6, 5}, 1);
    REQUIRE(seq.size() == 63);
    int plus = 0, minus = 0;
    for (auto c : seq) (c > 0 ? plus : minus)++;
    CHECK(plus + minus == 63);
    CHECK(std::abs(plus - minus) == 1);
}

TEST_CASE("generate_mseq: every verified tap set yields a maximal sequence") {
    for (const auto& [deg, tap_sets] : mseq::primitive_taps()) {
        for (const auto& taps : tap_sets) {
            auto seq = generate_mseq(deg, taps, 1);
            const auto period = (size_t(1) << deg) - 1;
            REQUIRE(seq.size() == period);
            // the -1/N sidelobe at every nonzero cyclic lag is unique to
            // maximal sequences; non-primitive taps would repeat early
            for (size_t lag = 1; lag < period; ++lag)
                CHECK(cyclic_corr(seq, static_cast<int>(lag)) ==
                      doctest::Approx(-1.0 / static_cast<double>(period)).epsilon(1e-12));
        }
    }
}

TEST_CASE("xcorr_normalized: autocorrelation peaks at exactly 1 at lag 0") {
    std::mt19937 gen(11);
    auto a = random_signal(gen, 97);
    for (auto mode : {CorrMode::global, CorrMode::windowed}) {
        auto series = xcorr_normalized(a, a, mode);
        auto peak = series.peak();
        CHECK(peak.lag == 0);
        CHECK(peak.value == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("xcorr_normalized: invariant under positive scaling") {
    std::mt19937 gen(12);
    auto a = random_signal(gen, 64);
    auto b = random_signal(gen, 64);
    std::vector<double> b2(b.size());
    for (size_t i = 0; i < b.size(); ++i) b2[i] = 2.0 * b[i];
    auto s1 = xcorr_normalized(a, b, CorrMode::global);
    auto s2 = xcorr_normalized(a, b2, CorrMode::global);
    REQUIRE(s1.values.size() == s2.values.size());
    for (size_t i = 0; i < s1.values.size(); ++i)
        CHECK(s1.values[i] == doctest::Approx(s2.values[i]).epsilon(1e-12));
}

TEST_CASE("xcorr_normalized: FFT path matches the direct-sum oracle") {
    std::mt19937 gen(13);
    for (auto [n, m] : std::vector<std::pair<size_t, size_t>>{{64, 64}, {1024, 64}, {64, 1024}, {500, 171}}) {
        auto a = random_signal(gen, n);
        auto b = random_signal(gen, m);
        for (auto mode : {CorrMode::global, CorrMode::windowed}) {
            auto fftres = xcorr_normalized(a, b, mode);
            auto oracle = oracle_xcorr(a, b, mode);
            REQUIRE(fftres.values.size() == oracle.size());
            CHECK(fftres.lag_min == -(static_cast<int>(m) - 1));
            for (size_t i = 0; i < oracle.size(); ++i)
                CHECK(std::abs(fftres.values[i] - oracle[i]) < 1e-9);
        }
    }
}

TEST_CASE("xcorr_normalized: all-zero handling") {
    std::vector<double> z(16, 0.0), a(16, 0.0);
    a[3] = 1.0;
    CHECK_THROWS_AS(xcorr_normalized(z, z, CorrMode::global), std::invalid_argument);
    auto series = xcorr_normalized(a, z, CorrMode::global);
    for (double v : series.values) {
        CHECK(std::isfinite(v));
        CHECK(v == 0.0);
    }
}

TEST_CASE("codebook: negating a code leaves correlation magnitudes unchanged") {
    auto cb = build_codebook(2, 7, 200000);
    auto neg = cb.codes[1];
    for (auto& c : neg.chips) c = static_cast<int8_t>(-c);
    auto p1 = detail::max_abs_chip_xcorr(cb.codes[0].chips, cb.codes[1].chips);
    auto p2 = detail::max_abs_chip_xcorr(cb.codes[0].chips, neg.chips);
    CHECK(p1.value == p2.value);
}

TEST_CASE("build_codebook: single code has separation 0") {
    auto cb = build_codebook(1, 5);
    REQUIRE(cb.codes.size() == 1);
    CHECK(cb.codes[0].id == 1);
    CHECK(cb.separation == 0.0);
    auto rep = validate_codebook(cb, 0.3);
    CHECK(rep.pass);
    CHECK(rep.pairs.empty());
}

TEST_CASE("build_codebook: default book is deterministic and within bound") {
    auto cb1 = build_codebook(8, 42);
    auto cb2 = build_codebook(8, 42);
    REQUIRE(cb1.codes.size() == 8);
    CHECK(cb1.separation < 0.3);
    CHECK(cb1.separation > 0.0);
    for (size_t i = 0; i < 8; ++i) {
        CHECK(cb1.codes[i].id == static_cast<int>(i) + 1);
        CHECK(cb1.codes[i].chips == cb2.codes[i].chips);
    }
    CHECK(cb1.separation == cb2.separation);

    // golden regression value for the shipped default (n=8, seed=42)
    CHECK(cb1.separation == doctest::Approx(kDefaultBookSeparation).epsilon(1e-12));
}

TEST_CASE("build_codebook: attempts exhausted is an error reporting progress") {
    CHECK_THROWS_WITH_AS(build_codebook(1000000, 1, 50),
                         doctest::Contains("max_attempts"), std::runtime_error);
}

TEST_CASE("validate_codebook: duplicated code fails with value 1 at lag 0") {
    auto cb = build_codebook(3, 9);
    cb.codes[2].chips = cb.codes[0].chips;
    auto rep = validate_codebook(cb, 0.3);
    CHECK_FALSE(rep.pass);
    CHECK(rep.separation == 1.0);
    bool found = false;
    for (const auto& p : rep.pairs)
        if (p.id_a == 1 && p.id_b == 3) {
            found = true;
            CHECK(p.max_corr == 1.0);
            CHECK(p.at_lag == 0);
            CHECK_FALSE(p.pass);
        }
    CHECK(found);
}

TEST_CASE("validate_codebook: report values equal a brute-force oracle") {
    auto cb = build_codebook(8, 42);
    auto rep = validate_codebook(cb, 0.3);
    CHECK(rep.pass);
    double oracle_sep = 0.0;
    for (const auto& p : rep.pairs) {
        const auto& a = cb.codes[static_cast<size_t>(p.id_a) - 1].chips;
        const auto& b = cb.codes[static_cast<size_t>(p.id_b) - 1].chips;
        double best = 0.0;
        for (int k = -63; k <= 63; ++k) {
            int sum = 0;
            for (int i = 0; i < 64; ++i) {
                int j = k + i;
                if (j >= 0 && j < 64) sum += int(a[j]) * int(b[i]);
            }
            best = std::max(best, std::abs(sum) / 64.0);
        }
        CHECK(p.max_corr == best); // integer-exact on both paths
        oracle_sep = std::max(oracle_sep, best);
    }
    CHECK(rep.separation == oracle_sep);
    REQUIRE(rep.sidelobes.size() == 8);
    for (const auto& s : rep.sidelobes) CHECK(s.worst_off_peak < 1.0);
}

TEST_CASE("codebook text format round-trips byte-exact") {
    auto cb = build_codebook(4, 3);
    std::string text = codebook_to_text(cb);
    auto back = codebook_from_text(text);
    CHECK(codebook_to_text(back) == text);
    REQUIRE(back.codes.size() == 4);
    for (size_t i = 0; i < 4; ++i) CHECK(back.codes[i].chips == cb.codes[i].chips);
    CHECK(back.rng_seed == cb.rng_seed);
    CHECK(back.separation == cb.separation);
}

TEST_CASE("codebook text format rejects malformed input") {
    CHECK_THROWS(codebook_from_text("no header\n"));
    auto cb = build_codebook(2, 3);
    std::string text = codebook_to_text(cb);
    CHECK_THROWS(codebook_from_text(text + "9,++\n"));
}
